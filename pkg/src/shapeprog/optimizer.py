"""Gradient-descent fitting of program parameters to a target point cloud.

Updates run on the flat parameter vector; size-like slots (extents, radii,
heights) are clamped positive after every step so lowering never sees a
degenerate primitive. The best-loss iterate is returned, not the last one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dsl import Program, StatementRegistry, builtin_registry
from .gradients import ParameterVector, _loss_and_grad_values, apply_parameters, extract_parameters
from .losses import LossConfig
from .renderer import PointCloud, RenderConfig

__all__ = [
    "NonFiniteLossError",
    "OptimConfig",
    "fit",
    "size_slot_mask",
    "trace_to_csv",
    "trace_to_json",
]

SIZE_CLAMP = 1e-6

# Parameter indices that must stay positive, per archetype.
_SIZE_INDICES = {
    "cuboid-center": (3, 4, 5),
    "cuboid-corner": (3, 4, 5),
    "line-cylinder": (6,),
    "cylinder-center": (3, 4),
}


class NonFiniteLossError(Exception):
    def __init__(self, step: int, trace: list[float]):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.trace = trace


@dataclass(frozen=True)
class OptimConfig:
    steps: int = 200
    step_size: float = 0.02
    method: str = "adaptive"  # "gd" | "momentum" | "adaptive"
    reseed_per_step: bool = True
    convergence_tol: float = 0.0
    loss: LossConfig = field(default_factory=LossConfig)
    sample_count: int = 5000
    include_caps: bool = True
    seed: int = 0
    momentum: float = 0.9
    adaptive_beta2: float = 0.999
    adaptive_eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.convergence_tol < 0.0:
            raise ValueError("convergence_tol must be non-negative")
        if self.method not in ("gd", "momentum", "adaptive"):
            raise ValueError(f"unknown method {self.method!r}")


def size_slot_mask(program: Program, registry: StatementRegistry) -> np.ndarray:
    """Boolean mask over the flat layout marking size-like parameters."""
    layout = extract_parameters(program).layout
    mask = np.zeros(len(layout), dtype=bool)
    for i, slot in enumerate(layout):
        if slot.statement is None:
            continue
        stmt = program.blocks[slot.block].body[slot.statement]
        archetype = registry.resolve(stmt.def_name).archetype
        mask[i] = slot.index in _SIZE_INDICES[archetype]
    return mask


def fit(
    program: Program,
    target: PointCloud,
    cfg: OptimConfig = OptimConfig(),
    registry: Optional[StatementRegistry] = None,
) -> tuple[Program, list[float]]:
    """Fit the program's continuous parameters to the target.

    Returns the best-loss iterate and the per-step loss trace. Equal inputs,
    config, and seeds give identical results.
    """
    registry = registry or builtin_registry()
    if cfg.steps == 0:
        return program, []
    pv = extract_parameters(program)
    layout = pv.layout
    x = pv.values.copy()
    sizes = size_slot_mask(program, registry)
    render_cfg = RenderConfig(count=cfg.sample_count, include_caps=cfg.include_caps)

    velocity = np.zeros_like(x)
    second = np.zeros_like(x)
    best_loss = np.inf
    best_x = x.copy()
    trace: list[float] = []
    previous = None

    for step in range(cfg.steps):
        seed = cfg.seed + step if cfg.reseed_per_step else cfg.seed
        loss, grad = _loss_and_grad_values(
            program, registry, x, target.points, cfg.loss, render_cfg, seed
        )
        if not np.isfinite(loss):
            raise NonFiniteLossError(step, trace)
        trace.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_x = x.copy()

        if cfg.method == "gd":
            x = x - cfg.step_size * grad
        elif cfg.method == "momentum":
            velocity = cfg.momentum * velocity + grad
            x = x - cfg.step_size * velocity
        else:
            velocity = cfg.momentum * velocity + (1.0 - cfg.momentum) * grad
            second = cfg.adaptive_beta2 * second + (1.0 - cfg.adaptive_beta2) * grad * grad
            m_hat = velocity / (1.0 - cfg.momentum ** (step + 1))
            v_hat = second / (1.0 - cfg.adaptive_beta2 ** (step + 1))
            x = x - cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.adaptive_eps)
        x[sizes] = np.maximum(x[sizes], SIZE_CLAMP)

        if previous is not None and cfg.convergence_tol > 0.0:
            change = abs(previous - loss) / max(abs(previous), 1e-12)
            if change < cfg.convergence_tol:
                break
        previous = loss

    fitted = apply_parameters(program, ParameterVector(best_x, layout))
    return fitted, trace


def trace_to_csv(trace: list[float]) -> str:
    lines = ["step,loss"]
    lines += [f"{i},{loss!r}" for i, loss in enumerate(trace)]
    return "\n".join(lines) + "\n"


def trace_to_json(trace: list[float]) -> str:
    return json.dumps({"trace": [{"step": i, "loss": loss} for i, loss in enumerate(trace)]},
                      indent=2)
