"""Exact derivatives of the losses with respect to program parameters.

The continuous parameters (draw-statement reals and translation-loop deltas)
are flattened into a vector; the loss pipeline is replayed over a taped copy
of that vector and reverse mode yields the full gradient in one pass. Unit
random draws, Chamfer nearest-neighbor matches, and union argmins are all
constants of the evaluation point, so the differentiated loss is the
piecewise-smooth branch active there.

``finite_difference_check`` verifies the analytic gradient slot by slot with
central differences and flags slots whose one-sided differences disagree,
i.e. where the finite-difference interval straddles a non-smooth locus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import tape as tp
from .dsl import Program, StatementRegistry, builtin_registry, parameter_groups
from .lowering import lower_with_values
from .losses import LossConfig, chamfer_values, coverage_values
from .renderer import PointCloud, RenderConfig, sample_with_values

__all__ = [
    "GradCheckReport",
    "GradientVector",
    "ParamSlot",
    "ParameterVector",
    "SlotCheck",
    "apply_parameters",
    "evaluate_loss",
    "extract_parameters",
    "finite_difference_check",
    "loss_with_gradient",
]

# Denominator floor when comparing gradients: keeps near-zero slots from
# turning finite-difference noise (~1e-10 for unit-scale losses) into large
# spurious relative errors.
_SCALE_FLOOR = 1e-3

# One-sided differences disagreeing by more than this relative amount mark a
# slot as sitting on a kink. Smooth slots disagree by O(h * f''), so a
# threshold at the tolerance itself would flag ordinary curvature; large
# derivative jumps are O(f') and clear this comfortably.
_BOUNDARY_RTOL = 1e-2


@dataclass(frozen=True)
class ParamSlot:
    """Flat-slot descriptor: ``statement`` is None for a translation loop's
    delta, in which case ``index`` is the delta component."""

    block: int
    statement: Optional[int]
    index: int


@dataclass(frozen=True)
class ParameterVector:
    values: np.ndarray
    layout: tuple[ParamSlot, ...]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class GradientVector:
    values: np.ndarray
    layout: tuple[ParamSlot, ...]

    def __len__(self) -> int:
        return len(self.values)


def extract_parameters(program: Program) -> ParameterVector:
    """Flatten the continuous parameters, lexicographic in (block, statement,
    parameter); loop counts and statement identities carry no slots."""
    values: list[float] = []
    layout: list[ParamSlot] = []
    for k, j, count in parameter_groups(program):
        block = program.blocks[k]
        group = block.loop_delta if j is None else block.body[j].params
        values.extend(group)
        layout.extend(ParamSlot(k, j, i) for i in range(count))
    return ParameterVector(np.asarray(values, dtype=np.float64), tuple(layout))


def apply_parameters(program: Program, pv: ParameterVector) -> Program:
    """Structural copy of ``program`` with its continuous parameters replaced."""
    if pv.layout != extract_parameters(program).layout:
        raise ValueError("parameter layout does not match the program")
    cursor = 0
    blocks = []
    for block in program.blocks:
        if block.kind == "translation-for":
            delta = tuple(float(x) for x in pv.values[cursor:cursor + 3])
            cursor += 3
            block = replace(block, loop_delta=delta)
        body = []
        for stmt in block.body:
            n = len(stmt.params)
            params = tuple(float(x) for x in pv.values[cursor:cursor + n])
            cursor += n
            body.append(replace(stmt, params=params))
        blocks.append(replace(block, body=tuple(body)))
    return Program(tuple(blocks))


# ---------------------------------------------------------------------------
# loss pipeline


def _pipeline(program, registry, values, target_points, loss_cfg, render_cfg, seed):
    pset = lower_with_values(program, registry, values)
    if loss_cfg.kind == "coverage":
        return coverage_values(pset.primitives, target_points, loss_cfg.coverage_power)
    sampled = sample_with_values(
        pset.primitives, render_cfg.count, seed, render_cfg.include_caps
    )
    return chamfer_values(sampled, target_points, loss_cfg)


def evaluate_loss(
    program: Program,
    target: PointCloud,
    loss_cfg: LossConfig,
    render_cfg: RenderConfig = RenderConfig(),
    seed: int = 0,
    registry: Optional[StatementRegistry] = None,
) -> float:
    """Forward-only pipeline: lower, sample (for Chamfer), reduce."""
    registry = registry or builtin_registry()
    values = extract_parameters(program).values
    out = _pipeline(program, registry, values, target.points, loss_cfg, render_cfg, seed)
    return float(tp.value_of(out))


def loss_with_gradient(
    program: Program,
    target: PointCloud,
    loss_cfg: LossConfig,
    render_cfg: RenderConfig = RenderConfig(),
    seed: int = 0,
    registry: Optional[StatementRegistry] = None,
) -> tuple[float, GradientVector]:
    """Loss plus its derivative with respect to every continuous parameter.

    The loss value is bit-identical to :func:`evaluate_loss` with the same
    seed: both run the same operations on the same operands.
    """
    registry = registry or builtin_registry()
    pv = extract_parameters(program)
    loss, grad = _loss_and_grad_values(
        program, registry, pv.values, target.points, loss_cfg, render_cfg, seed
    )
    return loss, GradientVector(grad, pv.layout)


def _loss_and_grad_values(program, registry, values, target_points, loss_cfg, render_cfg, seed):
    leaf = tp.Var(values)
    out = _pipeline(program, registry, leaf, target_points, loss_cfg, render_cfg, seed)
    tp.backward(out)
    grad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
    return float(out.value), grad


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass(frozen=True)
class SlotCheck:
    slot: ParamSlot
    analytic: float
    numeric: float
    relative_error: float
    boundary: bool


@dataclass(frozen=True)
class GradCheckReport:
    loss: float
    checks: tuple[SlotCheck, ...]
    tolerance: float

    @property
    def failures(self) -> tuple[SlotCheck, ...]:
        return tuple(c for c in self.checks if not c.boundary and c.relative_error >= self.tolerance)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> str:
        slots = [
            {
                "block": c.slot.block,
                "stmt": c.slot.statement,
                "param": c.slot.index,
                "analytic": c.analytic,
                "numeric": c.numeric,
                "relative_error": c.relative_error,
                "boundary": c.boundary,
            }
            for c in self.checks
        ]
        return json.dumps(
            {"loss": self.loss, "tolerance": self.tolerance, "slots": slots}, indent=2
        )


def finite_difference_check(
    program: Program,
    target: PointCloud,
    loss_cfg: LossConfig,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    render_cfg: RenderConfig = RenderConfig(),
    seed: int = 0,
    registry: Optional[StatementRegistry] = None,
) -> GradCheckReport:
    """Compare the analytic gradient against central differences per slot."""
    if h <= 0.0:
        raise ValueError("finite-difference step h must be positive")
    if tolerance <= 0.0:
        raise ValueError("tolerance must be positive")
    registry = registry or builtin_registry()
    pv = extract_parameters(program)
    loss, grad = _loss_and_grad_values(
        program, registry, pv.values, target.points, loss_cfg, render_cfg, seed
    )

    def forward(values: np.ndarray) -> float:
        out = _pipeline(program, registry, values, target.points, loss_cfg, render_cfg, seed)
        return float(tp.value_of(out))

    checks = []
    for i, slot in enumerate(pv.layout):
        bumped = pv.values.copy()

        def at(offset: float) -> float:
            bumped[i] = pv.values[i] + offset
            return forward(bumped)

        up, down = at(h), at(-h)
        numeric = (up - down) / (2.0 * h)
        # Non-smooth locus detection. A derivative jump makes the one-sided
        # differences disagree at the scale of the jump; a small branch flip
        # inside the interval (sampling reallocation, argmin switch) pollutes
        # the full-step and half-step central estimates differently, while
        # for smooth slots they agree to O(h^2 * f''').
        d_plus = (up - loss) / h
        d_minus = (loss - down) / h
        kink = abs(d_plus - d_minus) > _BOUNDARY_RTOL * max(
            abs(d_plus), abs(d_minus), _SCALE_FLOOR
        )
        half = (at(0.5 * h) - at(-0.5 * h)) / h
        drift = abs(numeric - half) > 0.5 * tolerance * max(
            abs(numeric), abs(half), _SCALE_FLOOR
        )
        analytic = float(grad[i])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), _SCALE_FLOOR)
        checks.append(SlotCheck(slot, analytic, numeric, rel, kink or drift))
    return GradCheckReport(loss, tuple(checks), tolerance)
