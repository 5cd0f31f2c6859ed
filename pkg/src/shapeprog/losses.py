"""Reconstruction losses: directional/symmetric Chamfer and coverage.

Chamfer nearest neighbors are found exactly with a k-d tree; the squared
distances are then recomputed from the matched pairs so the forward value is
the same whether or not the points carry a tape. Reductions use numpy's
fixed pairwise summation, so results are run-to-run identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from scipy.spatial import cKDTree

from . import tape as tp
from .geometry import distance_primitive
from .lowering import PrimitiveSet, TransformedPrimitive
from .renderer import PointCloud

__all__ = ["LossConfig", "chamfer", "coverage_loss"]

_KINDS = ("chamfer-forward", "chamfer-backward", "chamfer-symmetric", "coverage")
_REDUCES = ("mean", "sum")
_POWERS = (1, 2)


@dataclass(frozen=True)
class LossConfig:
    kind: str = "chamfer-symmetric"
    chamfer_reduce: str = "mean"
    coverage_power: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.chamfer_reduce not in _REDUCES:
            raise ValueError(f"unknown reduce {self.chamfer_reduce!r}")
        if self.coverage_power not in _POWERS:
            raise ValueError(f"coverage power must be 1 or 2")


def chamfer(a: PointCloud, b: PointCloud, cfg: LossConfig = LossConfig()) -> float:
    """Chamfer distance between point clouds.

    Forward reduces squared nearest-neighbor distances from each point of
    ``a`` into ``b``; backward swaps the arguments; symmetric adds both.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer of an empty point cloud")
    return float(tp.value_of(chamfer_values(a.points, b.points, cfg)))


def chamfer_values(a, b, cfg: LossConfig):
    """Chamfer core over (N, 3) arrays or tape Vars."""
    if cfg.kind == "chamfer-forward":
        return _directional(a, b, cfg.chamfer_reduce)
    if cfg.kind == "chamfer-backward":
        return _directional(b, a, cfg.chamfer_reduce)
    if cfg.kind == "chamfer-symmetric":
        forward = _directional(a, b, cfg.chamfer_reduce)
        backward = _directional(b, a, cfg.chamfer_reduce)
        return forward + backward
    raise ValueError(f"{cfg.kind!r} is not a chamfer kind")


def _directional(src, dst, reduce: str):
    tree = cKDTree(tp.value_of(dst))
    nearest = tree.query(tp.value_of(src), k=1)[1]
    diff = src - tp.take(dst, nearest)
    squared = tp.asum(diff * diff, axis=-1)
    return tp.mean(squared) if reduce == "mean" else tp.asum(squared)


def coverage_loss(
    pset: PrimitiveSet,
    target: PointCloud,
    cfg: LossConfig = LossConfig(kind="coverage"),
) -> float:
    """Mean union-distance-field value over the target points.

    Zero iff every target point lies inside or on the reconstruction. Power 2
    averages squared distances instead for a smoother hinge.
    """
    if len(pset) == 0:
        raise ValueError("coverage of an empty primitive set")
    if len(target) == 0:
        raise ValueError("coverage against an empty target")
    return float(tp.value_of(
        coverage_values(pset.primitives, target.points, cfg.coverage_power)
    ))


def coverage_values(primitives: Sequence[TransformedPrimitive], points, power: int):
    """Coverage core over primitives with possibly taped poses."""
    rows = tp.stack([distance_primitive(points, prim) for prim in primitives], axis=0)
    nearest = tp.min_reduce(rows, axis=0)
    if power == 2:
        nearest = nearest * nearest
    return tp.mean(nearest)
