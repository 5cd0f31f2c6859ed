"""Render primitive sets to point clouds and voxel grids.

Sampling uses the reparameterization scheme: canonical unit draws come from a
seeded generator and are mapped onto the surface by scaling with the
primitive size, rotating, and translating, in that order. For fixed draws the
sampled points are therefore smooth functions of the pose parameters. The
draws for primitive ``m`` come from their own PCG64 substream keyed by
``(seed, m)``, so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tape as tp
from .geometry import EmptySetError, distance_set, primitive_aabb, surface_area
from .lowering import PrimitiveSet, TransformedPrimitive

__all__ = [
    "PointCloud",
    "RenderConfig",
    "VoxelGrid",
    "allocate_counts",
    "sample_points",
    "voxelize",
]


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray  # (N, 3) float64

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(eq=False)
class VoxelGrid:
    """Dense cubic occupancy grid.

    World position of cell (i, j, k) center is
    ``translate + (index + 0.5) / dim * scale`` per axis, mirroring the
    binvox header convention.
    """

    dim: tuple[int, int, int]
    occupancy: np.ndarray  # (d, d, d) bool, indexed [x][y][z]
    translate: np.ndarray  # (3,)
    scale: float

    def __post_init__(self):
        d = tuple(int(n) for n in self.dim)
        self.dim = d
        self.occupancy = np.asarray(self.occupancy, dtype=bool).reshape(d)
        self.translate = np.asarray(self.translate, dtype=np.float64).reshape(3)
        self.scale = float(self.scale)


@dataclass(frozen=True)
class RenderConfig:
    """Sampling settings shared by the loss/gradient pipeline."""

    count: int = 5000
    include_caps: bool = True


def allocate_counts(areas: Sequence[float], total: int) -> np.ndarray:
    """Split ``total`` proportionally to ``areas`` by largest remainder.

    Counts sum to ``total`` exactly; remainder ties break toward lower index.
    """
    areas = np.asarray(areas, dtype=np.float64)
    if np.any(areas < 0.0) or areas.sum() <= 0.0:
        raise ValueError("areas must be non-negative with positive sum")
    quota = total * areas / areas.sum()
    counts = np.floor(quota).astype(np.int64)
    short = int(total - counts.sum())
    if short > 0:
        remainder = quota - counts
        for idx in np.argsort(-remainder, kind="stable")[:short]:
            counts[idx] += 1
    return counts


def sample_points(
    pset: PrimitiveSet,
    count: int,
    seed: int = 0,
    include_caps: bool = True,
) -> PointCloud:
    """Draw exactly ``count`` surface points, allocated across primitives
    proportionally to surface area. Deterministic given (set, count, seed,
    flags)."""
    if len(pset) == 0:
        raise EmptySetError("cannot sample an empty primitive set")
    if count < 1:
        raise ValueError("count must be at least 1")
    points = sample_with_values(pset.primitives, count, seed, include_caps)
    return PointCloud(tp.value_of(points))


def sample_with_values(
    primitives: Sequence[TransformedPrimitive],
    count: int,
    seed: int,
    include_caps: bool,
):
    """Sampling core; returns an (N, 3) array, or a tape Var when the
    primitives carry taped poses."""
    areas = [float(tp.value_of(surface_area(p, include_caps))) for p in primitives]
    counts = allocate_counts(areas, count)
    segments = []
    for index, (prim, n) in enumerate(zip(primitives, counts)):
        if n == 0:
            continue
        draws = _substream(seed, index).random((int(n), 3))
        segments.append(_sample_primitive(prim, draws, include_caps))
    return tp.concatenate(segments, axis=0)


def _substream(seed: int, index: int) -> np.random.Generator:
    root = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence((root, index)))


def _sample_primitive(prim: TransformedPrimitive, draws: np.ndarray, include_caps: bool):
    if prim.kind == "cuboid":
        unit = _unit_cuboid(tp.value_of(prim.size), draws)
        scale = prim.size
    else:
        unit = _unit_cylinder(tp.value_of(prim.size), draws, include_caps)
        scale = tp.stack([prim.size[0], prim.size[1], prim.size[1]])
    canonical = unit * scale
    return canonical @ tp.transpose(prim.rotation) + prim.translation


def _unit_cuboid(size: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """Unit-cube surface positions: the face assignment is proportional to
    face area at the evaluated size and treated as fixed for gradients."""
    sx, sy, sz = size
    face_areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
    face = _pick_region(face_areas, draws[:, 0])
    axis = face // 2
    sign = np.where(face % 2 == 0, 0.5, -0.5)
    unit = np.empty_like(draws)
    spans = draws[:, 1:3] - 0.5
    for ax in range(3):
        on_face = axis == ax
        others = [a for a in range(3) if a != ax]
        unit[on_face, ax] = sign[on_face]
        unit[on_face, others[0]] = spans[on_face, 0]
        unit[on_face, others[1]] = spans[on_face, 1]
    return unit


def _unit_cylinder(size: np.ndarray, draws: np.ndarray, include_caps: bool) -> np.ndarray:
    """Unit cylinder surface positions (axis x, radius 1, height 1).

    Lateral points are (h, sin t, cos t) with h in [-1/2, 1/2]; cap points use
    a sqrt radial draw for uniform disk coverage.
    """
    height, radius = size
    lateral_area = 2.0 * math.pi * radius * height
    cap_area = math.pi * radius * radius if include_caps else 0.0
    region = _pick_region(np.array([lateral_area, cap_area, cap_area]), draws[:, 0])
    theta = (2.0 * draws[:, 1] - 1.0) * math.pi
    unit = np.empty_like(draws)
    lateral = region == 0
    unit[lateral, 0] = draws[lateral, 2] - 0.5
    unit[lateral, 1] = np.sin(theta[lateral])
    unit[lateral, 2] = np.cos(theta[lateral])
    for which, sign in ((region == 1, 0.5), (region == 2, -0.5)):
        spread = np.sqrt(draws[which, 2])
        unit[which, 0] = sign
        unit[which, 1] = spread * np.sin(theta[which])
        unit[which, 2] = spread * np.cos(theta[which])
    return unit


def _pick_region(areas: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniform draws to region indices with probability proportional to
    area."""
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("region areas must have positive sum")
    edges = np.cumsum(areas) / total
    return np.minimum(np.searchsorted(edges, u, side="right"), len(areas) - 1)


def voxelize(pset: PrimitiveSet, dim: int, pad: float = 0.05) -> VoxelGrid:
    """Rasterize occupancy on a cubic grid over the set's padded bounding box.

    A cell is occupied iff the union distance field is exactly zero at its
    center. The box is expanded by ``pad`` times its extent per side, then
    cubified to the longest side so cells are cubes.
    """
    if len(pset) == 0:
        raise EmptySetError("cannot voxelize an empty primitive set")
    if dim < 1:
        raise ValueError("dim must be at least 1")
    boxes = [primitive_aabb(p) for p in pset.primitives]
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    extent = hi - lo
    lo = lo - pad * extent
    hi = hi + pad * extent
    side = float(np.max(hi - lo))
    center = 0.5 * (lo + hi)
    origin = center - 0.5 * side
    steps = (np.arange(dim) + 0.5) * (side / dim)
    gx, gy, gz = np.meshgrid(steps, steps, steps, indexing="ij")
    centers = origin + np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    occupied = tp.value_of(distance_set(centers, pset)) == 0.0
    return VoxelGrid(
        dim=(dim, dim, dim),
        occupancy=occupied.reshape(dim, dim, dim),
        translate=origin,
        scale=side,
    )
