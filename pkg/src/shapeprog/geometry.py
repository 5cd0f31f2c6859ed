"""Analytic distance fields for posed primitives and their unions.

Every distance is the closest distance from a query point to the primitive's
surface and is exactly zero inside. Functions are vectorized over leading
point axes and accept tape Vars for the differentiable path.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import tape as tp
from .lowering import PrimitiveSet, TransformedPrimitive

__all__ = [
    "EmptySetError",
    "distance_cuboid",
    "distance_cylinder",
    "distance_primitive",
    "distance_set",
    "primitive_aabb",
    "surface_area",
]


class EmptySetError(Exception):
    """Distance to an empty union is undefined."""


def distance_cuboid(point, extents):
    """Distance to an origin-centered axis-aligned cuboid of full extents
    (size_x, size_y, size_z); the solid occupies [-s/2, s/2] per axis."""
    overshoot = tp.absolute(point) - 0.5 * extents
    clipped = tp.hinge(overshoot)
    return tp.sqrt0(tp.asum(clipped * clipped, axis=-1))


def distance_cylinder(point, height, radius):
    """Distance to an origin-centered cylinder, axis +x, full ``height``.

    The four cases (inside, side, cap, edge) collapse into two hinge terms:
    axial overshoot beyond the caps and radial overshoot beyond the wall.
    """
    axial = tp.hinge(tp.absolute(point[..., 0]) - 0.5 * height)
    spoke = tp.sqrt0(point[..., 1] * point[..., 1] + point[..., 2] * point[..., 2])
    radial = tp.hinge(spoke - radius)
    return tp.sqrt0(axial * axial + radial * radial)


def distance_primitive(point, prim: TransformedPrimitive):
    """Distance to a posed primitive: evaluate the canonical field at the
    inversely transformed point R^T (p - t)."""
    local = (point - prim.translation) @ prim.rotation
    if prim.kind == "cuboid":
        return distance_cuboid(local, prim.size)
    if prim.kind == "cylinder":
        return distance_cylinder(local, prim.size[0], prim.size[1])
    raise ValueError(f"unknown primitive kind {prim.kind!r}")


def distance_set(point, pset: PrimitiveSet | Sequence[TransformedPrimitive]):
    """Union distance field: pointwise minimum over the members' fields."""
    primitives = pset.primitives if isinstance(pset, PrimitiveSet) else list(pset)
    if not primitives:
        raise EmptySetError("distance field of an empty primitive set")
    rows = tp.stack([distance_primitive(point, prim) for prim in primitives], axis=0)
    return tp.min_reduce(rows, axis=0)


def surface_area(prim: TransformedPrimitive, include_caps: bool = True):
    """Total surface area; cylinder caps are optional."""
    size = prim.size
    if prim.kind == "cuboid":
        a, b, c = size[0], size[1], size[2]
        return 2.0 * (a * b + b * c + c * a)
    if prim.kind == "cylinder":
        height, radius = size[0], size[1]
        lateral = (2.0 * math.pi) * radius * height
        if include_caps:
            return lateral + (2.0 * math.pi) * radius * radius
        return lateral
    raise ValueError(f"unknown primitive kind {prim.kind!r}")


def primitive_aabb(prim: TransformedPrimitive) -> tuple[np.ndarray, np.ndarray]:
    """Exact world-frame axis-aligned bounding box (lo, hi)."""
    rot = tp.value_of(prim.rotation)
    center = tp.value_of(prim.translation)
    size = tp.value_of(prim.size)
    if prim.kind == "cuboid":
        half = np.abs(rot) @ (0.5 * size)
    else:
        axis = rot[:, 0]  # world direction of the canonical +x axis
        height, radius = size
        half = 0.5 * height * np.abs(axis) + radius * np.sqrt(
            np.maximum(0.0, 1.0 - axis * axis)
        )
    return center - half, center + half
