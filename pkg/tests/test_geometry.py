import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from shapeprog.dsl import builtin_registry
from shapeprog.geometry import (
    EmptySetError,
    distance_cuboid,
    distance_cylinder,
    distance_primitive,
    distance_set,
    primitive_aabb,
    surface_area,
)
from shapeprog.lowering import PrimitiveSet, TransformedPrimitive, lower_program

from conftest import random_program


def make_prim(kind, size, translation=(0, 0, 0), rotation=None):
    return TransformedPrimitive(
        kind,
        np.asarray(size, dtype=float),
        np.asarray(translation, dtype=float),
        np.eye(3) if rotation is None else np.asarray(rotation, dtype=float),
    )


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def surface_oracle_points(prim, n, rng):
    """Brute-force uniform surface sample, independent of the renderer."""
    if prim.kind == "cuboid":
        sx, sy, sz = prim.size
        areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        pts = (rng.random((n, 3)) - 0.5) * prim.size
        for f in range(6):
            axis, sign = f // 2, 1.0 if f % 2 == 0 else -1.0
            pts[face == f, axis] = 0.5 * sign * prim.size[axis]
    else:
        height, radius = prim.size
        lateral = 2 * math.pi * radius * height
        cap = math.pi * radius * radius
        areas = np.array([lateral, cap, cap])
        region = rng.choice(3, size=n, p=areas / areas.sum())
        theta = rng.uniform(-math.pi, math.pi, n)
        pts = np.empty((n, 3))
        side = region == 0
        pts[side, 0] = rng.uniform(-0.5, 0.5, side.sum()) * height
        pts[side, 1] = radius * np.sin(theta[side])
        pts[side, 2] = radius * np.cos(theta[side])
        for which, sign in ((region == 1, 0.5), (region == 2, -0.5)):
            rad = radius * np.sqrt(rng.random(which.sum()))
            pts[which, 0] = sign * height
            pts[which, 1] = rad * np.sin(theta[which])
            pts[which, 2] = rad * np.cos(theta[which])
    world = pts @ np.asarray(prim.rotation).T + prim.translation
    return world


def contains(prim, queries):
    """Independent inside-or-on test in the primitive's canonical frame."""
    local = (queries - np.asarray(prim.translation)) @ np.asarray(prim.rotation)
    if prim.kind == "cuboid":
        return np.all(np.abs(local) <= 0.5 * np.asarray(prim.size), axis=-1)
    height, radius = prim.size
    return (np.abs(local[..., 0]) <= 0.5 * height) & (
        np.hypot(local[..., 1], local[..., 2]) <= radius
    )


def oracle_check(prim, queries, n_surface=200_000, rng=None):
    """Exterior: analytic distance within the sampling resolution of the
    nearest-surface-sample distance. Interior (independent containment test):
    analytic exactly zero."""
    rng = rng or np.random.default_rng(0)
    surface = surface_oracle_points(prim, n_surface, rng)
    tree = cKDTree(surface)
    sampled = tree.query(queries, k=1)[0]
    analytic = np.asarray(distance_primitive(queries, prim))
    inside = contains(prim, queries)
    assert np.all(analytic[inside] == 0.0)
    # resolution bound: twice the largest nearest-neighbor spacing, estimated
    # on a subsample of the surface points
    subset = surface[rng.choice(n_surface, size=20_000, replace=False)]
    spacing = tree.query(subset, k=2)[0][:, 1].max()
    bound = 2.0 * spacing
    gaps = np.abs(analytic[~inside] - sampled[~inside])
    assert np.all(gaps <= bound), f"max gap {gaps.max()} > bound {bound}"
    return bound


class TestCuboidField:
    def test_interior_zero(self):
        assert distance_cuboid(np.array([0.0, 0, 0]), np.array([2.0, 2, 2])) == 0.0

    def test_single_axis(self):
        assert distance_cuboid(np.array([2.0, 0, 0]), np.array([2.0, 2, 2])) == pytest.approx(1.0)

    def test_corner_sqrt3(self):
        d = distance_cuboid(np.array([2.0, 2, 2]), np.array([2.0, 2, 2]))
        assert d == pytest.approx(math.sqrt(3.0), abs=1e-12)

    def test_on_surface_zero(self):
        assert distance_cuboid(np.array([1.0, 0, 0]), np.array([2.0, 2, 2])) == 0.0

    def test_oracle_agreement(self):
        rng = np.random.default_rng(5)
        prim = make_prim("cuboid", [1.7, 0.6, 1.1])
        queries = rng.uniform(-2, 2, size=(100, 3))
        oracle_check(prim, queries, n_surface=100_000, rng=rng)


class TestCylinderField:
    def test_interior(self):
        assert distance_cylinder(np.array([0.0, 0.5, 0]), 2.0, 1.0) == 0.0

    def test_side(self):
        assert distance_cylinder(np.array([0.0, 3.0, 0]), 2.0, 1.0) == pytest.approx(2.0)

    def test_cap(self):
        assert distance_cylinder(np.array([4.0, 0.0, 0]), 2.0, 1.0) == pytest.approx(3.0)

    def test_edge_case_diagonal(self):
        d = distance_cylinder(np.array([4.0, 4.0, 0]), 2.0, 1.0)
        assert d == pytest.approx(3.0 * math.sqrt(2.0), abs=1e-12)

    def test_radial_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x, r_off, phi = rng.uniform(-3, 3), rng.uniform(0, 3), rng.uniform(0, 2 * math.pi)
            p1 = np.array([x, r_off * math.sin(phi), r_off * math.cos(phi)])
            p2 = np.array([x, 0.0, r_off])
            d1 = distance_cylinder(p1, 1.4, 0.6)
            d2 = distance_cylinder(p2, 1.4, 0.6)
            assert d1 == pytest.approx(d2, abs=1e-12)

    def test_oracle_agreement(self):
        rng = np.random.default_rng(6)
        prim = make_prim("cylinder", [1.4, 0.5])
        queries = rng.uniform(-2, 2, size=(100, 3))
        oracle_check(prim, queries, n_surface=100_000, rng=rng)


class TestPosedPrimitive:
    def test_rigid_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            kind = "cuboid" if rng.random() < 0.5 else "cylinder"
            size = rng.uniform(0.3, 1.5, 3 if kind == "cuboid" else 2)
            base = make_prim(kind, size)
            rot = random_rotation(rng)
            shift = rng.uniform(-3, 3, 3)
            moved = make_prim(kind, size, shift, rot)
            p = rng.uniform(-2, 2, 3)
            d_base = float(distance_primitive(p, base))
            d_moved = float(distance_primitive(rot @ p + shift, moved))
            assert d_moved == pytest.approx(d_base, abs=1e-9)

    def test_translated_cuboid(self):
        prim = make_prim("cuboid", [1, 1, 1], translation=[5, 0, 0])
        assert distance_primitive(np.array([5.0, 0, 0]), prim) == 0.0

    def test_rotated_cylinder_axis_to_z(self):
        # 90 degrees about y maps +x to -z; beyond the cap the distance is axial
        rot = np.array([[0.0, 0, 1], [0, 1, 0], [-1, 0, 0]])
        prim = make_prim("cylinder", [2.0, 0.5], rotation=rot)
        p = np.array([0.0, 0.0, -2.5])
        assert float(distance_primitive(p, prim)) == pytest.approx(1.5, abs=1e-12)

    def test_lipschitz(self):
        rng = np.random.default_rng(21)
        prim = make_prim("cylinder", [1.2, 0.4], [0.3, -0.2, 0.5],
                         random_rotation(rng))
        pts = rng.uniform(-2, 2, size=(200, 3))
        qts = rng.uniform(-2, 2, size=(200, 3))
        dp = np.asarray(distance_primitive(pts, prim))
        dq = np.asarray(distance_primitive(qts, prim))
        gaps = np.linalg.norm(pts - qts, axis=1)
        assert np.all(np.abs(dp - dq) <= gaps + 1e-9)


class TestUnionField:
    def test_singleton_equals_member(self):
        prim = make_prim("cuboid", [1, 1, 1])
        pset = PrimitiveSet([prim], [(0, 0, 0)])
        p = np.array([2.0, 0, 0])
        assert distance_set(p, pset) == distance_primitive(p, prim)

    def test_two_cuboids_nearest_wins(self):
        near = make_prim("cuboid", [1, 1, 1], translation=[0, 0, 0])
        far = make_prim("cuboid", [1, 1, 1], translation=[10, 0, 0])
        pset = PrimitiveSet([near, far], [(0, 0, 0), (1, 0, 0)])
        assert float(distance_set(np.array([4.0, 0, 0]), pset)) == pytest.approx(3.5)

    def test_interior_of_any_member_is_zero(self):
        a = make_prim("cuboid", [1, 1, 1])
        b = make_prim("cylinder", [2, 0.5], translation=[3, 0, 0])
        pset = PrimitiveSet([a, b], [(0, 0, 0), (1, 0, 0)])
        assert float(distance_set(np.array([3.0, 0, 0]), pset)) == 0.0

    def test_union_is_lower_bound(self):
        rng = np.random.default_rng(17)
        reg = builtin_registry()
        pset = lower_program(random_program(rng), reg)
        pts = rng.uniform(-2, 2, size=(50, 3))
        union = np.asarray(distance_set(pts, pset))
        members = np.stack([np.asarray(distance_primitive(pts, pr))
                            for pr in pset.primitives])
        assert np.all(union <= members + 1e-15)
        assert np.allclose(union, members.min(axis=0))

    def test_empty_set_rejected(self):
        with pytest.raises(EmptySetError):
            distance_set(np.zeros(3), PrimitiveSet([], []))


class TestSurfaceArea:
    def test_cuboid(self):
        assert surface_area(make_prim("cuboid", [1, 2, 3])) == pytest.approx(22.0)

    def test_cylinder_with_caps(self):
        assert surface_area(make_prim("cylinder", [2, 1])) == pytest.approx(6 * math.pi)

    def test_cylinder_without_caps(self):
        assert surface_area(make_prim("cylinder", [2, 1]), include_caps=False) == (
            pytest.approx(4 * math.pi)
        )


class TestAabb:
    def test_axis_aligned_cuboid(self):
        lo, hi = primitive_aabb(make_prim("cuboid", [2, 4, 6], translation=[1, 0, 0]))
        assert np.allclose(lo, [0, -2, -3])
        assert np.allclose(hi, [2, 2, 3])

    def test_aabb_contains_surface(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            kind = "cuboid" if rng.random() < 0.5 else "cylinder"
            size = rng.uniform(0.3, 1.5, 3 if kind == "cuboid" else 2)
            prim = make_prim(kind, size, rng.uniform(-1, 1, 3), random_rotation(rng))
            lo, hi = primitive_aabb(prim)
            pts = surface_oracle_points(prim, 2000, rng)
            assert np.all(pts >= lo - 1e-9) and np.all(pts <= hi + 1e-9)
