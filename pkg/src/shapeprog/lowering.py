"""Lower shape programs to posed primitives.

Loop blocks are unrolled into per-iteration rigid transforms and every draw
statement is converted to a (kind, size, translation, rotation) tuple. The
conversion runs on :mod:`shapeprog.tape` values, so with a Var parameter
vector the output poses carry the tape needed for gradients; with a plain
vector it is ordinary numpy and bit-identical to the taped forward pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, NamedTuple, Optional

import numpy as np

from . import tape as tp
from .dsl import (
    DEGENERATE_LINE_EPS,
    Block,
    Program,
    Statement,
    StatementDef,
    StatementRegistry,
    parameter_groups,
)

__all__ = [
    "LoweringError",
    "PrimitiveSet",
    "Provenance",
    "TransformedPrimitive",
    "lower_program",
    "primitive_set_from_json",
    "primitive_set_to_json",
    "rotation_x",
    "rotation_y",
    "rotation_z",
    "statement_to_primitive",
    "unroll_block",
]

ROTATION_TOL = 1e-9


class LoweringError(Exception):
    pass


@dataclass(eq=False)
class TransformedPrimitive:
    """A posed primitive: cuboid full extents (sx, sy, sz) or cylinder
    (height, radius); the canonical cylinder axis is +x."""

    kind: str  # "cuboid" | "cylinder"
    size: Any  # (3,) or (2,) array (or tape.Var)
    translation: Any  # (3,)
    rotation: Any  # (3,3), orthonormal, det +1


class Provenance(NamedTuple):
    block: int
    iteration: int
    statement: int


@dataclass(eq=False)
class PrimitiveSet:
    primitives: list[TransformedPrimitive]
    provenance: list[Provenance]

    def __len__(self) -> int:
        return len(self.primitives)


# ---------------------------------------------------------------------------
# rotation constructors (tape-aware)


def rotation_x(angle):
    c, s = tp.cos(angle), tp.sin(angle)
    return tp.stack([
        tp.stack([1.0, 0.0, 0.0]),
        tp.stack([0.0, c, -s]),
        tp.stack([0.0, s, c]),
    ])


def rotation_y(angle):
    c, s = tp.cos(angle), tp.sin(angle)
    return tp.stack([
        tp.stack([c, 0.0, s]),
        tp.stack([0.0, 1.0, 0.0]),
        tp.stack([-s, 0.0, c]),
    ])


def rotation_z(angle):
    c, s = tp.cos(angle), tp.sin(angle)
    return tp.stack([
        tp.stack([c, -s, 0.0]),
        tp.stack([s, c, 0.0]),
        tp.stack([0.0, 0.0, 1.0]),
    ])


def _euler_rotation(angle_x, angle_y, angle_z):
    return rotation_z(angle_z) @ rotation_y(angle_y) @ rotation_x(angle_x)


def _rotation_from_x_axis(direction):
    """Orthonormal R mapping +x onto the unit vector ``direction``.

    Rodrigues form about axis x-hat x d; smooth everywhere except d = -x-hat,
    where the roll is a free choice and a fixed R_y(pi) keeps the output
    deterministic.
    """
    d = tp.value_of(direction)
    if 1.0 + d[0] < 1e-12:
        return rotation_y(math.pi)
    # k = x-hat x d = (0, -d_z, d_y); its x component is identically zero
    ky = -direction[2]
    kz = direction[1]
    skew = tp.stack([
        tp.stack([0.0, -kz, ky]),
        tp.stack([kz, 0.0, 0.0]),
        tp.stack([-ky, 0.0, 0.0]),
    ])
    return np.eye(3) + skew + (skew @ skew) / (1.0 + direction[0])


# ---------------------------------------------------------------------------
# statement -> primitive


def statement_to_primitive(stmt: Statement, definition: StatementDef) -> TransformedPrimitive:
    """Convert one validated statement to a posed primitive."""
    if len(stmt.params) != definition.arity:
        raise LoweringError(
            f"{definition.name} takes {definition.arity} parameters, got {len(stmt.params)}"
        )
    return _statement_primitive(definition.archetype, np.asarray(stmt.params, dtype=np.float64))


def _statement_primitive(archetype: str, params) -> TransformedPrimitive:
    if archetype == "line-cylinder":
        start, end, radius = params[0:3], params[3:6], params[6]
        axis = end - start
        length = tp.norm(axis)
        if float(tp.value_of(length)) < DEGENERATE_LINE_EPS:
            raise LoweringError("degenerate line: start and end coincide")
        _require_positive(radius, "radius")
        rotation = _rotation_from_x_axis(axis / length)
        size = tp.stack([length, radius])
        translation = (start + end) * 0.5
        return TransformedPrimitive("cylinder", size, translation, rotation)

    if archetype == "cuboid-corner":
        corner, extents, elevation = params[0:3], params[3:6], params[6]
        _require_positive(extents, "size")
        rotation = rotation_x(elevation)
        translation = corner + rotation @ (extents * 0.5)
        return TransformedPrimitive("cuboid", extents, translation, rotation)

    if archetype == "cuboid-center":
        center, extents = params[0:3], params[3:6]
        _require_positive(extents, "size")
        rotation = _euler_rotation(params[6], params[7], params[8])
        return TransformedPrimitive("cuboid", extents, center, rotation)

    if archetype == "cylinder-center":
        center, size = params[0:3], params[3:5]
        _require_positive(size, "size")
        rotation = _euler_rotation(params[5], params[6], params[7])
        return TransformedPrimitive("cylinder", size, center, rotation)

    raise LoweringError(f"unknown archetype {archetype!r}")


def _require_positive(x, what: str) -> None:
    if np.min(tp.value_of(x)) <= 0.0:
        raise LoweringError(f"non-positive {what}")


# ---------------------------------------------------------------------------
# unrolling


def unroll_block(block: Block) -> list[tuple[Statement, tuple[np.ndarray, np.ndarray]]]:
    """Expand a block into (statement, (iteration rotation, iteration
    translation)) entries, ordered by iteration then statement."""
    delta = None
    if block.kind == "translation-for":
        delta = np.asarray(block.loop_delta, dtype=np.float64)
    transforms = _iteration_transforms(block, delta)
    return [
        (stmt, transform)
        for transform in transforms
        for stmt in block.body
    ]


def _iteration_transforms(block: Block, delta) -> list[tuple[Any, Any]]:
    identity = np.eye(3)
    zero = np.zeros(3)
    if block.kind == "single":
        return [(identity, zero)]
    count = block.loop_count
    if count is None or count < 1:
        raise LoweringError("loop count must be a positive integer")
    if block.kind == "translation-for":
        if delta is None:
            raise LoweringError("translation loop needs a delta")
        return [(identity, delta * float(i)) for i in range(count)]
    if block.kind == "rotation-for":
        return [
            (rotation_x((2.0 * math.pi * i) / count), zero)
            for i in range(count)
        ]
    raise LoweringError(f"unknown block kind {block.kind!r}")


# ---------------------------------------------------------------------------
# whole-program lowering


def lower_program(program: Program, registry: StatementRegistry) -> PrimitiveSet:
    """Unroll every block and pose every statement.

    Primitive order is lexicographic in (block, iteration, statement).
    """
    values = _collect_values(program)
    return lower_with_values(program, registry, values)


def lower_with_values(program: Program, registry: StatementRegistry, values) -> PrimitiveSet:
    """Lowering core over an explicit flat parameter vector.

    ``values`` follows the :func:`shapeprog.dsl.parameter_groups` layout and
    may be a tape.Var, in which case every output pose is differentiable in
    it. ``lower_program`` and the gradient pipeline both funnel through here,
    which keeps their forward values bit-identical.
    """
    slices = _group_slices(program)
    primitives: list[TransformedPrimitive] = []
    provenance: list[Provenance] = []
    for k, block in enumerate(program.blocks):
        delta = None
        if block.kind == "translation-for":
            delta = values[slices[(k, None)]]
        posed = []
        for j, stmt in enumerate(block.body):
            definition = registry.resolve(stmt.def_name)
            params = values[slices[(k, j)]]
            if definition.arity != len(stmt.params):
                raise LoweringError(
                    f"{definition.name} takes {definition.arity} parameters, "
                    f"got {len(stmt.params)}"
                )
            posed.append(_statement_primitive(definition.archetype, params))
        for i, (rot_iter, t_iter) in enumerate(_iteration_transforms(block, delta)):
            for j, prim in enumerate(posed):
                primitives.append(TransformedPrimitive(
                    prim.kind,
                    prim.size,
                    t_iter + rot_iter @ prim.translation,
                    rot_iter @ prim.rotation,
                ))
                provenance.append(Provenance(k, i, j))
    return PrimitiveSet(primitives, provenance)


def _group_slices(program: Program) -> dict[tuple[int, Optional[int]], slice]:
    slices = {}
    cursor = 0
    for k, j, count in parameter_groups(program):
        slices[(k, j)] = slice(cursor, cursor + count)
        cursor += count
    return slices


def _collect_values(program: Program) -> np.ndarray:
    chunks: list[float] = []
    for block in program.blocks:
        if block.kind == "translation-for":
            chunks.extend(block.loop_delta)
        for stmt in block.body:
            chunks.extend(stmt.params)
    return np.asarray(chunks, dtype=np.float64)


# ---------------------------------------------------------------------------
# JSON wire format


def primitive_set_to_json(pset: PrimitiveSet) -> str:
    items = []
    for prim, prov in zip(pset.primitives, pset.provenance):
        items.append({
            "kind": prim.kind,
            "size": tp.value_of(prim.size).tolist(),
            "translation": tp.value_of(prim.translation).tolist(),
            "rotation": tp.value_of(prim.rotation).tolist(),
            "provenance": {"block": prov.block, "iter": prov.iteration, "stmt": prov.statement},
        })
    return json.dumps({"primitives": items}, indent=2)


def primitive_set_from_json(text: str) -> PrimitiveSet:
    data = json.loads(text)
    primitives = []
    provenance = []
    for item in data["primitives"]:
        primitives.append(TransformedPrimitive(
            item["kind"],
            np.asarray(item["size"], dtype=np.float64),
            np.asarray(item["translation"], dtype=np.float64),
            np.asarray(item["rotation"], dtype=np.float64),
        ))
        prov = item["provenance"]
        provenance.append(Provenance(prov["block"], prov["iter"], prov["stmt"]))
    return PrimitiveSet(primitives, provenance)
