"""Shared test helpers: random program generation and loop flattening."""

from __future__ import annotations

import math

import numpy as np
import pytest

from shapeprog.dsl import Block, Program, Statement, builtin_registry, validate_program

ARCHETYPE_BY_NAME = {
    "cuboid": "cuboid-center",
    "chair_back": "cuboid-corner",
    "table_top": "cuboid-corner",
    "chair_seat": "cuboid-corner",
    "cabinet_body": "cuboid-corner",
    "line": "line-cylinder",
    "chair_leg": "line-cylinder",
    "table_leg": "line-cylinder",
    "cylinder": "cylinder-center",
}


@pytest.fixture
def registry():
    return builtin_registry()


def random_statement(rng: np.random.Generator, names=None) -> Statement:
    names = names or list(ARCHETYPE_BY_NAME)
    name = names[rng.integers(len(names))]
    archetype = ARCHETYPE_BY_NAME[name]
    if archetype == "cuboid-center":
        params = (*rng.uniform(-1, 1, 3), *rng.uniform(0.2, 1.0, 3),
                  *rng.uniform(-1.0, 1.0, 3))
    elif archetype == "cuboid-corner":
        params = (*rng.uniform(-1, 1, 3), *rng.uniform(0.2, 1.0, 3),
                  rng.uniform(-1.0, 1.0))
    elif archetype == "line-cylinder":
        start = rng.uniform(-1, 1, 3)
        end = rng.uniform(-1, 1, 3)
        while np.linalg.norm(end - start) < 0.3:
            end = rng.uniform(-1, 1, 3)
        params = (*start, *end, rng.uniform(0.05, 0.3))
    else:
        params = (*rng.uniform(-1, 1, 3), rng.uniform(0.3, 1.2),
                  rng.uniform(0.05, 0.4), *rng.uniform(-1.0, 1.0, 3))
    return Statement(name, tuple(float(p) for p in params))


def random_block(rng: np.random.Generator, kinds=("single", "translation-for", "rotation-for")) -> Block:
    kind = kinds[rng.integers(len(kinds))]
    if kind == "single":
        return Block("single", (random_statement(rng),))
    count = int(rng.integers(2, 5))
    size = int(rng.integers(1, 3))
    body = tuple(random_statement(rng) for _ in range(size))
    if kind == "translation-for":
        delta = tuple(float(d) for d in rng.uniform(-0.6, 0.6, 3))
        return Block("translation-for", body, loop_count=count, loop_delta=delta)
    return Block("rotation-for", body, loop_count=count)


def random_program(rng: np.random.Generator, max_blocks: int = 3, **block_kw) -> Program:
    n = int(rng.integers(1, max_blocks + 1))
    program = Program(tuple(random_block(rng, **block_kw) for _ in range(n)))
    assert validate_program(program, builtin_registry()) == []
    return program


# ---------------------------------------------------------------------------
# manual loop flattening (oracle for unroll equivalence)


def rot_x_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def euler_zyx_from_matrix(rot: np.ndarray) -> tuple[float, float, float]:
    """Angles (about x, y, z) with R = Rz @ Ry @ Rx."""
    qy = math.asin(-min(1.0, max(-1.0, rot[2, 0])))
    qx = math.atan2(rot[2, 1], rot[2, 2])
    qz = math.atan2(rot[1, 0], rot[0, 0])
    return qx, qy, qz


def _shift_statement(stmt: Statement, offset: np.ndarray) -> Statement:
    p = list(stmt.params)
    archetype = ARCHETYPE_BY_NAME[stmt.def_name]
    p[0:3] = (np.asarray(p[0:3]) + offset).tolist()
    if archetype == "line-cylinder":
        p[3:6] = (np.asarray(p[3:6]) + offset).tolist()
    return Statement(stmt.def_name, tuple(p))


def _rotate_statement(stmt: Statement, angle: float) -> Statement:
    rot = rot_x_matrix(angle)
    p = list(stmt.params)
    archetype = ARCHETYPE_BY_NAME[stmt.def_name]
    p[0:3] = (rot @ np.asarray(p[0:3])).tolist()
    if archetype == "line-cylinder":
        p[3:6] = (rot @ np.asarray(p[3:6])).tolist()
    elif archetype == "cuboid-corner":
        p[6] = p[6] + angle
    elif archetype == "cuboid-center":
        from shapeprog.lowering import rotation_x, rotation_y, rotation_z
        base = (rotation_z(p[8]) @ rotation_y(p[7]) @ rotation_x(p[6]))
        p[6], p[7], p[8] = euler_zyx_from_matrix(rot @ base)
    elif archetype == "cylinder-center":
        from shapeprog.lowering import rotation_x, rotation_y, rotation_z
        base = (rotation_z(p[7]) @ rotation_y(p[6]) @ rotation_x(p[5]))
        p[5], p[6], p[7] = euler_zyx_from_matrix(rot @ base)
    return Statement(stmt.def_name, tuple(p))


def flatten_program(program: Program) -> Program:
    """Rewrite every loop block into equivalent single-draw blocks."""
    blocks: list[Block] = []
    for block in program.blocks:
        if block.kind == "single":
            blocks.append(block)
            continue
        for i in range(block.loop_count):
            for stmt in block.body:
                if block.kind == "translation-for":
                    moved = _shift_statement(stmt, i * np.asarray(block.loop_delta))
                else:
                    moved = _rotate_statement(stmt, (2.0 * math.pi * i) / block.loop_count)
                blocks.append(Block("single", (moved,)))
    return Program(tuple(blocks))
