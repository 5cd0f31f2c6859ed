"""Readers and writers: binvox voxel grids, OBJ meshes, XYZ/PLY point clouds.

All writers emit shortest-roundtrip decimals, so read(write(x)) reproduces
float64 values bit-exactly. Readers reject malformed input with a
FormatError instead of returning partial data.
"""

from __future__ import annotations

import io as _io
from dataclasses import dataclass

import numpy as np

from .renderer import PointCloud, VoxelGrid

__all__ = [
    "FormatError",
    "Mesh",
    "read_binvox",
    "read_obj",
    "read_ply",
    "read_xyz",
    "sample_mesh",
    "write_binvox",
    "write_ply",
    "write_xyz",
]


class FormatError(Exception):
    pass


@dataclass(eq=False)
class Mesh:
    vertices: np.ndarray  # (N, 3) float64
    triangles: np.ndarray  # (M, 3) int64, indices into vertices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise FormatError("triangle index out of range")

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# binvox


def read_binvox(data: bytes) -> VoxelGrid:
    """Decode a binvox stream.

    The run-length-encoded payload is ordered y fastest, then z, then x; the
    returned grid is re-indexed to the natural [x][y][z] layout.
    """
    stream = _io.BytesIO(data)

    def line(what: str) -> list[bytes]:
        raw = stream.readline()
        if not raw:
            raise FormatError(f"truncated header: missing {what}")
        return raw.split()

    magic = line("magic")
    if not magic or magic[0] != b"#binvox":
        raise FormatError("bad magic: not a binvox stream")
    dim_rec = line("dim")
    if len(dim_rec) != 4 or dim_rec[0] != b"dim":
        raise FormatError("malformed dim record")
    try:
        dims = tuple(int(t) for t in dim_rec[1:])
    except ValueError:
        raise FormatError("malformed dim record") from None
    if min(dims) < 1:
        raise FormatError("non-positive dimension")
    if len(set(dims)) != 1:
        raise FormatError(f"dimension mismatch: grid must be cubic, got {dims}")
    d = dims[0]
    translate_rec = line("translate")
    if len(translate_rec) != 4 or translate_rec[0] != b"translate":
        raise FormatError("malformed translate record")
    try:
        translate = np.array([float(t) for t in translate_rec[1:]])
    except ValueError:
        raise FormatError("malformed translate record") from None
    scale_rec = line("scale")
    if len(scale_rec) != 2 or scale_rec[0] != b"scale":
        raise FormatError("malformed scale record")
    try:
        scale = float(scale_rec[1])
    except ValueError:
        raise FormatError("malformed scale record") from None
    if line("data") != [b"data"]:
        raise FormatError("malformed data record")

    payload = np.frombuffer(stream.read(), dtype=np.uint8)
    if payload.size % 2 != 0:
        raise FormatError("RLE underrun: dangling value byte")
    values, counts = payload[0::2], payload[1::2]
    if np.any(counts == 0):
        raise FormatError("zero-length RLE run")
    total = int(counts.sum())
    expected = d ** 3
    if total < expected:
        raise FormatError(f"RLE underrun: {total} of {expected} cells")
    if total > expected:
        raise FormatError(f"RLE overrun: {total} of {expected} cells")
    flat = np.repeat(values != 0, counts)
    occupancy = flat.reshape(d, d, d).transpose(0, 2, 1)  # (x,z,y) -> (x,y,z)
    return VoxelGrid((d, d, d), occupancy, translate, scale)


def write_binvox(grid: VoxelGrid) -> bytes:
    """Encode a grid; runs are capped at 255 per the format."""
    d = grid.dim[0]
    header = (
        "#binvox 1\n"
        f"dim {d} {d} {d}\n"
        f"translate {_fmt(grid.translate[0])} {_fmt(grid.translate[1])} {_fmt(grid.translate[2])}\n"
        f"scale {_fmt(grid.scale)}\n"
        "data\n"
    ).encode("ascii")
    flat = grid.occupancy.transpose(0, 2, 1).ravel().astype(np.uint8)
    pairs = bytearray()
    edges = np.flatnonzero(np.diff(flat))
    starts = np.concatenate([[0], edges + 1])
    ends = np.concatenate([edges + 1, [flat.size]])
    for start, end in zip(starts, ends):
        value = int(flat[start])
        run = int(end - start)
        while run > 255:
            pairs += bytes((value, 255))
            run -= 255
        pairs += bytes((value, run))
    return header + bytes(pairs)


# ---------------------------------------------------------------------------
# OBJ


def read_obj(text: str) -> Mesh:
    """Parse ``v``/``f`` records; polygon faces are fan-triangulated.
    Normals, textures, and materials are ignored."""
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        tag = fields[0]
        if tag == "v":
            if len(fields) < 4:
                raise FormatError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(t) for t in fields[1:4]])
            except ValueError:
                raise FormatError(f"line {lineno}: malformed vertex") from None
        elif tag == "f":
            if len(fields) < 4:
                raise FormatError(f"line {lineno}: face needs at least 3 vertices")
            idx = [_face_index(t, len(vertices), lineno) for t in fields[1:]]
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        # every other record type is ignored
    return Mesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
                np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _face_index(token: str, n_vertices: int, lineno: int) -> int:
    head = token.split("/", 1)[0]
    try:
        raw = int(head)
    except ValueError:
        raise FormatError(f"line {lineno}: malformed face index {token!r}") from None
    if raw == 0:
        raise FormatError(f"line {lineno}: face index 0 is invalid")
    idx = raw - 1 if raw > 0 else n_vertices + raw
    if not 0 <= idx < n_vertices:
        raise FormatError(f"line {lineno}: face index {raw} out of range")
    return idx


def sample_mesh(mesh: Mesh, count: int, seed: int = 0) -> PointCloud:
    """Uniform surface sampling: triangles chosen proportional to area, then
    uniform barycentric placement. Zero-area triangles never receive points."""
    if count < 0:
        raise ValueError("count must be non-negative")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0.0:
        raise FormatError("mesh has zero total surface area")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))
    edges = np.cumsum(areas)
    pick = np.minimum(np.searchsorted(edges, rng.random(count) * total, side="right"),
                      len(areas) - 1)
    u, v = rng.random(count), rng.random(count)
    root = np.sqrt(u)
    a = mesh.vertices[mesh.triangles[pick, 0]]
    b = mesh.vertices[mesh.triangles[pick, 1]]
    c = mesh.vertices[mesh.triangles[pick, 2]]
    w_a = (1.0 - root)[:, None]
    w_b = (root * (1.0 - v))[:, None]
    w_c = (root * v)[:, None]
    return PointCloud(w_a * a + w_b * b + w_c * c)


# ---------------------------------------------------------------------------
# XYZ / PLY point clouds


def write_xyz(cloud: PointCloud) -> str:
    lines = [f"{_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in cloud.points]
    return "\n".join(lines) + ("\n" if lines else "")


def read_xyz(text: str) -> PointCloud:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        if len(fields) < 3:
            raise FormatError(f"line {lineno}: expected 3 coordinates")
        try:
            rows.append([float(t) for t in fields[:3]])
        except ValueError:
            raise FormatError(f"line {lineno}: malformed coordinate") from None
    return PointCloud(np.asarray(rows, dtype=np.float64).reshape(-1, 3))


def write_ply(cloud: PointCloud) -> str:
    header = (
        "ply\n"
        "format ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    return header + write_xyz(cloud)


def read_ply(text: str) -> PointCloud:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError("bad magic: not a PLY stream")
    count = None
    properties: list[str] = []
    body_start = None
    in_vertex = False
    for i, raw in enumerate(lines[1:], start=1):
        fields = raw.strip().split()
        if not fields:
            continue
        if fields[0] == "format":
            if fields[1:2] != ["ascii"]:
                raise FormatError("only ascii PLY is supported")
        elif fields[0] == "element":
            in_vertex = fields[1:2] == ["vertex"]
            if in_vertex:
                try:
                    count = int(fields[2])
                except (IndexError, ValueError):
                    raise FormatError("malformed element vertex record") from None
        elif fields[0] == "property" and in_vertex:
            properties.append(fields[-1])
        elif fields[0] == "end_header":
            body_start = i + 1
            break
    if count is None or body_start is None:
        raise FormatError("missing vertex element or end_header")
    if properties[:3] != ["x", "y", "z"]:
        raise FormatError(f"unsupported vertex properties {properties!r}")
    rows = []
    for raw in lines[body_start:]:
        if raw.strip():
            rows.append(raw)
        if len(rows) == count:
            break
    if len(rows) != count:
        raise FormatError(f"vertex list truncated: {len(rows)} of {count}")
    cloud = read_xyz("\n".join(rows))
    if len(cloud) != count:
        raise FormatError("malformed vertex row")
    return cloud
