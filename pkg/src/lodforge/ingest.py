"""Point cloud ingestion: LAS/PLY readers, a binary PLY writer, and
deterministic synthetic generators used for testing and benchmarking."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import FormatError

GENERATOR_KINDS = ("uniform-cube", "checker-plane", "stadium", "two-scans")

SCAN_A_COLOR = (200, 60, 60)
SCAN_B_COLOR = (60, 60, 200)
DENSE_CUBE_MIN = 0.5
DENSE_CUBE_SIZE = 1.0 / 512.0


@dataclass
class PointCloud:
    """Columnar point storage: (n, 3) float64 positions, (n, 3) uint8 colors."""

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.positions) != len(self.colors):
            raise ValueError("positions/colors length mismatch")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class GeneratorPreset:
    kind: str
    count: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind: {self.kind}")
        if self.count < 1:
            raise ValueError("count must be >= 1")


# ---------------------------------------------------------------------------
# LAS
# ---------------------------------------------------------------------------

_LAS_MIN_RECLEN = {0: 20, 1: 28, 2: 26, 3: 34, 6: 30, 7: 36, 8: 38}
_LAS_RGB_OFFSET = {2: 20, 3: 28, 7: 30, 8: 30}


def read_las(path) -> PointCloud:
    """Read an LAS 1.2-1.4 file (point formats 0-3 and 6-8, uncompressed)."""
    with open(path, "rb") as f:
        header = f.read(227)
        if len(header) < 227:
            raise FormatError("LAS header truncated")
        if header[:4] != b"LASF":
            raise FormatError("not an LAS file (missing LASF magic)")
        ver = (header[24], header[25])
        offset_to_points = struct.unpack_from("<I", header, 96)[0]
        fmt_byte = header[104]
        if fmt_byte & 0x80:
            raise FormatError("compressed LAS (LAZ) is not supported")
        fmt = fmt_byte & 0x3F
        reclen = struct.unpack_from("<H", header, 105)[0]
        n = struct.unpack_from("<I", header, 107)[0]
        scale = struct.unpack_from("<3d", header, 131)
        offset = struct.unpack_from("<3d", header, 155)
        if ver >= (1, 4):
            rest = f.read(375 - 227)
            full = header + rest
            if len(full) >= 255:
                n64 = struct.unpack_from("<Q", full, 247)[0]
                if n64:
                    n = n64
        if fmt not in _LAS_MIN_RECLEN:
            raise FormatError(f"unsupported LAS point format {fmt}")
        if reclen < _LAS_MIN_RECLEN[fmt]:
            raise FormatError(f"record length {reclen} too short for format {fmt}")
        if n == 0:
            return PointCloud(np.empty((0, 3)), np.empty((0, 3), np.uint8))
        f.seek(offset_to_points)
        raw = f.read(n * reclen)
        if len(raw) < n * reclen:
            raise IOError("truncated LAS point records")

    names = ["x", "y", "z"]
    formats = ["<i4", "<i4", "<i4"]
    offsets = [0, 4, 8]
    has_rgb = fmt in _LAS_RGB_OFFSET
    if has_rgb:
        base = _LAS_RGB_OFFSET[fmt]
        names += ["red", "green", "blue"]
        formats += ["<u2"] * 3
        offsets += [base, base + 2, base + 4]
    dtype = np.dtype({"names": names, "formats": formats, "offsets": offsets, "itemsize": reclen})
    rec = np.frombuffer(raw, dtype=dtype, count=n)

    positions = np.empty((n, 3))
    for i, (axis, sc, off) in enumerate(zip("xyz", scale, offset)):
        positions[:, i] = rec[axis].astype(np.float64) * sc + off
    if has_rgb:
        colors = np.stack(
            [(rec[c] >> 8).astype(np.uint8) for c in ("red", "green", "blue")], axis=1
        )
    else:
        colors = np.full((n, 3), 128, np.uint8)
    return PointCloud(positions, colors)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_SCALARS = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}


def read_ply(path) -> PointCloud:
    """Read an ascii or binary-little-endian PLY with x,y,z and optional red,green,blue."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError("not a PLY file")
    body_start = data.find(b"\n", end) + 1
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    for line in header_lines:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError("PLY property before any element")
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], "list"))
            else:
                elements[-1][2].append((tok[-1], tok[1]))
    if fmt == "binary_big_endian":
        raise FormatError("big-endian PLY is not supported")
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format: {fmt}")
    if not elements or elements[0][0] != "vertex":
        raise FormatError("PLY vertex element must come first")
    _, count, props = elements[0]
    names = [p[0] for p in props]
    if any(p[1] == "list" for p in props):
        raise FormatError("list properties on vertices are not supported")
    if not {"x", "y", "z"} <= set(names):
        raise FormatError("PLY vertex element lacks x/y/z properties")

    if fmt == "ascii":
        rows = data[body_start:].decode("ascii").split()
        ncols = len(props)
        if count > 0:
            vals = np.array(rows[: count * ncols], dtype=np.float64).reshape(count, ncols)
        else:
            vals = np.empty((0, ncols))
        cols = {name: vals[:, i] for i, (name, _) in enumerate(props)}
    else:
        try:
            dtype = np.dtype([(name, _PLY_SCALARS[typ]) for name, typ in props])
        except KeyError as e:
            raise FormatError(f"unsupported PLY property type: {e}")
        if len(data) - body_start < count * dtype.itemsize:
            raise IOError("truncated PLY vertex data")
        rec = np.frombuffer(data, dtype=dtype, count=count, offset=body_start)
        cols = {name: rec[name] for name, _ in props}

    positions = np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float64)
    if {"red", "green", "blue"} <= set(names):
        colors = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1).astype(np.uint8)
    else:
        colors = np.full((count, 3), 128, np.uint8)
    return PointCloud(positions, colors)


def write_ply(path, cloud: PointCloud) -> None:
    """Write a binary-little-endian PLY with float64 positions and uint8 colors."""
    n = len(cloud)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    rec = np.empty(n, dtype=[("pos", "<f8", 3), ("rgb", "u1", 3)])
    rec["pos"] = cloud.positions
    rec["rgb"] = cloud.colors
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(rec.tobytes())


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


def generate(preset: GeneratorPreset) -> PointCloud:
    """Deterministic synthetic point clouds, all inside the unit cube."""
    n, seed = preset.count, preset.seed
    if preset.kind == "uniform-cube":
        raw = rng.stream(seed, 6 * n).reshape(n, 6)
        positions = rng.to_unit(raw[:, :3])
        colors = (raw[:, 3:6] >> np.uint64(56)).astype(np.uint8)
        return PointCloud(positions, colors)

    if preset.kind == "checker-plane":
        raw = rng.stream(seed, 2 * n).reshape(n, 2)
        xy = rng.to_unit(raw)
        positions = np.zeros((n, 3))
        positions[:, :2] = xy
        tiles = np.floor(xy * 8).astype(np.int64)
        white = (tiles.sum(axis=1) % 2) == 0
        colors = np.zeros((n, 3), np.uint8)
        colors[white] = 255
        return PointCloud(positions, colors)

    if preset.kind == "stadium":
        # 90% fill the unit cube; every tenth point lands in a tiny dense cube
        raw = rng.stream(seed, 6 * n).reshape(n, 6)
        u = rng.to_unit(raw[:, :3])
        positions = u.copy()
        dense = (np.arange(n) % 10) == 0
        positions[dense] = DENSE_CUBE_MIN + u[dense] * DENSE_CUBE_SIZE
        colors = (raw[:, 3:6] >> np.uint64(56)).astype(np.uint8)
        return PointCloud(positions, colors)

    # two-scans: one jittered surface captured twice with different exposure,
    # interleaved A,B,A,B the way sequential scan files concatenate
    m = (n + 1) // 2
    raw = rng.stream(seed, 3 * m).reshape(m, 3)
    base = np.empty((m, 3))
    base[:, 0] = rng.to_unit(raw[:, 0])
    base[:, 1] = rng.to_unit(raw[:, 1])
    base[:, 2] = 0.5 + (rng.to_unit(raw[:, 2]) - 0.5) * 0.02
    positions = np.repeat(base, 2, axis=0)[:n]
    colors = np.empty((2 * m, 3), np.uint8)
    colors[0::2] = SCAN_A_COLOR
    colors[1::2] = SCAN_B_COLOR
    return PointCloud(positions, colors[:n])
