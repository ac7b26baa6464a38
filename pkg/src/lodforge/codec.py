"""VLPC serialization: bit-exact octree files with quantized voxel payloads.

Layout (all little-endian, no alignment padding):
  header     "VLPC", u32 version, 3x f64 world min, f64 world size,
             u32 T, u64 point count, u32 node count, u8 strategy, u64 seed
  node table per node: u8 path length, path bytes (one octant each),
             u8 kind (0 leaf / 1 inner), u8 flags (bit 0 oversized),
             u32 sample count, u64 payload offset
  payload    leaves: 16-byte records (3x f32 offset from node min, rgb, pad)
             inner:   6-byte records (cx, cy, cz, r, g, b)
Node records are sorted by path, shorter prefixes first.
"""
from __future__ import annotations

import io
import struct

import numpy as np

from .errors import FormatError
from .model import AABB, BuildConfig, Octree, OctreeNode, STRATEGIES, bounds_at

MAGIC = b"VLPC"
VERSION = 1
_HEADER = struct.Struct("<4sI3ddIQIBQ")
_NODE_FIXED = struct.Struct("<BBIQ")

LEAF_RECORD = np.dtype([("off", "<f4", 3), ("rgb", "u1", 3), ("pad", "u1")])
VOXEL_RECORD = np.dtype([("c", "u1", 3), ("rgb", "u1", 3)])

STRATEGY_CODES = {name: i for i, name in enumerate(STRATEGIES)}


def _leaf_payload(node: OctreeNode) -> bytes:
    rec = np.zeros(node.point_count, dtype=LEAF_RECORD)
    rel = node.point_positions - node.bounds.min_array()
    rec["off"] = np.clip(rel.astype(np.float32), 0.0, np.float32(node.bounds.size))
    rec["rgb"] = node.point_colors
    return rec.tobytes()


def _voxel_payload(node: OctreeNode) -> bytes:
    rec = np.empty(node.voxel_count, dtype=VOXEL_RECORD)
    rec["c"] = node.voxel_coords
    rec["rgb"] = node.voxel_colors
    return rec.tobytes()


def encode(tree: Octree, dest) -> int:
    """Write the tree as a VLPC stream; returns the number of bytes written."""
    nodes = sorted(tree.iter_nodes(), key=lambda n: n.path)
    table = io.BytesIO()
    payload = io.BytesIO()
    for node in nodes:
        offset = payload.tell()
        if node.is_leaf:
            kind, count = 0, node.point_count
            payload.write(_leaf_payload(node))
        else:
            kind, count = 1, node.voxel_count
            payload.write(_voxel_payload(node))
        table.write(bytes([len(node.path)]) + bytes(node.path))
        table.write(_NODE_FIXED.pack(kind, 1 if node.oversized else 0, count, offset))

    cfg = tree.config
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        *tree.world_bounds.min,
        tree.world_bounds.size,
        cfg.T,
        tree.point_count,
        len(nodes),
        STRATEGY_CODES.get(cfg.strategy, 0),
        cfg.seed,
    )
    blob = header + table.getvalue() + payload.getvalue()
    if hasattr(dest, "write"):
        dest.write(blob)
    else:
        with open(dest, "wb") as f:
            f.write(blob)
    return len(blob)


def read_header(data: bytes) -> dict:
    if len(data) < _HEADER.size:
        raise FormatError("file too small for a VLPC header")
    magic, version, mx, my, mz, size, t, points, nodes, strategy, seed = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad magic: not a VLPC file")
    if version != VERSION:
        raise FormatError(f"unsupported VLPC version {version}")
    return {
        "worldMin": (mx, my, mz),
        "worldSize": size,
        "T": t,
        "pointCount": points,
        "nodeCount": nodes,
        "strategy": STRATEGIES[strategy] if strategy < len(STRATEGIES) else str(strategy),
        "seed": seed,
    }


def decode(src) -> Octree:
    """Read a VLPC stream back into an octree."""
    if hasattr(src, "read"):
        data = src.read()
    else:
        with open(src, "rb") as f:
            data = f.read()
    hdr = read_header(data)
    world = AABB(hdr["worldMin"], hdr["worldSize"])

    pos = _HEADER.size
    records = []
    for _ in range(hdr["nodeCount"]):
        if pos >= len(data):
            raise FormatError("truncated node table")
        path_len = data[pos]
        pos += 1
        if pos + path_len + _NODE_FIXED.size > len(data):
            raise FormatError("truncated node table")
        path = tuple(data[pos : pos + path_len])
        pos += path_len
        kind, flags, count, offset = _NODE_FIXED.unpack_from(data, pos)
        pos += _NODE_FIXED.size
        records.append((path, kind, flags, count, offset))
    payload = data[pos:]

    nodes: dict[tuple[int, ...], OctreeNode] = {}
    for path, kind, flags, count, offset in records:
        if any(o > 7 for o in path):
            raise FormatError(f"invalid octant in path {path}")
        if path in nodes:
            raise FormatError(f"duplicate node path {path}")
        bounds = bounds_at(world, path)
        node = OctreeNode(path, bounds, oversized=bool(flags & 1))
        if kind == 0:
            rec = _slice_payload(payload, offset, count, LEAF_RECORD)
            node.point_positions = bounds.min_array() + rec["off"].astype(np.float64)
            node.point_colors = rec["rgb"].copy()
        elif kind == 1:
            node.children = [None] * 8
            rec = _slice_payload(payload, offset, count, VOXEL_RECORD)
            node.voxel_coords = rec["c"].copy()
            node.voxel_colors = rec["rgb"].copy()
        else:
            raise FormatError(f"unknown node kind {kind}")
        nodes[path] = node

    if () not in nodes:
        raise FormatError("missing root node")
    for path, node in nodes.items():
        if not path:
            continue
        parent = nodes.get(path[:-1])
        if parent is None or parent.children is None:
            raise FormatError(f"node {path} has no inner parent")
        parent.children[path[-1]] = node

    cfg = BuildConfig(T=hdr["T"], strategy=hdr["strategy"], seed=hdr["seed"])
    return Octree(nodes[()], world, cfg)


def _slice_payload(payload: bytes, offset: int, count: int, dtype: np.dtype) -> np.ndarray:
    end = offset + count * dtype.itemsize
    if offset < 0 or end > len(payload):
        raise FormatError("truncated payload")
    return np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
