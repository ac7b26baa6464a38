"""Populate inner nodes bottom-up with color-filtered voxels.

Child samples (leaf points or child voxels) are projected into the parent
node's 128^3 sampling grid; one of four strategies then extracts a voxel
per occupied cell. Sample ordinals are canonical: children in octant order
0..7, each child's samples in stored order. Output voxels are listed by
winning ordinal for the first-come strategy and in ascending cell index
for the other three.
"""
from __future__ import annotations

import numpy as np

from . import rng
from .errors import ConsistencyError
from .model import GRID_SIZE, Octree, OctreeNode, STRATEGIES

MAX_RANDOM_SAMPLES = 1 << 20  # sample index must fit the 20-bit key field


def project_child_samples(node: OctreeNode) -> tuple[np.ndarray, np.ndarray]:
    """Project all child samples into the node's sampling grid.

    Returns (gpos, colors): (S, 3) float64 positions in [0, 128) grid
    coordinates and (S, 3) uint8 colors, in canonical ordinal order.
    """
    if node.is_leaf:
        raise ValueError("cannot project samples for a leaf node")
    g = float(GRID_SIZE)
    upper = np.nextafter(g, 0.0)
    mn = node.bounds.min_array()
    pos_parts, col_parts = [], []
    for octant, child in node.existing_children():
        if child.sample_count == 0:
            raise ConsistencyError(f"child {child.path} has no samples")
        if child.is_leaf:
            gpos = (child.point_positions - mn) / node.bounds.size * g
            np.clip(gpos, 0.0, upper, out=gpos)
            col_parts.append(child.point_colors)
        else:
            off = np.array(
                [64.0 * (octant & 1), 64.0 * ((octant >> 1) & 1), 64.0 * ((octant >> 2) & 1)]
            )
            gpos = off + (child.voxel_coords.astype(np.float64) + 0.5) / 2.0
            col_parts.append(child.voxel_colors)
        pos_parts.append(gpos)
    return np.concatenate(pos_parts), np.concatenate(col_parts)


def _cell_keys(gpos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cells = np.floor(gpos).astype(np.int64)
    keys = (cells[:, 0] * GRID_SIZE + cells[:, 1]) * GRID_SIZE + cells[:, 2]
    return cells, keys


def _decode_keys(keys: np.ndarray) -> np.ndarray:
    g = GRID_SIZE
    return np.stack([keys // (g * g), (keys // g) % g, keys % g], axis=1).astype(np.uint8)


def extract_first_come(gpos: np.ndarray, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per cell, the sample with the smallest ordinal wins; output by winner ordinal."""
    cells, keys = _cell_keys(gpos)
    _, first = np.unique(keys, return_index=True)
    winners = np.sort(first)
    return cells[winners].astype(np.uint8), colors[winners].copy()


def extract_random(
    gpos: np.ndarray, colors: np.ndarray, seed: int, node_hash: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per cell, the sample with the largest (random12 | ordinal20) key wins."""
    n = len(gpos)
    if n >= MAX_RANDOM_SAMPLES:
        raise ConsistencyError(f"{n} samples exceed the 20-bit index limit of random sampling")
    _, keys = _cell_keys(gpos)
    ordinals = np.arange(n, dtype=np.uint64)
    rand64 = rng.mix64_array(np.uint64((seed ^ node_hash) & rng.MASK64) ^ ordinals)
    rand32 = (rand64 >> np.uint64(32)).astype(np.uint32)
    encoded = (rand32 & np.uint32(0xFFF00000)) | (ordinals.astype(np.uint32) & np.uint32(0xFFFFF))
    order = np.lexsort((encoded, keys))
    ck = keys[order]
    last = np.flatnonzero(np.r_[ck[1:] != ck[:-1], True])
    winners = order[last]  # ascending cell index
    return _decode_keys(ck[last]), colors[winners].copy()


def extract_average(gpos: np.ndarray, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per occupied cell, the rounded arithmetic mean color (half away from zero)."""
    _, keys = _cell_keys(gpos)
    uniq, inv = np.unique(keys, return_inverse=True)
    count = np.bincount(inv).astype(np.int64)
    out = np.empty((len(uniq), 3), np.uint8)
    for ch in range(3):
        sums = np.bincount(inv, weights=colors[:, ch]).astype(np.int64)
        out[:, ch] = (2 * sums + count) // (2 * count)
    return _decode_keys(uniq), out


def extract_weighted(gpos: np.ndarray, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance-weighted mean over the 2x2x2 neighborhood around each sample.

    weight = clamp(1 - euclidean distance to the cell center, 0, 1); only
    cells actually containing a sample emit a voxel.
    """
    g = GRID_SIZE
    base = np.clip(np.floor(gpos - 0.5), 0, g - 2).astype(np.int64)
    key_parts, w_parts, wc_parts = [], [], []
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                cell = base + np.array([dx, dy, dz])
                d = np.sqrt(((gpos - (cell + 0.5)) ** 2).sum(axis=1))
                w = np.clip(1.0 - d, 0.0, 1.0)
                key_parts.append((cell[:, 0] * g + cell[:, 1]) * g + cell[:, 2])
                w_parts.append(w)
                wc_parts.append(w[:, None] * colors)
    keys = np.concatenate(key_parts)
    weights = np.concatenate(w_parts)
    wcolors = np.concatenate(wc_parts)

    uniq, inv = np.unique(keys, return_inverse=True)
    wsum = np.bincount(inv, weights=weights)
    csum = np.stack([np.bincount(inv, weights=wcolors[:, ch]) for ch in range(3)], axis=1)

    _, own_keys = _cell_keys(gpos)
    occupied = np.unique(own_keys)
    at = np.searchsorted(uniq, occupied)
    denom = wsum[at]
    if (denom <= 0).any():
        raise ConsistencyError("occupied cell accumulated zero weight")
    mean = np.floor(csum[at] / denom[:, None] + 0.5)
    return _decode_keys(occupied), np.clip(mean, 0, 255).astype(np.uint8)


def _sample_node(node: OctreeNode, strategy: str, seed: int) -> tuple[np.ndarray, np.ndarray]:
    gpos, colors = project_child_samples(node)
    if strategy == "first-come":
        return extract_first_come(gpos, colors)
    if strategy == "random":
        return extract_random(gpos, colors, seed, rng.path_hash(seed, node.path))
    if strategy == "average":
        return extract_average(gpos, colors)
    if strategy == "weighted":
        return extract_weighted(gpos, colors)
    raise ValueError(f"unknown sampling strategy: {strategy}")


def sample_first_come(node: OctreeNode) -> tuple[np.ndarray, np.ndarray]:
    return _sample_node(node, "first-come", 0)


def sample_random(node: OctreeNode, seed: int) -> tuple[np.ndarray, np.ndarray]:
    return _sample_node(node, "random", seed)


def sample_average(node: OctreeNode) -> tuple[np.ndarray, np.ndarray]:
    return _sample_node(node, "average", 0)


def sample_weighted(node: OctreeNode) -> tuple[np.ndarray, np.ndarray]:
    return _sample_node(node, "weighted", 0)


def build_lod(tree: Octree, strategy: str | None = None, seed: int | None = None) -> Octree:
    """Fill every inner node with voxels, deepest nodes first."""
    strategy = tree.config.strategy if strategy is None else strategy
    seed = tree.config.seed if seed is None else seed
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown sampling strategy: {strategy}")
    inner = sorted(tree.inner_nodes(), key=lambda n: n.depth, reverse=True)
    for node in inner:
        coords, colors = _sample_node(node, strategy, seed)
        node.voxel_coords = coords
        node.voxel_colors = colors
    return tree
