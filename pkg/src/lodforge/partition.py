"""Split a point cloud into octree leaf nodes with at most T points.

Pipeline (each stage is a method on Partitioner so it can be tested in
isolation): count points into the finest grid, refine overfull cells with
extended sub-pyramids, merge small sibling groups bottom-up, materialize
the node skeleton plus per-cell target references, then move every point
into its leaf in a single pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError
from .ingest import PointCloud
from .model import AABB, BuildConfig, Octree, OctreeNode, bounds_at, cells_of, world_bounds_of

# reserved counter value marking a cell that must become an inner node
UNMERGEABLE = 0xFFFFFFFF


def _linear(cells: np.ndarray, dim: int) -> np.ndarray:
    return (cells[:, 0] * dim + cells[:, 1]) * dim + cells[:, 2]


def _path_of_cell(cell: tuple[int, int, int], level: int) -> tuple[int, ...]:
    """Octant path of a grid cell at the given level (msb first)."""
    cx, cy, cz = cell
    return tuple(
        ((cx >> s) & 1) | (((cy >> s) & 1) << 1) | (((cz >> s) & 1) << 2)
        for s in range(level - 1, -1, -1)
    )


def merge_pyramid(finest: np.ndarray, T: int) -> list[np.ndarray]:
    """Merge a counting grid bottom-up into a full pyramid.

    A 2x2x2 group of plain counters summing below T is replaced by its sum
    one level up and zeroed; a group at or above T, or containing an
    UNMERGEABLE cell, flags the parent cell UNMERGEABLE instead.
    Returns grids from the 1^3 root (index 0) down to the input grid.
    """
    grid = finest.astype(np.int64, copy=True)
    levels = [grid]
    while grid.shape[0] > 1:
        h = grid.shape[0] // 2
        flagged = grid == UNMERGEABLE
        plain = np.where(flagged, 0, grid)
        group = lambda a: a.reshape(h, 2, h, 2, h, 2)
        sums = group(plain).sum(axis=(1, 3, 5))
        any_flag = group(flagged).any(axis=(1, 3, 5))
        nonempty = (sums > 0) | any_flag
        mergeable = ~any_flag & (sums > 0) & (sums < T)
        parent = np.where(mergeable, sums, np.where(nonempty, UNMERGEABLE, 0))
        clear = mergeable.repeat(2, 0).repeat(2, 1).repeat(2, 2)
        grid[clear] = 0
        grid = parent
        levels.append(grid)
    levels.reverse()
    return levels


@dataclass
class ExtendedPyramid:
    """Sub-pyramid refining one overfull cell (the anchor) by extra levels."""

    anchor_path: tuple[int, ...]
    anchor_cell: np.ndarray  # absolute grid coords of the anchor at its level
    depth: int  # number of extra levels (finest grid is (2^depth)^3)
    finest: np.ndarray
    point_idx: np.ndarray  # global indices of the anchor's points, input order
    rel_cells: np.ndarray  # (n, 3) finest-level coords relative to the anchor
    children: dict[tuple[int, int, int], "ExtendedPyramid"] = field(default_factory=dict)
    levels: list[np.ndarray] | None = None  # filled by merge
    refs: list[np.ndarray] | None = None  # per-level leaf-id grids, filled by build_targets


class Partitioner:
    """Stateful builder running the counting-sort partition stages in order."""

    def __init__(self, cloud: PointCloud, config: BuildConfig, bounds: AABB | None = None):
        if len(cloud) == 0:
            raise ValueError("cannot partition an empty point cloud")
        self.cloud = cloud
        self.config = config
        self.bounds = bounds if bounds is not None else world_bounds_of(cloud.positions)
        self.grid: np.ndarray | None = None  # finest main counting grid
        self.cells: np.ndarray | None = None  # (n, 3) finest main-level cells
        self.extended: dict[tuple[int, int, int], ExtendedPyramid] = {}
        self.levels: list[np.ndarray] | None = None
        self.refs: list[np.ndarray] | None = None
        self.leaf_nodes: list[OctreeNode] = []
        self.leaf_counts: list[int] = []
        self.nodes: dict[tuple[int, ...], OctreeNode] = {}

    # -- stage 1: counting ---------------------------------------------------

    def count(self) -> np.ndarray:
        dim = 2 ** self.config.initial_depth
        self.cells = cells_of(self.cloud.positions, self.bounds, dim)
        key = _linear(self.cells, dim)
        self.grid = np.bincount(key, minlength=dim**3).reshape(dim, dim, dim)
        self._key = key
        return self.grid

    # -- stage 2: recursive extension of overfull cells ----------------------

    def extend_overfull_cells(self) -> dict[tuple[int, int, int], ExtendedPyramid]:
        cfg = self.config
        overfull = np.argwhere(self.grid > cfg.T)
        if cfg.max_depth > cfg.initial_depth and len(overfull):
            order = np.argsort(self._key, kind="stable")
            sorted_keys = self._key[order]
            dim = 2**cfg.initial_depth
            for cell in overfull:
                cell_t = (int(cell[0]), int(cell[1]), int(cell[2]))
                k = (cell[0] * dim + cell[1]) * dim + cell[2]
                lo, hi = np.searchsorted(sorted_keys, [k, k + 1])
                idx = np.sort(order[lo:hi])  # global indices in input order
                path = _path_of_cell(cell_t, cfg.initial_depth)
                self.extended[cell_t] = self._build_extended(idx, path, cell)
        return self.extended

    def _build_extended(
        self, idx: np.ndarray, anchor_path: tuple[int, ...], anchor_cell: np.ndarray
    ) -> ExtendedPyramid:
        cfg = self.config
        base = len(anchor_path)
        ext = min(cfg.extension_depth, cfg.max_depth - base)
        dim_fine = 2 ** (base + ext)
        span = 2**ext
        mn = self.bounds.min_array()
        fine = np.floor((self.cloud.positions[idx] - mn) / self.bounds.size * dim_fine)
        fine = np.clip(fine, 0, dim_fine - 1).astype(np.int64)
        rel = np.clip(fine - anchor_cell[None, :] * span, 0, span - 1)
        key = _linear(rel, span)
        grid = np.bincount(key, minlength=span**3).reshape(span, span, span)
        ep = ExtendedPyramid(anchor_path, np.asarray(anchor_cell), ext, grid, idx, rel)
        if base + ext < cfg.max_depth:
            order = np.argsort(key, kind="stable")
            sorted_keys = key[order]
            for cell in np.argwhere(grid > cfg.T):
                cell_t = (int(cell[0]), int(cell[1]), int(cell[2]))
                k = (cell[0] * span + cell[1]) * span + cell[2]
                lo, hi = np.searchsorted(sorted_keys, [k, k + 1])
                sub_idx = np.sort(idx[order[lo:hi]])
                sub_path = anchor_path + _path_of_cell(cell_t, ext)
                sub_cell = anchor_cell * span + cell
                ep.children[cell_t] = self._build_extended(sub_idx, sub_path, sub_cell)
        return ep

    # -- stage 3: bottom-up merging ------------------------------------------

    def merge(self) -> list[np.ndarray]:
        finest = self.grid.astype(np.int64, copy=True)
        for ep in self.extended.values():
            self._merge_extended(ep)
            finest[tuple(ep.anchor_cell)] = UNMERGEABLE
        self.levels = merge_pyramid(finest, self.config.T)
        return self.levels

    def _merge_extended(self, ep: ExtendedPyramid) -> None:
        finest = ep.finest.astype(np.int64, copy=True)
        for cell, child in ep.children.items():
            self._merge_extended(child)
            finest[cell] = UNMERGEABLE
        ep.levels = merge_pyramid(finest, self.config.T)
        if int(ep.levels[0].flat[0]) != UNMERGEABLE:
            raise ConsistencyError("extended pyramid root must be unmergeable")

    # -- stage 4: node skeleton + target references --------------------------

    def build_targets(self) -> Octree:
        cfg = self.config
        self.nodes = {}
        self.leaf_nodes = []
        self.leaf_counts = []
        self.refs = self._materialize_levels(
            self.levels, (), at_max_depth=cfg.initial_depth >= cfg.max_depth
        )
        for ep in self._iter_extended():
            ep.refs = self._materialize_levels(
                ep.levels,
                ep.anchor_path,
                at_max_depth=len(ep.anchor_path) + ep.depth >= cfg.max_depth,
            )
        self._link_children()
        root = self.nodes.get(())
        if root is None:
            raise ConsistencyError("partition produced no root node")
        return Octree(root, self.bounds, cfg)

    def _iter_extended(self):
        stack = list(self.extended.values())
        while stack:
            ep = stack.pop()
            yield ep
            stack.extend(ep.children.values())

    def _materialize_levels(
        self, levels: list[np.ndarray], prefix: tuple[int, ...], at_max_depth: bool
    ) -> list[np.ndarray]:
        """Create nodes for every non-empty cell and return per-level leaf-id grids."""
        refs = []
        n_levels = len(levels)
        for l, grid in enumerate(levels):
            ref = np.full(grid.size, -1, np.int32)
            flat = grid.reshape(-1)
            occupied = np.flatnonzero(flat)
            dim = grid.shape[0]
            for lin in occupied:
                v = int(flat[lin])
                cell = (int(lin) // (dim * dim), (int(lin) // dim) % dim, int(lin) % dim)
                path = prefix + _path_of_cell(cell, l)
                if path in self.nodes:  # prefix root duplicates the anchor's inner node
                    continue
                bounds = bounds_at(self.bounds, path)
                if v == UNMERGEABLE:
                    self.nodes[path] = OctreeNode(path, bounds, children=[None] * 8)
                else:
                    oversized = v > self.config.T
                    if oversized and not (at_max_depth and l == n_levels - 1):
                        raise ConsistencyError("oversized leaf away from max depth")
                    node = OctreeNode(path, bounds, oversized=oversized)
                    ref[lin] = len(self.leaf_nodes)
                    self.nodes[path] = node
                    self.leaf_nodes.append(node)
                    self.leaf_counts.append(v)
            refs.append(ref)
        return refs

    def _link_children(self) -> None:
        for path, node in self.nodes.items():
            if not path:
                continue
            parent = self.nodes.get(path[:-1])
            if parent is None or parent.children is None:
                raise ConsistencyError(f"node {path} has no inner parent")
            parent.children[path[-1]] = node

    # -- stage 5: insertion ---------------------------------------------------

    def insert(self) -> None:
        cfg = self.config
        n = len(self.cloud)
        leaf_of = np.full(n, -1, np.int64)
        for ep in self.extended.values():
            self._resolve_extended(ep, leaf_of)
        depth = cfg.initial_depth
        for l in range(depth, -1, -1):
            todo = np.flatnonzero(leaf_of < 0)
            if todo.size == 0:
                break
            shift = depth - l
            cells = self.cells[todo] >> shift
            lin = _linear(cells, 2**l)
            leaf_of[todo] = self.refs[l][lin]
        if (leaf_of < 0).any():
            raise ConsistencyError("point did not resolve to a leaf node")

        order = np.argsort(leaf_of, kind="stable")
        sorted_ids = leaf_of[order]
        starts = np.searchsorted(sorted_ids, np.arange(len(self.leaf_nodes)))
        ends = np.searchsorted(sorted_ids, np.arange(1, len(self.leaf_nodes) + 1))
        for i, leaf in enumerate(self.leaf_nodes):
            sel = order[starts[i] : ends[i]]
            if len(sel) != self.leaf_counts[i]:
                raise ConsistencyError("leaf received a different count than allocated")
            leaf.point_positions = self.cloud.positions[sel].copy()
            leaf.point_colors = self.cloud.colors[sel].copy()

    def _resolve_extended(self, ep: ExtendedPyramid, leaf_of: np.ndarray) -> None:
        for child in ep.children.values():
            self._resolve_extended(child, leaf_of)
        local = leaf_of[ep.point_idx]
        for l in range(ep.depth, 0, -1):
            todo = np.flatnonzero(local < 0)
            if todo.size == 0:
                break
            shift = ep.depth - l
            cells = ep.rel_cells[todo] >> shift
            lin = _linear(cells, 2**l)
            local[todo] = ep.refs[l][lin]
        if (local < 0).any():
            raise ConsistencyError("point in extended grid did not resolve to a leaf")
        leaf_of[ep.point_idx] = local

    # -- composite ------------------------------------------------------------

    def run(self) -> Octree:
        self.count()
        self.extend_overfull_cells()
        self.merge()
        tree = self.build_targets()
        self.insert()
        return tree


def partition(cloud: PointCloud, config: BuildConfig | None = None) -> Octree:
    """Partition a point cloud into an octree with at most T points per leaf."""
    return Partitioner(cloud, config or BuildConfig()).run()
