"""Core domain types: colors, points, cubic bounds, octree nodes.

Coordinate conventions used everywhere:
  * node bounds are cubes, addressed by an octant path from the root
  * octant bit 0 offsets x, bit 1 offsets y, bit 2 offsets z
  * grid projection uses floor((p - min) / size * dim) with the max face
    clamped into the last cell (closed upper boundary)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConsistencyError

GRID_SIZE = 128
MAX_PATH_LEN = 16


class ColorRGB(NamedTuple):
    r: int
    g: int
    b: int


class Point(NamedTuple):
    x: float
    y: float
    z: float
    color: ColorRGB


GRAY = ColorRGB(128, 128, 128)


@dataclass(frozen=True)
class AABB:
    """Axis-aligned cube: min corner plus a single side length."""

    min: tuple[float, float, float]
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("AABB size must be positive")

    @property
    def max(self) -> tuple[float, float, float]:
        return (self.min[0] + self.size, self.min[1] + self.size, self.min[2] + self.size)

    @property
    def center(self) -> tuple[float, float, float]:
        h = self.size / 2
        return (self.min[0] + h, self.min[1] + h, self.min[2] + h)

    def min_array(self) -> np.ndarray:
        return np.asarray(self.min, dtype=np.float64)


def child_bounds(parent: AABB, octant: int) -> AABB:
    """Bounds of the child cube in the given octant (bit 0 -> x, 1 -> y, 2 -> z)."""
    if not 0 <= octant <= 7:
        raise ValueError(f"octant out of range: {octant}")
    h = parent.size / 2
    return AABB(
        (
            parent.min[0] + h * (octant & 1),
            parent.min[1] + h * ((octant >> 1) & 1),
            parent.min[2] + h * ((octant >> 2) & 1),
        ),
        h,
    )


def bounds_at(world: AABB, path: tuple[int, ...]) -> AABB:
    b = world
    for octant in path:
        b = child_bounds(b, octant)
    return b


def cells_of(positions: np.ndarray, bounds: AABB, grid_dim: int) -> np.ndarray:
    """Project points into a grid_dim^3 grid over bounds; (n, 3) int64 cells.

    Points on the max face land in the last cell; points outside bounds raise.
    """
    if grid_dim < 1:
        raise ValueError("grid_dim must be >= 1")
    pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    mn = bounds.min_array()
    rel = pos - mn
    if (rel < 0).any() or (rel > bounds.size).any():
        raise ConsistencyError("point outside bounds during grid projection")
    cells = np.floor(rel / bounds.size * grid_dim).astype(np.int64)
    np.clip(cells, 0, grid_dim - 1, out=cells)
    return cells


def cell_of(point, bounds: AABB, grid_dim: int) -> tuple[int, int, int]:
    """Grid cell of a single point (see cells_of)."""
    p = point[:3] if isinstance(point, (tuple, list, Point)) else point
    c = cells_of(np.asarray(p, dtype=np.float64).reshape(1, 3), bounds, grid_dim)[0]
    return (int(c[0]), int(c[1]), int(c[2]))


@dataclass
class BuildConfig:
    T: int = 50_000
    initial_depth: int = 8
    extension_depth: int = 4
    max_depth: int = 16
    grid_size: int = GRID_SIZE
    strategy: str = "first-come"
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.max_depth < self.initial_depth:
            raise ValueError("max_depth must be >= initial_depth")
        if self.max_depth > MAX_PATH_LEN:
            raise ValueError(f"max_depth must be <= {MAX_PATH_LEN}")


STRATEGIES = ("first-come", "random", "average", "weighted")


@dataclass
class OctreeNode:
    """Octree node: leaves carry original points, inner nodes carry voxels."""

    path: tuple[int, ...]
    bounds: AABB
    children: list["OctreeNode | None"] | None = None  # None marks a leaf
    point_positions: np.ndarray | None = None  # (n, 3) float64, leaves only
    point_colors: np.ndarray | None = None  # (n, 3) uint8, leaves only
    voxel_coords: np.ndarray | None = None  # (m, 3) uint8, inner only
    voxel_colors: np.ndarray | None = None  # (m, 3) uint8, inner only
    oversized: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def point_count(self) -> int:
        return 0 if self.point_positions is None else len(self.point_positions)

    @property
    def voxel_count(self) -> int:
        return 0 if self.voxel_coords is None else len(self.voxel_coords)

    @property
    def sample_count(self) -> int:
        return self.point_count if self.is_leaf else self.voxel_count

    def existing_children(self) -> Iterator[tuple[int, "OctreeNode"]]:
        if self.children is not None:
            for octant, child in enumerate(self.children):
                if child is not None:
                    yield octant, child


@dataclass
class Octree:
    root: OctreeNode
    world_bounds: AABB
    config: BuildConfig = field(default_factory=BuildConfig)

    def iter_nodes(self) -> Iterator[OctreeNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if node.children is not None:
                stack.extend(c for c in reversed(node.children) if c is not None)

    def leaves(self) -> list[OctreeNode]:
        return [n for n in self.iter_nodes() if n.is_leaf]

    def inner_nodes(self) -> list[OctreeNode]:
        return [n for n in self.iter_nodes() if not n.is_leaf]

    @property
    def point_count(self) -> int:
        return sum(n.point_count for n in self.leaves())

    @property
    def node_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())


def world_bounds_of(positions: np.ndarray) -> AABB:
    """Cubic world bounds: component-wise min, side = max axis extent (1.0 if degenerate)."""
    pos = np.asarray(positions, dtype=np.float64)
    if pos.size == 0:
        raise ValueError("cannot bound an empty point set")
    if not np.isfinite(pos).all():
        raise ValueError("point coordinates must be finite")
    mn = pos.min(axis=0)
    extent = float((pos.max(axis=0) - mn).max())
    size = extent if extent > 0 else 1.0
    return AABB((float(mn[0]), float(mn[1]), float(mn[2])), size)
