"""Headless LOD selection: frustum culling, projected-size expansion,
and replacing-LOD octant masking, without any actual rendering."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import AABB, Octree, OctreeNode

DEFAULT_THRESHOLD_PX = 100.0


@dataclass
class Camera:
    eye: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_y: float = 60.0
    viewport_w: int = 1920
    viewport_h: int = 1080
    near: float = 0.1
    far: float = 1.0e6

    def __post_init__(self):
        if tuple(self.eye) == tuple(self.look_at):
            raise ValueError("eye and look_at must differ")
        if not 0.0 < self.fov_y < 180.0:
            raise ValueError("fov_y must be in (0, 180)")
        if self.viewport_w < 1 or self.viewport_h < 1:
            raise ValueError("viewport must be at least 1x1 pixels")
        if not (self.near > 0 and self.far > self.near):
            raise ValueError("need 0 < near < far")


def _basis(camera: Camera) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    eye = np.asarray(camera.eye, dtype=np.float64)
    fwd = np.asarray(camera.look_at, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(camera.up, dtype=np.float64)
    right = np.cross(fwd, up)
    nr = np.linalg.norm(right)
    if nr < 1e-12:  # up parallel to view direction; pick an arbitrary right
        alt = np.array([1.0, 0.0, 0.0]) if abs(fwd[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, alt)
        nr = np.linalg.norm(right)
    right /= nr
    true_up = np.cross(right, fwd)
    return eye, fwd, right, true_up


def frustum_planes(camera: Camera) -> list[tuple[np.ndarray, float]]:
    """Six (normal, offset) planes; a point p is inside when dot(n, p) + d >= 0."""
    eye, fwd, right, up = _basis(camera)
    tan_y = math.tan(math.radians(camera.fov_y) / 2.0)
    tan_x = tan_y * camera.viewport_w / camera.viewport_h
    normals = [
        fwd,  # near
        -fwd,  # far
        fwd * tan_x + right,  # left
        fwd * tan_x - right,  # right
        fwd * tan_y + up,  # bottom
        fwd * tan_y - up,  # top
    ]
    anchors = [eye + fwd * camera.near, eye + fwd * camera.far, eye, eye, eye, eye]
    return [(n, -float(np.dot(n, a))) for n, a in zip(normals, anchors)]


def frustum_intersects(bounds: AABB, camera: Camera) -> bool:
    """Conservative box-frustum test (p-vertex per plane; false positives allowed)."""
    mn = bounds.min_array()
    size = bounds.size
    for n, d in frustum_planes(camera):
        p_vertex = mn + size * (n > 0)
        if float(np.dot(n, p_vertex)) + d < 0:
            return False
    return True


def projected_size(bounds: AABB, camera: Camera) -> float:
    """Estimated on-screen extent of the node's bounding sphere, in pixels."""
    center = np.asarray(bounds.center)
    eye = np.asarray(camera.eye, dtype=np.float64)
    diameter = math.sqrt(3.0) * bounds.size
    dist = float(np.linalg.norm(center - eye))
    if dist <= diameter / 2.0:
        return math.inf  # camera inside the node
    slope = math.tan(math.radians(camera.fov_y) / 2.0)
    return camera.viewport_h * diameter / (2.0 * dist * slope)


@dataclass
class SelectionItem:
    path: tuple[int, ...]
    kind: str  # "leaf" or "inner"
    total_samples: int
    drawn_samples: int
    discarded_octants: int  # bit i set: octant i replaced by a selected child

    def to_dict(self) -> dict:
        return {
            "path": list(self.path),
            "kind": self.kind,
            "totalSamples": self.total_samples,
            "drawnSamples": self.drawn_samples,
            "discardedOctants": self.discarded_octants,
        }


@dataclass
class SelectionResult:
    items: list[SelectionItem] = field(default_factory=list)
    culled_nodes: int = 0
    threshold_px: float = DEFAULT_THRESHOLD_PX

    @property
    def points_drawn(self) -> int:
        return sum(i.drawn_samples for i in self.items if i.kind == "leaf")

    @property
    def voxels_drawn(self) -> int:
        return sum(i.drawn_samples for i in self.items if i.kind == "inner")

    def to_dict(self) -> dict:
        return {
            "nodes": len(self.items),
            "pointsDrawn": self.points_drawn,
            "voxelsDrawn": self.voxels_drawn,
            "culled": self.culled_nodes,
            "thresholdPx": self.threshold_px,
            "items": [i.to_dict() for i in self.items],
        }


def voxel_octants(node: OctreeNode) -> np.ndarray:
    """Octant of each voxel: bit i set when coordinate component i >= 64."""
    c = node.voxel_coords.astype(np.int64)
    return (c[:, 0] >= 64) * 1 + (c[:, 1] >= 64) * 2 + (c[:, 2] >= 64) * 4


def select(tree: Octree, camera: Camera, threshold_px: float = DEFAULT_THRESHOLD_PX) -> SelectionResult:
    """Choose the nodes a renderer would draw for this camera."""
    result = SelectionResult(threshold_px=threshold_px)

    def visit(node: OctreeNode) -> bool:
        if not frustum_intersects(node.bounds, camera):
            result.culled_nodes += 1
            return False
        if node.is_leaf:
            n = node.point_count
            result.items.append(SelectionItem(node.path, "leaf", n, n, 0))
            return True
        slot = len(result.items)
        result.items.append(None)  # keep pre-order position; filled below
        mask = 0
        if projected_size(node.bounds, camera) > threshold_px:
            for octant, child in node.existing_children():
                if visit(child):
                    mask |= 1 << octant
        total = node.voxel_count
        if mask and total:
            drawn = int(np.count_nonzero(((mask >> voxel_octants(node)) & 1) == 0))
        else:
            drawn = total
        result.items[slot] = SelectionItem(node.path, "inner", total, drawn, mask)
        return True

    visit(tree.root)
    return result
