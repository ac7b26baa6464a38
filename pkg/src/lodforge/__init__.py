"""lodforge: in-memory LOD construction for colored point clouds.

Partitions points into an octree via hierarchical counting sort, fills
inner nodes with color-filtered voxels, and verifies view-dependent LOD
selection headlessly.
"""
from .model import AABB, BuildConfig, ColorRGB, Octree, OctreeNode, Point
from .ingest import GeneratorPreset, PointCloud, generate, read_las, read_ply, write_ply
from .partition import partition
from .sampling import build_lod
from .traversal import Camera, SelectionResult, select
from .codec import decode, encode

__all__ = [
    "AABB",
    "BuildConfig",
    "Camera",
    "ColorRGB",
    "GeneratorPreset",
    "Octree",
    "OctreeNode",
    "Point",
    "PointCloud",
    "SelectionResult",
    "build_lod",
    "decode",
    "encode",
    "generate",
    "partition",
    "read_las",
    "read_ply",
    "select",
    "write_ply",
]

__version__ = "0.1.0"
