"""Structural invariant checks used by `lodforge validate` and the tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GRID_SIZE, Octree


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def run_checks(tree: Octree, expected_points: int | None = None, require_lod: bool = True) -> list[CheckResult]:
    results = []
    cfg = tree.config
    leaves = tree.leaves()
    inner = tree.inner_nodes()

    total = sum(n.point_count for n in leaves)
    if expected_points is None:
        expected_points = total
    results.append(
        CheckResult(
            "conservation",
            total == expected_points,
            f"leaf points {total}, expected {expected_points}",
        )
    )

    bad_cap = [n.path for n in leaves if not n.oversized and n.point_count > cfg.T]
    results.append(CheckResult("capacity", not bad_cap, f"overfull leaves: {bad_cap[:5]}"))

    bad_over = [n.path for n in leaves if n.oversized and n.depth != cfg.max_depth]
    results.append(
        CheckResult("oversized-at-max-depth", not bad_over, f"misplaced oversized: {bad_over[:5]}")
    )

    bad_max = []
    for node in inner:
        kids = [c for _, c in node.existing_children()]
        if kids and all(k.is_leaf for k in kids):
            if sum(k.point_count for k in kids) < cfg.T:
                bad_max.append(node.path)
    results.append(
        CheckResult("merging-maximality", not bad_max, f"undersized inner nodes: {bad_max[:5]}")
    )

    bad_contain = []
    for n in leaves:
        if n.point_count == 0:
            bad_contain.append(n.path)
            continue
        mn = n.bounds.min_array()
        tol = n.bounds.size * 1e-6  # decoded positions are float32 node offsets
        rel = n.point_positions - mn
        if (rel < -tol).any() or (rel > n.bounds.size + tol).any():
            bad_contain.append(n.path)
    results.append(
        CheckResult("containment", not bad_contain, f"out-of-bounds leaves: {bad_contain[:5]}")
    )

    bad_vox, bad_dup, empty_inner = [], [], []
    for n in inner:
        if n.voxel_count == 0:
            if require_lod:
                empty_inner.append(n.path)
            continue
        c = n.voxel_coords.astype(np.int64)
        if (c < 0).any() or (c >= GRID_SIZE).any():
            bad_vox.append(n.path)
        keys = (c[:, 0] * GRID_SIZE + c[:, 1]) * GRID_SIZE + c[:, 2]
        if len(np.unique(keys)) != len(keys):
            bad_dup.append(n.path)
    results.append(CheckResult("voxel-bounds", not bad_vox, f"out-of-range voxels: {bad_vox[:5]}"))
    results.append(
        CheckResult("voxel-uniqueness", not bad_dup, f"duplicate voxels: {bad_dup[:5]}")
    )
    if require_lod:
        results.append(
            CheckResult("inner-non-empty", not empty_inner, f"empty inner nodes: {empty_inner[:5]}")
        )

    no_kids = [n.path for n in inner if not any(True for _ in n.existing_children())]
    results.append(
        CheckResult("inner-has-children", not no_kids, f"childless inner nodes: {no_kids[:5]}")
    )
    return results


def all_passed(results: list[CheckResult]) -> bool:
    return all(r.passed for r in results)
