import numpy as np
import pytest

from oracles import assert_trees_match, reference_split

from lodforge.errors import ConsistencyError
from lodforge.ingest import GeneratorPreset, PointCloud, generate
from lodforge.model import AABB, BuildConfig, cells_of, world_bounds_of
from lodforge.partition import UNMERGEABLE, Partitioner, merge_pyramid, partition


def uniform(n, seed=42):
    return generate(GeneratorPreset("uniform-cube", n, seed))


class TestCount:
    def test_conservation(self):
        p = Partitioner(uniform(100_000), BuildConfig())
        grid = p.count()
        assert grid.sum() == 100_000

    def test_degenerate_cluster(self):
        n = 500
        cloud = PointCloud(np.zeros((n, 3)), np.zeros((n, 3), np.uint8))
        p = Partitioner(cloud, BuildConfig(), bounds=AABB((0, 0, 0), 1))
        grid = p.count()
        assert grid[0, 0, 0] == n
        assert grid.sum() == n

    def test_matches_brute_force_histogram(self):
        cloud = uniform(1000)
        p = Partitioner(cloud, BuildConfig())
        grid = p.count()
        cells = cells_of(cloud.positions, p.bounds, 256)
        expected = np.zeros((256, 256, 256), np.int64)
        for c in cells:
            expected[tuple(c)] += 1
        assert np.array_equal(grid, expected)


class TestMergePyramid:
    def _grid(self, dim, entries):
        g = np.zeros((dim, dim, dim), np.int64)
        for cell, v in entries.items():
            g[cell] = v
        return g

    def test_small_group_merges(self):
        finest = self._grid(2, {(x, y, z): 1000 for x in (0, 1) for y in (0, 1) for z in (0, 1)})
        levels = merge_pyramid(finest, T=50_000)
        assert levels[0].flat[0] == 8000
        assert (levels[1] == 0).all()

    def test_group_at_threshold_flags_parent(self):
        finest = self._grid(2, {(0, 0, 0): 49_999, (1, 0, 0): 1})
        levels = merge_pyramid(finest, T=50_000)
        assert levels[0].flat[0] == UNMERGEABLE
        assert levels[1][0, 0, 0] == 49_999 and levels[1][1, 0, 0] == 1

    def test_unmergeable_child_propagates(self):
        finest = self._grid(2, {(0, 0, 0): UNMERGEABLE, (1, 1, 1): 3})
        levels = merge_pyramid(finest, T=50_000)
        assert levels[0].flat[0] == UNMERGEABLE
        assert levels[1][1, 1, 1] == 3  # children of a flagged group are retained

    def test_empty_group_stays_empty(self):
        levels = merge_pyramid(np.zeros((4, 4, 4), np.int64), T=10)
        assert levels[0].flat[0] == 0

    def test_cascade_over_two_levels(self):
        finest = self._grid(4, {(0, 0, 0): 5, (3, 3, 3): 7})
        levels = merge_pyramid(finest, T=100)
        assert levels[0].flat[0] == 12
        assert (levels[1] == 0).all() and (levels[2] == 0).all()


class TestBuildTargets:
    def test_fully_merged_single_leaf(self):
        tree = partition(uniform(40_000))
        assert tree.root.is_leaf
        assert tree.root.point_count == 40_000

    def test_small_input_structure(self):
        cloud = uniform(100_000)
        tree = partition(cloud, BuildConfig(T=50_000))
        assert not tree.root.is_leaf
        assert sum(n.point_count for n in tree.leaves()) == 100_000


class TestInsert:
    def test_single_leaf_preserves_input_order(self):
        cloud = uniform(40_000)
        tree = partition(cloud)
        assert np.array_equal(tree.root.point_positions, cloud.positions)
        assert np.array_equal(tree.root.point_colors, cloud.colors)

    def test_upward_walk_lands_in_merged_leaf(self):
        # a sparse cluster merges many levels up; every point must still resolve
        rng_ = np.random.default_rng(0)
        pos = rng_.random((200, 3)) * 0.001
        pos[0] = (0.9, 0.9, 0.9)  # stretch bounds so the cluster is deep in cell (0,0,0)
        cloud = PointCloud(pos, np.zeros((200, 3), np.uint8))
        tree = partition(cloud, BuildConfig(T=50))
        assert sum(n.point_count for n in tree.leaves()) == 200


class TestPartitionComposite:
    def test_single_point(self):
        cloud = PointCloud(np.array([[0.3, 0.4, 0.5]]), np.array([[1, 2, 3]], np.uint8))
        tree = partition(cloud)
        assert tree.root.is_leaf and tree.root.point_count == 1

    def test_empty_input_raises(self):
        cloud = PointCloud(np.empty((0, 3)), np.empty((0, 3), np.uint8))
        with pytest.raises(ValueError):
            partition(cloud)

    def test_capacity_on_uniform(self):
        tree = partition(uniform(300_000), BuildConfig(T=20_000))
        for leaf in tree.leaves():
            assert leaf.point_count <= 20_000

    def test_identical_points_oversized_at_max_depth(self):
        n = 2000
        pos = np.tile(np.array([[0.25, 0.5, 0.75]]), (n, 1))
        cloud = PointCloud(pos, np.zeros((n, 3), np.uint8))
        tree = partition(cloud, BuildConfig(T=500))
        leaves = tree.leaves()
        assert len(leaves) == 1
        leaf = leaves[0]
        assert leaf.oversized and leaf.depth == 16 and leaf.point_count == n

    def test_stadium_extends_past_initial_depth(self):
        # every tenth stadium point is in the dense cube: 60k of 600k exceed T=50k there
        tree = partition(generate(GeneratorPreset("stadium", 600_000, 7)))
        assert max(n.depth for n in tree.leaves()) > 8

    def test_maximality(self):
        tree = partition(uniform(300_000), BuildConfig(T=20_000))
        for node in tree.inner_nodes():
            kids = [c for _, c in node.existing_children()]
            if all(k.is_leaf for k in kids):
                assert sum(k.point_count for k in kids) >= 20_000


class TestOracleEquivalence:
    @pytest.mark.parametrize(
        "kind,count,seed,T",
        [
            ("uniform-cube", 20_000, 1, 1000),
            ("uniform-cube", 5_000, 2, 300),
            ("stadium", 30_000, 3, 1500),
            ("two-scans", 20_000, 4, 2000),
            ("checker-plane", 10_000, 5, 800),
        ],
    )
    def test_tree_matches_reference_splitter(self, kind, count, seed, T):
        cloud = generate(GeneratorPreset(kind, count, seed))
        config = BuildConfig(T=T)
        tree = partition(cloud, config)
        leaves, inners = reference_split(cloud.positions, config, world_bounds_of(cloud.positions))
        assert_trees_match(tree, cloud.positions, cloud.colors, leaves, inners)
