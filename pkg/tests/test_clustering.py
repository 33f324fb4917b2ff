import numpy as np
import pytest

from voxtrack.clustering import (
    MeanShiftConfig,
    cluster_window,
    fast_mean_shift_modes,
    mean_shift_modes,
)
from voxtrack.core import FUSED28, EmbeddingField


def unit(v):
    return v / np.linalg.norm(v)


def make_clusters(seed, n_clusters=3, n_points=300, dim=28, spread=0.01, min_sep=0.8):
    """Unit-norm points in tight caps around well-separated centers."""
    rng = np.random.default_rng(seed)
    centers = []
    while len(centers) < n_clusters:
        cand = unit(rng.standard_normal(dim))
        if all(np.linalg.norm(cand - c) >= min_sep for c in centers):
            centers.append(cand)
    membership = rng.integers(0, n_clusters, size=n_points)
    points = np.empty((n_points, dim))
    for i, m in enumerate(membership):
        points[i] = unit(centers[m] + spread * rng.standard_normal(dim))
    return points, membership


def partitions_equal(labels_a, labels_b):
    """True if two labelings induce the same partition of indices."""
    groups_a = {}
    for i, lab in enumerate(labels_a):
        groups_a.setdefault(lab, set()).add(i)
    groups_b = {}
    for i, lab in enumerate(labels_b):
        groups_b.setdefault(lab, set()).add(i)
    return set(map(frozenset, groups_a.values())) == set(map(frozenset, groups_b.values()))


class TestMeanShiftModes:
    def test_single_point_is_its_own_mode(self):
        cfg = MeanShiftConfig()
        result = mean_shift_modes(np.array([[1.0, 0.0]]), cfg)
        assert len(result.modes) == 1
        assert np.allclose(result.modes[0], [1.0, 0.0])
        assert list(result.assignment) == [0]

    def test_two_separated_clusters_recovered(self):
        points, membership = make_clusters(seed=0, n_clusters=2, n_points=100)
        result = mean_shift_modes(points, MeanShiftConfig())
        assert len(result.modes) == 2
        assert partitions_equal(result.assignment, membership)

    def test_identical_points_give_one_mode(self):
        points = np.tile(unit(np.ones(5)), (20, 1))
        result = mean_shift_modes(points, MeanShiftConfig())
        assert len(result.modes) == 1
        assert np.all(result.assignment == 0)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            mean_shift_modes(np.empty((0, 3)), MeanShiftConfig())

    def test_modes_are_fixed_points(self):
        from voxtrack.clustering import _shift_step

        cfg = MeanShiftConfig()
        for seed in range(5):
            points, _ = make_clusters(seed=seed)
            result = mean_shift_modes(points, cfg)
            shifted = _shift_step(result.modes, points, cfg)
            moves = np.linalg.norm(shifted - result.modes, axis=1)
            assert np.all(moves < cfg.convergence_eps), seed

    def test_partition_covers_every_point_once(self):
        points, _ = make_clusters(seed=3)
        result = mean_shift_modes(points, MeanShiftConfig())
        assert result.assignment.shape == (len(points),)
        assert result.assignment.min() >= 0
        assert result.assignment.max() < len(result.modes)

    def test_gaussian_kernel_also_recovers_clusters(self):
        points, membership = make_clusters(seed=5)
        result = mean_shift_modes(points, MeanShiftConfig(kernel="gaussian"))
        assert partitions_equal(result.assignment, membership)

    def test_determinism(self):
        points, _ = make_clusters(seed=7)
        a = mean_shift_modes(points, MeanShiftConfig())
        b = mean_shift_modes(points, MeanShiftConfig())
        assert np.array_equal(a.modes, b.modes)
        assert np.array_equal(a.assignment, b.assignment)


class TestFastMeanShiftModes:
    def test_matches_full_variant_on_separated_clusters(self):
        for seed in range(10):
            points, membership = make_clusters(seed=seed)
            full = mean_shift_modes(points, MeanShiftConfig(accelerated=False))
            fast = fast_mean_shift_modes(points, MeanShiftConfig(accelerated=True))
            assert partitions_equal(full.assignment, fast.assignment), seed
            assert partitions_equal(fast.assignment, membership), seed

    def test_single_bin_single_mode(self):
        rng = np.random.default_rng(1)
        points = 0.01 * rng.random((50, 4)) + 5.0
        result = fast_mean_shift_modes(points, MeanShiftConfig())
        assert len(result.modes) == 1

    def test_far_fewer_iterations_than_full(self):
        points, _ = make_clusters(seed=2, n_points=10_000, n_clusters=3)
        full = mean_shift_modes(points, MeanShiftConfig())
        fast = fast_mean_shift_modes(points, MeanShiftConfig())
        assert fast.iterations * 5 <= full.iterations
        assert fast.n_seeds < full.n_seeds

    def test_determinism(self):
        points, _ = make_clusters(seed=9)
        a = fast_mean_shift_modes(points, MeanShiftConfig())
        b = fast_mean_shift_modes(points, MeanShiftConfig())
        assert np.array_equal(a.modes, b.modes)
        assert np.array_equal(a.assignment, b.assignment)


def orthogonal_two_cell_field(dims=(2, 2, 8, 8)):
    """Fused field with two constant orthogonal cells on background."""
    vectors = np.zeros(dims + (28,), dtype=np.float32)
    fg = np.zeros(dims, dtype=np.float32)
    e1 = np.zeros(28)
    e1[0] = 1.0
    e2 = np.zeros(28)
    e2[1] = 1.0
    cell_a = np.zeros(dims, bool)
    cell_a[:, :, 1:4, 1:4] = True
    cell_b = np.zeros(dims, bool)
    cell_b[:, :, 5:8, 5:8] = True
    vectors[cell_a] = e1
    vectors[cell_b] = e2
    fg[cell_a | cell_b] = 1.0
    field = EmbeddingField(vectors=vectors, fg_score=fg, dim_kind=FUSED28)
    return field, cell_a, cell_b


class TestClusterWindow:
    def test_two_orthogonal_cells_get_two_ids(self):
        field, cell_a, cell_b = orthogonal_two_cell_field()
        for accelerated in (False, True):
            ids = cluster_window(field, MeanShiftConfig(accelerated=accelerated))
            assert set(np.unique(ids)) == {0, 1, 2}
            # id 1 is the cluster whose first voxel comes first in scan order
            assert np.all(ids[cell_a] == 1)
            assert np.all(ids[cell_b] == 2)
            assert np.all(ids[~(cell_a | cell_b)] == 0)

    def test_no_foreground_is_all_background(self):
        field, _, _ = orthogonal_two_cell_field()
        zero_fg = EmbeddingField(
            vectors=field.vectors, fg_score=np.zeros(field.dims, np.float32), dim_kind=FUSED28
        )
        ids = cluster_window(zero_fg, MeanShiftConfig())
        assert not ids.any()

    def test_small_clusters_become_background(self):
        field, cell_a, cell_b = orthogonal_two_cell_field()
        cfg = MeanShiftConfig(min_cluster_voxels=cell_a.sum() + 1)
        ids = cluster_window(field, cfg)
        assert not ids.any()

    def test_ids_are_temporally_consistent(self):
        field, cell_a, _ = orthogonal_two_cell_field()
        ids = cluster_window(field, MeanShiftConfig())
        for t in range(1, field.dims[0]):
            assert np.array_equal(ids[t], ids[0])

    def test_rejects_non_fused_field(self):
        from voxtrack.core import TEMPORAL14

        vec = np.zeros((1, 1, 2, 2, 14), dtype=np.float32)
        field = EmbeddingField(vectors=vec, fg_score=np.zeros((1, 1, 2, 2), np.float32), dim_kind=TEMPORAL14)
        with pytest.raises(ValueError):
            cluster_window(field, MeanShiftConfig())
