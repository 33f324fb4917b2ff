import numpy as np
import pytest

from voxtrack.synthdata import SceneConfig, generate


def centroid(mask):
    coords = np.argwhere(mask)
    return coords.mean(axis=0)


class TestSceneConfig:
    def test_json_roundtrip(self):
        cfg = SceneConfig(dims=(4, 8, 20, 20), n_cells=2, rng_seed=9)
        again = SceneConfig.from_json(cfg.to_json())
        assert again == cfg

    def test_missing_dims_rejected(self):
        with pytest.raises(ValueError, match="dims"):
            SceneConfig.from_json("{}")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            SceneConfig.from_json('{"dims": [2, 5, 16, 16], "wat": 1}')

    def test_radius_bounds(self):
        with pytest.raises(ValueError):
            SceneConfig(dims=(2, 8, 16, 16), radius_range=(1.0, 3.0))

    def test_density_bounds(self):
        with pytest.raises(ValueError):
            SceneConfig(dims=(2, 8, 16, 16), annotation_density=0.0)

    def test_cell_must_fit(self):
        with pytest.raises(ValueError):
            SceneConfig(dims=(2, 4, 16, 16), radius_range=(3.0, 3.0))


class TestGenerate:
    def test_static_noise_free_scene(self):
        cfg = SceneConfig(
            dims=(4, 8, 16, 16), n_cells=1, radius_range=(2.0, 3.0),
            drift_range=(0.0, 0.0), noise_sigma=0.0, rng_seed=1,
        )
        grid, lab = generate(cfg)
        for t in range(1, 4):
            assert np.array_equal(grid.data[t], grid.data[0])
            assert np.array_equal(lab.ids[t], lab.ids[0])
        # noise-free scenes are exactly two-valued
        assert set(np.unique(grid.data)) == {np.float32(0.1), np.float32(0.8)}
        assert np.array_equal(grid.data == np.float32(0.8), lab.ids == 1)

    def test_seed_determinism(self):
        cfg = SceneConfig(dims=(4, 8, 24, 24), n_cells=3, noise_sigma=0.02, rng_seed=5)
        g1, l1 = generate(cfg)
        g2, l2 = generate(cfg)
        assert np.array_equal(g1.data, g2.data)
        assert np.array_equal(l1.ids, l2.ids)

    def test_drift_advances_centroids(self):
        # unit drift along x only: the x centroid advances 1 +- 0.5 per frame
        cfg = SceneConfig(
            dims=(6, 10, 24, 48), n_cells=3, radius_range=(2.0, 3.0),
            drift_range=((0.0, 0.0), (0.0, 0.0), (1.0, 1.0)),
            noise_sigma=0.0, rng_seed=3,
        )
        _, lab = generate(cfg)
        for cell_id in (1, 2, 3):
            for t in range(5):
                before = centroid(lab.ids[t] == cell_id)
                after = centroid(lab.ids[t + 1] == cell_id)
                delta = after - before
                assert abs(delta[2] - 1.0) <= 0.5, (cell_id, t, delta)
                assert abs(delta[0]) <= 0.5 and abs(delta[1]) <= 0.5

    def test_id_permanence_between_frames(self):
        cfg = SceneConfig(dims=(8, 10, 32, 32), n_cells=3, noise_sigma=0.0,
                          radius_range=(3.0, 4.0), rng_seed=11)
        _, lab = generate(cfg)
        for cell_id in (1, 2, 3):
            for t in range(7):
                a = lab.ids[t] == cell_id
                b = lab.ids[t + 1] == cell_id
                assert np.logical_and(a, b).any(), (cell_id, t)

    def test_masks_are_disjoint_across_cells(self):
        cfg = SceneConfig(dims=(8, 10, 32, 32), n_cells=4, noise_sigma=0.0,
                          radius_range=(2.0, 4.0), rng_seed=2)
        _, lab = generate(cfg)
        counts = [(lab.ids == i).sum() for i in (1, 2, 3, 4)]
        assert all(c > 0 for c in counts)

    def test_sparse_annotation_marks_leading_frames(self):
        cfg = SceneConfig(dims=(8, 8, 24, 24), n_cells=1, annotation_density=0.25, rng_seed=0)
        _, lab = generate(cfg)
        assert lab.annotated_frames == frozenset({0, 1})

    def test_placement_failure_is_reported(self):
        cfg = SceneConfig(dims=(2, 8, 16, 16), n_cells=9, radius_range=(3.0, 3.5), rng_seed=0)
        with pytest.raises(RuntimeError, match="attempts"):
            generate(cfg)
