import numpy as np
import pytest

from voxtrack.sync import jaccard, reference_layer, stitch_windows, sync_volume


def disk(yx_shape, cy, cx, r):
    yy, xx = np.mgrid[: yx_shape[0], : yx_shape[1]]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def random_blob_volume(seed, n_z=5, size=16, n_blobs=8, n_ids=5):
    """Random instance labeling: disks with possibly repeated ids per layer."""
    rng = np.random.default_rng(seed)
    vol = np.zeros((n_z, size, size), dtype=np.uint32)
    for _ in range(n_blobs):
        z = rng.integers(0, n_z)
        cy, cx = rng.integers(2, size - 2, size=2)
        r = rng.integers(1, 4)
        vol[z][disk((size, size), cy, cx, r)] = rng.integers(1, n_ids + 1)
    return vol


class TestJaccard:
    def test_identical_nonempty(self):
        m = disk((8, 8), 4, 4, 2)
        assert jaccard(m, m) == 1.0

    def test_disjoint_nonempty(self):
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[0, 0] = True
        b[3, 3] = True
        assert jaccard(a, b) == 0.0

    def test_one_shared_of_three(self):
        # R = {p, q}, S = {q, r} -> 1/3
        a = np.zeros(4, bool)
        b = np.zeros(4, bool)
        a[[0, 1]] = True
        b[[1, 2]] = True
        assert jaccard(a, b) == pytest.approx(1.0 / 3.0)

    def test_both_empty(self):
        assert jaccard(np.zeros(3, bool), np.zeros(3, bool)) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.random((6, 6)) < 0.4
            b = rng.random((6, 6)) < 0.4
            assert jaccard(a, b) == jaccard(b, a)


class TestReferenceLayer:
    def test_single_foreground_layer(self):
        vol = np.zeros((6, 4, 4), dtype=np.uint32)
        vol[3, 1, 1] = 1
        assert reference_layer(vol) == 3

    def test_tie_takes_smallest_z(self):
        vol = np.zeros((6, 4, 4), dtype=np.uint32)
        vol[1, 0, 0] = 1
        vol[4, 0, 0] = 1
        assert reference_layer(vol) == 1

    def test_argmax_of_counts(self):
        # foreground counts per layer: 0, 5, 9, 2 -> layer 2
        vol = np.zeros((4, 4, 4), dtype=np.uint32)
        vol[1].flat[:5] = 1
        vol[2].flat[:9] = 1
        vol[3].flat[:2] = 1
        assert reference_layer(vol) == 2

    def test_all_background(self):
        assert reference_layer(np.zeros((3, 4, 4), dtype=np.uint32)) == 0


class TestSyncVolume:
    def test_relabels_7_7_9_7_to_7(self):
        # a cell spanning z=2..5 with per-slice ids 7, 7, 9, 7; the z=2
        # slice is largest, so it is the reference layer and carries id 7
        vol = np.zeros((6, 16, 16), dtype=np.uint32)
        vol[2][disk((16, 16), 8, 8, 4)] = 7
        vol[3][disk((16, 16), 8, 8, 3)] = 7
        vol[4][disk((16, 16), 8, 8, 3)] = 9
        vol[5][disk((16, 16), 8, 8, 3)] = 7
        assert reference_layer(vol) == 2
        out = sync_volume(vol)
        for z in (2, 3, 4, 5):
            assert set(np.unique(out[z])) == {0, 7}, z
        assert np.array_equal(out > 0, vol > 0)

    def test_single_layer_identity(self):
        vol = np.zeros((1, 8, 8), dtype=np.uint32)
        vol[0][disk((8, 8), 2, 2, 1)] = 3
        vol[0][disk((8, 8), 6, 6, 1)] = 5
        assert np.array_equal(sync_volume(vol), vol)

    def test_separated_cells_do_not_merge(self):
        vol = np.zeros((3, 16, 16), dtype=np.uint32)
        for z in range(3):
            vol[z][disk((16, 16), 4, 4, 2)] = 1
            vol[z][disk((16, 16), 12, 12, 2)] = 2
        out = sync_volume(vol)
        assert np.array_equal(out, vol)

    def test_unmatched_mask_keeps_or_gets_fresh_id(self):
        # the z=1 mask at a far corner overlaps nothing in the reference layer
        vol = np.zeros((2, 16, 16), dtype=np.uint32)
        vol[0][disk((16, 16), 4, 4, 3)] = 1
        vol[1][disk((16, 16), 12, 12, 2)] = 9
        out = sync_volume(vol)
        assert set(np.unique(out[1])) == {0, 9}  # no collision, id kept
        assert np.array_equal(out[0], vol[0])

    def test_unmatched_mask_colliding_with_reference_id_moves(self):
        # the far z=1 mask reuses the reference id 1 and must move off it
        vol = np.zeros((2, 16, 16), dtype=np.uint32)
        vol[0][disk((16, 16), 4, 4, 3)] = 1
        vol[1][disk((16, 16), 12, 12, 2)] = 1
        out = sync_volume(vol)
        new_id = int(np.unique(out[1][out[1] > 0])[0])
        assert new_id != 1
        assert np.array_equal(out[1] > 0, vol[1] > 0)

    def test_foreground_preserved_and_idempotent_random(self):
        for seed in range(25):
            vol = random_blob_volume(seed)
            once = sync_volume(vol)
            assert np.array_equal(once > 0, vol > 0)
            twice = sync_volume(once)
            assert np.array_equal(once, twice)

    def test_groups_share_one_id(self):
        for seed in range(10):
            out = sync_volume(random_blob_volume(seed + 100))
            # resync regroups identically, so every group is already uniform
            assert np.array_equal(sync_volume(out), out)


class TestStitchWindows:
    @staticmethod
    def frame_with(ids_at):
        frame = np.zeros((1, 8, 8), dtype=np.uint32)
        for (y, x), i in ids_at.items():
            frame[0, y : y + 2, x : x + 2] = i
        return frame

    def test_identity_when_shared_frame_matches(self):
        f = self.frame_with({(0, 0): 1, (4, 4): 2})
        win0 = np.stack([f, f, f])
        win1 = np.stack([f, f])
        full, table = stitch_windows([(0, win0), (2, win1)])
        assert full.dims == (4, 1, 8, 8)
        for t in range(4):
            assert np.array_equal(full.ids[t], f)
        assert table.rows == ((1, 0, 3, 0), (2, 0, 3, 0))

    def test_new_cell_gets_fresh_id(self):
        f0 = self.frame_with({(0, 0): 1})
        f1 = self.frame_with({(0, 0): 1, (4, 4): 2})
        win0 = np.stack([f0, f0])
        win1 = np.stack([f0, f1, f1])
        full, table = stitch_windows([(0, win0), (1, win1)])
        rows = {row[0]: row for row in table.rows}
        assert rows[1] == (1, 0, 3, 0)
        # the new cell appears first at frame 2 (first frame of window 1 is shared)
        new_ids = [tid for tid in rows if tid != 1]
        assert len(new_ids) == 1
        assert rows[new_ids[0]][1] == 2

    def test_swapped_ids_restored(self):
        a = self.frame_with({(0, 0): 1, (4, 4): 2})
        swapped = self.frame_with({(0, 0): 2, (4, 4): 1})
        win0 = np.stack([a, a])
        win1 = np.stack([swapped, swapped])
        full, _ = stitch_windows([(0, win0), (1, win1)])
        # ids in the second window are remapped back onto the first window's ids
        assert np.array_equal(full.ids[2], a[...])

    def test_rejects_non_overlapping_windows(self):
        f = self.frame_with({(0, 0): 1})
        with pytest.raises(ValueError):
            stitch_windows([(0, np.stack([f, f])), (3, np.stack([f, f]))])

    def test_track_spans_cover_occupancy(self):
        f0 = self.frame_with({(0, 0): 3})
        empty = np.zeros_like(f0)
        win0 = np.stack([f0, f0, empty])
        full, table = stitch_windows([(0, win0)])
        assert table.rows == ((3, 0, 1, 0),)
