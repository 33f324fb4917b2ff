"""Label synchronization: z-axis agreement within a volume and temporal
stitching of overlapping window labelings into one full-video labeling.

Within one volume, per-slice masks are matched against the masks of the
reference layer (the slice with the largest foreground ratio) by Jaccard
similarity of their (y, x) footprints; each reference mask's group is
then relabeled to the group's most common id.  Masks with zero
similarity to every reference mask are kept as separate instances.
"""

from collections import Counter

import numpy as np

from .core import InstanceLabeling, TrackTable


def jaccard(r, s):
    """Jaccard similarity of two boolean masks; 0 when both are empty."""
    r = np.asarray(r, bool)
    s = np.asarray(s, bool)
    if r.shape != s.shape:
        raise ValueError(f"mask shapes differ: {r.shape} vs {s.shape}")
    union = np.logical_or(r, s).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(r, s).sum()) / float(union)


def reference_layer(volume_labeling):
    """Index of the z slice with the largest foreground ratio.

    Ties resolve to the smallest z; an all-background volume yields 0.
    """
    vol = np.asarray(volume_labeling)
    if vol.ndim != 3 or vol.shape[0] < 1:
        raise ValueError(f"expected a (Z, Y, X) volume, got shape {vol.shape}")
    counts = (vol > 0).reshape(vol.shape[0], -1).sum(axis=1)
    return int(np.argmax(counts))


def _layer_masks(layer):
    """Per-id footprints of one slice, ordered by first foreground voxel.

    The ordering is a property of the footprints, not of the id values,
    so relabeling never changes it.
    """
    masks = [(int(i), layer == i) for i in np.unique(layer) if i > 0]
    masks.sort(key=lambda m: int(np.flatnonzero(m[1].ravel())[0]))
    return masks


def sync_volume(volume_labeling):
    """Synchronize per-slice instance ids against the reference layer.

    Every mask (a same-id voxel set within one slice) joins the group of
    the reference mask it overlaps best; each group is relabeled to its
    most common id (ties to the smallest).  Targets are kept distinct
    across groups so reference instances never collapse into one id, and
    masks overlapping no reference mask keep their id when it collides
    with nothing, moving to a fresh id otherwise; together this makes
    resynchronizing a no-op.
    """
    vol = np.asarray(volume_labeling)
    if vol.ndim != 3:
        raise ValueError(f"expected a (Z, Y, X) volume, got shape {vol.shape}")
    out = vol.copy()
    if not (vol > 0).any():
        return out

    ref_masks = _layer_masks(vol[reference_layer(vol)])

    groups = [[] for _ in ref_masks]
    unmatched = []  # (z, id), in scan order
    for z in range(vol.shape[0]):
        for mid, footprint in _layer_masks(vol[z]):
            best_ref, best_sim = None, 0.0
            for ref_pos, (_, rfoot) in enumerate(ref_masks):
                sim = jaccard(footprint, rfoot)
                if sim > best_sim:
                    best_ref, best_sim = ref_pos, sim
            if best_ref is None:
                unmatched.append((z, mid))
            else:
                groups[best_ref].append((z, mid))

    relabel = {}  # (z, id) -> new id
    used = {rid for rid, _ in ref_masks}
    taken = set()
    for ref_pos, (rid, _) in enumerate(ref_masks):
        members = groups[ref_pos]
        if not members:
            continue
        counts = Counter(mid for _, mid in members)
        candidates = [mid for mid, _ in sorted(counts.items(), key=lambda c: (-c[1], c[0]))]
        candidates.append(rid)
        target = next((c for c in candidates if c not in taken), None)
        if target is None:
            target = 1
            while target in used or target in taken:
                target += 1
        taken.add(target)
        used.add(target)
        for member in members:
            relabel[member] = target

    # Unmatched masks sharing an original id stay together under one id.
    fresh_of = {}
    next_fresh = 1
    for z, mid in unmatched:
        if mid not in fresh_of:
            if mid not in used:
                fresh_of[mid] = mid
            else:
                while next_fresh in used:
                    next_fresh += 1
                fresh_of[mid] = next_fresh
            used.add(fresh_of[mid])
        relabel[(z, mid)] = fresh_of[mid]

    for (z, mid), target in relabel.items():
        if target != mid:
            out[z][vol[z] == mid] = target
    return out


def _frame_masks(frame):
    return {int(i): frame == i for i in np.unique(frame) if i > 0}


def stitch_windows(windows):
    """Fold window labelings sharing one frame into a full labeling.

    ``windows`` is a list of ``(t_start, ids)`` pairs with ids shaped
    (L, Z, Y, X); window k+1 must start on the last frame of window k.
    Ids of each new window are remapped onto the accumulated ids by
    greedy maximum-Jaccard matching on the shared frame (accepting
    Jaccard >= 0.5); unmatched ids receive fresh global ids.  Returns
    the stitched :class:`InstanceLabeling` and its :class:`TrackTable`.
    """
    if not windows:
        raise ValueError("stitch_windows needs at least one window")
    chunks = []
    for t_start, ids in windows:
        ids = np.asarray(ids)
        if ids.ndim != 4 or ids.shape[0] < 1:
            raise ValueError(f"window ids must be (L, Z, Y, X), got shape {ids.shape}")
        chunks.append((int(t_start), ids))
    if chunks[0][0] != 0:
        raise ValueError(f"first window must start at frame 0, got {chunks[0][0]}")
    spatial_dims = {ids.shape[1:] for _, ids in chunks}
    if len(spatial_dims) != 1:
        raise ValueError(f"windows disagree on spatial dims: {sorted(spatial_dims)}")
    for (s0, ids0), (s1, _) in zip(chunks, chunks[1:]):
        expected = s0 + ids0.shape[0] - 1
        if s1 != expected:
            raise ValueError(
                f"windows must share exactly one frame: window at {s1} should start at {expected}"
            )

    n_t = chunks[-1][0] + chunks[-1][1].shape[0]
    spatial = chunks[0][1].shape[1:]
    full = np.zeros((n_t,) + spatial, dtype=np.uint32)
    full[: chunks[0][1].shape[0]] = chunks[0][1]
    used = {int(i) for i in np.unique(chunks[0][1]) if i > 0}

    for t_start, ids in chunks[1:]:
        global_masks = _frame_masks(full[t_start])
        window_masks = _frame_masks(ids[0])
        pairs = []
        for wid, wmask in window_masks.items():
            for gid, gmask in global_masks.items():
                sim = jaccard(wmask, gmask)
                if sim >= 0.5:
                    pairs.append((sim, gid, wid))
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
        mapping = {}
        taken = set()
        for sim, gid, wid in pairs:
            if wid in mapping or gid in taken:
                continue
            mapping[wid] = gid
            taken.add(gid)
        remapped = np.zeros_like(ids[1:], dtype=np.uint32)
        for local_t in range(1, ids.shape[0]):
            frame = ids[local_t]
            for wid in np.unique(frame):
                wid = int(wid)
                if wid == 0:
                    continue
                if wid not in mapping:
                    fresh = max(used, default=0) + 1
                    mapping[wid] = fresh
                    used.add(fresh)
                remapped[local_t - 1][frame == wid] = mapping[wid]
        full[t_start + 1 : t_start + ids.shape[0]] = remapped

    rows = []
    for gid in sorted({int(i) for i in np.unique(full) if i > 0}):
        present = np.flatnonzero((full == gid).any(axis=(1, 2, 3)))
        rows.append((gid, int(present[0]), int(present[-1]), 0))
    return InstanceLabeling(ids=full), TrackTable(rows=tuple(rows))
