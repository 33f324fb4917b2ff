"""Tracking-benchmark style evaluation: SEG, TRA and their average OP.

SEG is the mean Jaccard index over annotated ground-truth masks, each
matched to the predicted mask covering more than half of it.  TRA is the
normalized cost of editing the predicted tracking graph into the ground
truth graph, using the standard weighted operation counts for node
splits/misses/spurious detections and edge edits.
"""

from dataclasses import dataclass

import numpy as np

from .core import InstanceLabeling, TrackTable


@dataclass(frozen=True)
class AogmWeights:
    """Graph edit operation weights (standard benchmark convention)."""

    ns: float = 5.0  # split: ground-truth node pairs sharing one predicted node
    fn: float = 10.0  # missing (false negative) node
    fp: float = 1.0  # spurious (false positive) node
    ed: float = 1.0  # redundant predicted edge
    ea: float = 1.5  # missing edge
    ec: float = 1.0  # edge with wrong semantics (unused without division)

    def __post_init__(self):
        for name in ("ns", "fn", "fp", "ed", "ea", "ec"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be non-negative")


DEFAULT_WEIGHTS = AogmWeights()


def _annotation_units(labeling):
    """Evaluation units: (gt_selector, label) pairs as (t, z-or-None)."""
    if labeling.annotated_frames is None:
        return [(t, None) for t in range(labeling.dims[0])]
    units = []
    for entry in sorted(labeling.annotated_frames, key=lambda e: (e, -1) if isinstance(e, int) else e):
        units.append((entry, None) if isinstance(entry, int) else entry)
    return units


def _match_in_unit(gt_unit, pred_unit):
    """Match each gt mask to the pred mask covering > half of it.

    Returns {gt_id: (pred_id or None, jaccard)}.  At most one predicted
    mask can cover more than half of a ground-truth mask, so the match
    is unique whenever it exists.
    """
    matches = {}
    gt_ids = [int(i) for i in np.unique(gt_unit) if i > 0]
    for gid in gt_ids:
        mask = gt_unit == gid
        size = int(mask.sum())
        overlap_ids, overlap_counts = np.unique(pred_unit[mask], return_counts=True)
        best = None
        for pid, count in zip(overlap_ids, overlap_counts):
            if pid > 0 and 2 * int(count) > size:
                best = (int(pid), int(count))
        if best is None:
            matches[gid] = (None, 0.0)
        else:
            pid, inter = best
            union = size + int((pred_unit == pid).sum()) - inter
            matches[gid] = (pid, inter / union)
    return matches


def seg_score(gt, pred):
    """Mean Jaccard over annotated ground-truth masks (0 when unmatched)."""
    if gt.dims != pred.dims:
        raise ValueError(f"dims mismatch: gt {gt.dims} vs pred {pred.dims}")
    scores = []
    for t, z in _annotation_units(gt):
        gt_unit = gt.ids[t] if z is None else gt.ids[t, z]
        pred_unit = pred.ids[t] if z is None else pred.ids[t, z]
        for _, (_, score) in sorted(_match_in_unit(gt_unit, pred_unit).items()):
            scores.append(score)
    if not scores:
        raise ValueError("no annotated ground-truth masks to evaluate")
    return float(np.mean(scores))


def derive_track_table(labeling):
    """Track table spanning each id's first and last occupied frame."""
    rows = []
    for tid in sorted(int(i) for i in np.unique(labeling.ids) if i > 0):
        present = np.flatnonzero((labeling.ids == tid).any(axis=(1, 2, 3)))
        rows.append((tid, int(present[0]), int(present[-1]), 0))
    return TrackTable(rows=tuple(rows))


@dataclass(frozen=True)
class TrackingGraph:
    """Detections and same-id consecutive-frame links of a labeling."""

    nodes: frozenset  # of (id, t)
    edges: frozenset  # of (id, t), linking t to t+1


def build_tracking_graph(labeling, table):
    """Graph with one node per instance per occupied frame.

    The table must agree with the labeling: same ids, and each row
    spanning exactly the id's first and last occupied frame.
    """
    occupancy = {}
    for tid in (int(i) for i in np.unique(labeling.ids) if i > 0):
        occupancy[tid] = np.flatnonzero((labeling.ids == tid).any(axis=(1, 2, 3)))
    table_ids = {row[0] for row in table.rows}
    if table_ids != set(occupancy):
        raise ValueError(
            f"table ids {sorted(table_ids)} do not match labeling ids {sorted(occupancy)}"
        )
    for tid, t_begin, t_end, _ in table.rows:
        present = occupancy[tid]
        if t_begin != int(present[0]) or t_end != int(present[-1]):
            raise ValueError(
                f"track {tid} spans [{t_begin}, {t_end}] but occupies "
                f"[{int(present[0])}, {int(present[-1])}]"
            )
    nodes = set()
    edges = set()
    for tid, present in occupancy.items():
        frames = set(int(t) for t in present)
        nodes.update((tid, t) for t in frames)
        edges.update((tid, t) for t in frames if t + 1 in frames)
    return TrackingGraph(nodes=frozenset(nodes), edges=frozenset(edges))


def _frame_matching(gt_labeling, pred_labeling, gt_graph, pred_graph):
    """Detection-test node matching per frame: {(gt_id, t): pred_id or None}."""
    by_frame = {}
    for tid, t in gt_graph.nodes:
        by_frame.setdefault(t, []).append(tid)
    match = {}
    for t, gt_ids in by_frame.items():
        gt_frame = gt_labeling.ids[t]
        pred_frame = pred_labeling.ids[t]
        for gid in gt_ids:
            mask = gt_frame == gid
            size = int(mask.sum())
            overlap_ids, overlap_counts = np.unique(pred_frame[mask], return_counts=True)
            match[(gid, t)] = None
            for pid, count in zip(overlap_ids, overlap_counts):
                if pid > 0 and 2 * int(count) > size and (int(pid), t) in pred_graph.nodes:
                    match[(gid, t)] = int(pid)
    return match


def aogm(gt_graph, pred_graph, gt_labeling, pred_labeling, weights=DEFAULT_WEIGHTS):
    """Weighted count of graph operations turning prediction into truth."""
    match = _frame_matching(gt_labeling, pred_labeling, gt_graph, pred_graph)

    matched_pred = {}
    for (gid, t), pid in match.items():
        if pid is not None:
            matched_pred.setdefault((pid, t), []).append(gid)

    n_split_pairs = sum(len(g) * (len(g) - 1) // 2 for g in matched_pred.values())
    n_fn = sum(1 for pid in match.values() if pid is None)
    n_fp = len(pred_graph.nodes) - len(matched_pred)

    covered_pred_edges = set()
    n_ea = 0
    for gid, t in gt_graph.edges:
        pid_a = match[(gid, t)]
        pid_b = match[(gid, t + 1)]
        if pid_a is not None and pid_a == pid_b and (pid_a, t) in pred_graph.edges:
            covered_pred_edges.add((pid_a, t))
        else:
            n_ea += 1
    n_ed = len(pred_graph.edges) - len(covered_pred_edges)

    n_ec = 0  # no division semantics to get wrong
    return float(
        weights.ns * n_split_pairs
        + weights.fn * n_fn
        + weights.fp * n_fp
        + weights.ed * n_ed
        + weights.ea * n_ea
        + weights.ec * n_ec
    )


def tra_score(gt, pred, table, weights=DEFAULT_WEIGHTS):
    """1 - AOGM/AOGM0, clamped to [0, 1]; AOGM0 builds truth from scratch."""
    gt_graph = build_tracking_graph(gt, derive_track_table(gt))
    pred_graph = build_tracking_graph(pred, table)
    aogm0 = weights.fn * len(gt_graph.nodes) + weights.ea * len(gt_graph.edges)
    if aogm0 == 0:
        raise ValueError("ground truth has no detections; TRA is undefined")
    cost = aogm(gt_graph, pred_graph, gt, pred, weights)
    return 1.0 - min(cost, aogm0) / aogm0


def op_score(seg, tra):
    """Overall performance: the average of SEG and TRA."""
    for name, value in (("seg", seg), ("tra", tra)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return (seg + tra) / 2.0


def evaluate(gt, pred, table, weights=DEFAULT_WEIGHTS):
    """SEG, TRA and OP for a predicted labeling and its track table."""
    seg = seg_score(gt, pred)
    tra = tra_score(gt, pred, table, weights)
    return {"SEG": seg, "TRA": tra, "OP": op_score(seg, tra)}
