"""Mean-shift mode seeking over embedding space.

The full variant shifts every point; the accelerated variant seeds one
shift per occupied grid bin (cell edge = bandwidth) and assigns points
to the nearest converged mode.  On well-separated clusters the two
produce identical partitions, with far fewer shift iterations for the
accelerated variant.
"""

from dataclasses import dataclass

import numpy as np

from .core import FUSED28

_CHUNK_ENTRIES = 4_000_000  # cap on seeds x points distance-matrix entries


@dataclass
class MeanShiftConfig:
    bandwidth: float = 0.1
    kernel: str = "flat"
    max_iters: int = 200
    convergence_eps: float = 1e-4
    mode_merge_radius: float = None  # defaults to bandwidth / 2
    min_cluster_voxels: int = 5
    accelerated: bool = True
    fg_threshold: float = 0.5

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.kernel not in ("flat", "gaussian"):
            raise ValueError(f"kernel must be 'flat' or 'gaussian', got {self.kernel!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive")
        if self.mode_merge_radius is None:
            self.mode_merge_radius = self.bandwidth / 2.0
        if not 0 < self.mode_merge_radius <= self.bandwidth:
            raise ValueError("mode_merge_radius must lie in (0, bandwidth]")
        if self.min_cluster_voxels < 1:
            raise ValueError("min_cluster_voxels must be positive")
        if not 0.0 <= self.fg_threshold <= 1.0:
            raise ValueError("fg_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class MeanShiftResult:
    """Modes, per-point assignment, and shift-iteration counters."""

    modes: np.ndarray  # (M, D)
    assignment: np.ndarray  # (N,) mode index per point
    iterations: int  # total per-seed shift iterations
    n_seeds: int


def _as_points(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError(f"points must be a non-empty (N, D) array, got shape {pts.shape}")
    return pts


def _shift_step(seeds, points, cfg):
    """One kernel-weighted mean update for a block of seeds."""
    d2 = (
        (seeds * seeds).sum(axis=1)[:, None]
        + (points * points).sum(axis=1)[None, :]
        - 2.0 * (seeds @ points.T)
    )
    np.maximum(d2, 0.0, out=d2)
    if cfg.kernel == "flat":
        weights = (d2 <= cfg.bandwidth * cfg.bandwidth).astype(np.float64)
    else:
        weights = np.exp(-d2 / (2.0 * cfg.bandwidth * cfg.bandwidth))
    totals = weights.sum(axis=1)
    stuck = totals <= 1e-300
    if stuck.any():
        # no support in range: snap to the nearest point and keep shifting
        nearest = np.argmin(d2[stuck], axis=1)
        out = np.empty_like(seeds)
        safe = ~stuck
        out[safe] = (weights[safe] @ points) / totals[safe, None]
        out[stuck] = points[nearest]
        return out
    return (weights @ points) / totals[:, None]


def _run_shifts(seeds, points, cfg):
    """Shift all seeds to convergence; returns positions and iteration count."""
    seeds = np.array(seeds, dtype=np.float64, copy=True)
    active = np.ones(len(seeds), dtype=bool)
    iterations = 0
    chunk = max(1, _CHUNK_ENTRIES // max(1, len(points)))
    for _ in range(cfg.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        moved = np.empty((idx.size, seeds.shape[1]))
        for lo in range(0, idx.size, chunk):
            block = idx[lo : lo + chunk]
            moved[lo : lo + block.size] = _shift_step(seeds[block], points, cfg)
        disp = np.linalg.norm(moved - seeds[idx], axis=1)
        seeds[idx] = moved
        iterations += idx.size
        active[idx] = disp >= cfg.convergence_eps
    return seeds, iterations


def _merge_modes(positions, merge_radius):
    """Merge converged positions; the lowest-index representative wins."""
    reps = []
    index_of = np.empty(len(positions), dtype=np.int64)
    for i, pos in enumerate(positions):
        for j, rep in enumerate(reps):
            if np.linalg.norm(pos - rep) <= merge_radius:
                index_of[i] = j
                break
        else:
            reps.append(pos)
            index_of[i] = len(reps) - 1
    return np.array(reps), index_of


def mean_shift_modes(points, cfg):
    """Full mean shift: every point is a seed; each point follows its seed."""
    pts = _as_points(points)
    converged, iterations = _run_shifts(pts, pts, cfg)
    modes, assignment = _merge_modes(converged, cfg.mode_merge_radius)
    return MeanShiftResult(modes=modes, assignment=assignment, iterations=iterations, n_seeds=len(pts))


def _bin_seeds(points, edge):
    """One seed per occupied grid bin: the centroid of the bin's points."""
    keys = np.floor(points / edge).astype(np.int64)
    order = {}
    for i, key in enumerate(map(tuple, keys)):
        order.setdefault(key, []).append(i)
    return np.array([points[members].mean(axis=0) for members in order.values()])


def fast_mean_shift_modes(points, cfg):
    """Bin-seeded mean shift; points are assigned to the nearest mode."""
    pts = _as_points(points)
    seeds = _bin_seeds(pts, cfg.bandwidth)
    converged, iterations = _run_shifts(seeds, pts, cfg)
    modes, _ = _merge_modes(converged, cfg.mode_merge_radius)
    chunk = max(1, _CHUNK_ENTRIES // max(1, len(modes)))
    assignment = np.empty(len(pts), dtype=np.int64)
    for lo in range(0, len(pts), chunk):
        block = pts[lo : lo + chunk]
        d2 = (
            (block * block).sum(axis=1)[:, None]
            + (modes * modes).sum(axis=1)[None, :]
            - 2.0 * (block @ modes.T)
        )
        assignment[lo : lo + len(block)] = np.argmin(d2, axis=1)
    return MeanShiftResult(modes=modes, assignment=assignment, iterations=iterations, n_seeds=len(seeds))


def cluster_window(field, cfg):
    """Cluster a window's foreground voxels into instance ids.

    All frames of the window are pooled into one point set of re-unit-
    normalized fused vectors, so a mode (and therefore an id) is shared
    across every frame it appears in.  Clusters smaller than
    ``min_cluster_voxels`` fall back to background.  Ids count up from 1
    in order of each cluster's first voxel in (t, z, y, x) scan order.
    """
    if field.dim_kind != FUSED28:
        raise ValueError(f"cluster_window needs a {FUSED28} field, got {field.dim_kind}")
    fg = field.fg_score >= cfg.fg_threshold
    ids = np.zeros(field.dims, dtype=np.uint32)
    if not fg.any():
        return ids
    pts = field.vectors[fg].astype(np.float64)
    norms = np.linalg.norm(pts, axis=1)
    fallback = norms < 1e-8
    norms[fallback] = 1.0
    pts /= norms[:, None]
    pts[fallback] = 0.0
    pts[fallback, 0] = 1.0

    cluster = fast_mean_shift_modes(pts, cfg) if cfg.accelerated else mean_shift_modes(pts, cfg)
    labels = cluster.assignment
    counts = np.bincount(labels, minlength=len(cluster.modes))
    keep = counts >= cfg.min_cluster_voxels

    # boolean indexing flattens in C order, so point order is already
    # lexicographic (t, z, y, x); first occurrence fixes the id order
    values = np.zeros(len(pts), dtype=np.uint32)
    mode_to_id = {}
    kept_positions = np.flatnonzero(keep[labels])
    for pos in kept_positions:
        mode = int(labels[pos])
        if mode not in mode_to_id:
            mode_to_id[mode] = len(mode_to_id) + 1
    if mode_to_id:
        lookup = np.zeros(len(cluster.modes), dtype=np.uint32)
        for mode, new_id in mode_to_id.items():
            lookup[mode] = new_id
        values[kept_positions] = lookup[labels[kept_positions]]
    ids[fg] = values
    return ids
