"""Temporal and zigzag frame-stream construction.

A stream path is an ordered window of (t, z) slice coordinates; t always
advances by 1.  Temporal paths hold z fixed.  Zigzag paths oscillate z in
an interleaved W shape with period 4: base offsets (0, +1, 0, -1) for
even base layers and the mirrored (0, -1, 0, +1) for odd base layers,
clamped at the volume boundary.  The mirroring makes the union of all
zigzag paths cover every (t, z) slice for any window <= T; a single
uniform pattern leaves odd-offset slices at the boundary unreachable.
"""

from dataclasses import dataclass

import numpy as np

TEMPORAL = "temporal"
ZIGZAG = "zigzag"

DEFAULT_WINDOW = 8

_EVEN_OFFSETS = (0, 1, 0, -1)
_ODD_OFFSETS = (0, -1, 0, 1)


@dataclass(frozen=True)
class StreamPath:
    """An ordered window of (t, z) slice coordinates of one stream kind."""

    kind: str
    coords: tuple

    def __post_init__(self):
        if self.kind not in (TEMPORAL, ZIGZAG):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        coords = tuple((int(t), int(z)) for t, z in self.coords)
        if not coords:
            raise ValueError("a stream path needs at least one coordinate")
        for (t0, z0), (t1, z1) in zip(coords, coords[1:]):
            if t1 != t0 + 1:
                raise ValueError(f"t must advance by 1 along the path, got {t0} -> {t1}")
            if self.kind == TEMPORAL and z1 != z0:
                raise ValueError(f"temporal paths hold z fixed, got {z0} -> {z1}")
            if self.kind == ZIGZAG and abs(z1 - z0) > 1:
                raise ValueError(f"zigzag z steps are at most 1, got {z0} -> {z1}")
        object.__setattr__(self, "coords", coords)

    @property
    def window(self):
        return len(self.coords)


@dataclass(frozen=True)
class StreamSample:
    """Frames (and optional label frames) extracted along a stream path."""

    path: StreamPath
    frames: np.ndarray
    labels: np.ndarray = None
    valid_label_mask: np.ndarray = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[0] != self.path.window:
            raise ValueError(f"frames must be ({self.path.window}, Y, X), got shape {frames.shape}")
        mask = self.valid_label_mask
        mask = np.zeros(self.path.window, bool) if mask is None else np.asarray(mask, bool)
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != frames.shape:
                raise ValueError(f"label frames shape {labels.shape} != frames shape {frames.shape}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "valid_label_mask", mask)

    @property
    def window(self):
        return self.path.window


def window_starts(n_frames, window, stride):
    """Window start frames: a stride grid plus the final full window.

    The last start (n_frames - window) is always included so that every
    frame lies inside at least one window.
    """
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    if window > n_frames:
        raise ValueError(f"window {window} exceeds sequence length {n_frames}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    starts = list(range(0, n_frames - window + 1, stride))
    if starts[-1] != n_frames - window:
        starts.append(n_frames - window)
    return starts


def zigzag_offsets(base_z):
    """Period-4 W offsets for a base layer; mirrored for odd layers."""
    return _EVEN_OFFSETS if base_z % 2 == 0 else _ODD_OFFSETS


def zigzag_z(base_z, step, n_z):
    """z coordinate at a zigzag step, clamped into [0, n_z - 1]."""
    z = base_z + zigzag_offsets(base_z)[step % 4]
    return min(max(z, 0), n_z - 1)


def temporal_paths(grid_dims, window=DEFAULT_WINDOW, stride=DEFAULT_WINDOW):
    """All fixed-z windows over the (z, window-start) grid."""
    n_t, n_z = int(grid_dims[0]), int(grid_dims[1])
    starts = window_starts(n_t, window, stride)
    paths = []
    for z in range(n_z):
        for t0 in starts:
            coords = tuple((t0 + i, z) for i in range(window))
            paths.append(StreamPath(kind=TEMPORAL, coords=coords))
    return paths


def zigzag_paths(grid_dims, window=DEFAULT_WINDOW, stride=DEFAULT_WINDOW):
    """All W-shaped windows; their union visits every (t, z) slice."""
    n_t, n_z = int(grid_dims[0]), int(grid_dims[1])
    starts = window_starts(n_t, window, stride)
    paths = []
    for z0 in range(n_z):
        for t0 in starts:
            coords = tuple((t0 + i, zigzag_z(z0, i, n_z)) for i in range(window))
            paths.append(StreamPath(kind=ZIGZAG, coords=coords))
    return paths


def extract_sample(grid, labeling, path):
    """Slice a grid (and optional labeling) along a stream path."""
    n_t, n_z = grid.dims[0], grid.dims[1]
    for t, z in path.coords:
        if not (0 <= t < n_t and 0 <= z < n_z):
            raise ValueError(f"path coordinate (t={t}, z={z}) outside grid dims {grid.dims}")
    if labeling is not None and labeling.dims != grid.dims:
        raise ValueError(f"labeling dims {labeling.dims} != grid dims {grid.dims}")
    frames = np.stack([grid.data[t, z] for t, z in path.coords])
    labels = None
    mask = np.zeros(path.window, bool)
    if labeling is not None:
        labels = np.stack([labeling.ids[t, z] for t, z in path.coords])
        mask = np.array([labeling.frame_annotated(t, z) for t, z in path.coords])
    return StreamSample(path=path, frames=frames, labels=labels, valid_label_mask=mask)
