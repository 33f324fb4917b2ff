"""Deterministic synthetic 3D+time cell videos with exact ground truth.

Cells are axis-aligned ellipsoids with per-cell random semi-axes, a
constant drift velocity, and a shared intensity on a dark background.
Placement is rejection-sampled so that cells keep a clearance margin at
every frame, which keeps ground-truth masks disjoint and tracking
unambiguous.  Everything is a pure function of the scene config.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import InstanceLabeling, VoxelGrid

MAX_PLACEMENT_ATTEMPTS = 1000


def _normalize_drift_range(drift_range):
    """Accept (lo, hi) for all axes or ((lo, hi) per z, y, x axis)."""
    drift_range = tuple(drift_range)
    if len(drift_range) == 2 and all(np.isscalar(v) for v in drift_range):
        pair = (float(drift_range[0]), float(drift_range[1]))
        if pair[0] > pair[1]:
            raise ValueError(f"drift_range lo > hi: {drift_range}")
        return (pair, pair, pair)
    if len(drift_range) == 3:
        out = []
        for pair in drift_range:
            lo, hi = (float(v) for v in pair)
            if lo > hi:
                raise ValueError(f"drift_range lo > hi: {pair}")
            out.append((lo, hi))
        return tuple(out)
    raise ValueError(f"drift_range must be (lo, hi) or three (lo, hi) pairs, got {drift_range!r}")


@dataclass
class SceneConfig:
    """Parameters of one synthetic scene."""

    dims: tuple  # (T, Z, Y, X)
    n_cells: int = 4
    radius_range: tuple = (3.0, 6.0)  # per-axis semi-axis bounds, voxels
    drift_range: tuple = (-0.5, 0.5)  # per-component velocity bounds, voxels/frame
    cell_intensity: float = 0.8
    background_intensity: float = 0.1
    noise_sigma: float = 0.0
    clearance: float = 2.0  # minimum surface distance between cells, voxels
    annotation_density: float = 1.0  # fraction of frames carrying labels
    rng_seed: int = 0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 4 or min(self.dims) < 1:
            raise ValueError(f"dims must be 4 positive integers, got {self.dims}")
        if self.n_cells < 1:
            raise ValueError(f"n_cells must be at least 1, got {self.n_cells}")
        lo, hi = (float(r) for r in self.radius_range)
        if lo < 2.0 or hi < lo:
            raise ValueError(f"radius_range must satisfy 2 <= lo <= hi, got {self.radius_range}")
        self.radius_range = (lo, hi)
        self.drift_range = _normalize_drift_range(self.drift_range)
        if not 0.6 <= self.cell_intensity <= 1.0:
            raise ValueError(f"cell_intensity must lie in [0.6, 1.0], got {self.cell_intensity}")
        if not 0.0 <= self.background_intensity < 0.6:
            raise ValueError(f"background_intensity must lie in [0, 0.6), got {self.background_intensity}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0.0 < self.annotation_density <= 1.0:
            raise ValueError(f"annotation_density must lie in (0, 1], got {self.annotation_density}")
        # a maximal cell must fit inside the spatial dims at t = 0
        for size in self.dims[1:]:
            if size - 1 < 2 * lo:
                raise ValueError(f"spatial dim {size} cannot contain a cell of radius {lo}")

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        if "dims" not in payload:
            raise ValueError("scene config is missing 'dims'")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown scene config keys: {sorted(unknown)}")
        return cls(**payload)

    def to_json(self):
        payload = {
            "dims": list(self.dims),
            "n_cells": self.n_cells,
            "radius_range": list(self.radius_range),
            "drift_range": [list(pair) for pair in self.drift_range],
            "cell_intensity": self.cell_intensity,
            "background_intensity": self.background_intensity,
            "noise_sigma": self.noise_sigma,
            "clearance": self.clearance,
            "annotation_density": self.annotation_density,
            "rng_seed": self.rng_seed,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass
class _Cell:
    radii: np.ndarray  # (3,) z, y, x semi-axes
    centers: np.ndarray  # (T, 3) clamped trajectory


def _trajectory(center0, velocity, radii, dims):
    n_t = dims[0]
    spatial = np.array(dims[1:], dtype=float)
    lo = radii
    hi = spatial - 1.0 - radii
    centers = np.empty((n_t, 3))
    for t in range(n_t):
        centers[t] = np.clip(center0 + velocity * t, lo, hi)
    return centers


def _separated(cell_a, cell_b, clearance):
    # conservative surface distance: center distance minus both max radii
    gap = np.linalg.norm(cell_a.centers - cell_b.centers, axis=1)
    return np.all(gap >= cell_a.radii.max() + cell_b.radii.max() + clearance)


def _place_cells(cfg, rng):
    spatial = np.array(cfg.dims[1:], dtype=float)
    cells = []
    for index in range(cfg.n_cells):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            radii = rng.uniform(cfg.radius_range[0], cfg.radius_range[1], size=3)
            lo = radii
            hi = spatial - 1.0 - radii
            if np.any(lo > hi):
                continue
            center0 = rng.uniform(lo, hi)
            velocity = np.array([rng.uniform(a, b) for a, b in cfg.drift_range])
            cell = _Cell(radii=radii, centers=_trajectory(center0, velocity, radii, cfg.dims))
            if all(_separated(cell, other, cfg.clearance) for other in cells):
                cells.append(cell)
                break
        else:
            raise RuntimeError(
                f"could not place cell {index + 1}/{cfg.n_cells} after "
                f"{MAX_PLACEMENT_ATTEMPTS} attempts; the scene is too crowded"
            )
    return cells


def _paint_cell(image, labels, center, radii, value, cell_id):
    bounds = []
    for axis in range(3):
        lo = int(math.floor(center[axis] - radii[axis]))
        hi = int(math.ceil(center[axis] + radii[axis])) + 1
        bounds.append((max(lo, 0), min(hi, image.shape[axis])))
    (z0, z1), (y0, y1), (x0, x1) = bounds
    zz, yy, xx = np.ogrid[z0:z1, y0:y1, x0:x1]
    inside = (
        ((zz - center[0]) / radii[0]) ** 2
        + ((yy - center[1]) / radii[1]) ** 2
        + ((xx - center[2]) / radii[2]) ** 2
    ) <= 1.0
    image[z0:z1, y0:y1, x0:x1][inside] = value
    labels[z0:z1, y0:y1, x0:x1][inside] = cell_id


def generate(cfg):
    """Generate one scene: the intensity grid and its ground-truth labeling."""
    rng = np.random.default_rng(cfg.rng_seed)
    cells = _place_cells(cfg, rng)

    n_t = cfg.dims[0]
    image = np.full(cfg.dims, cfg.background_intensity, dtype=np.float64)
    labels = np.zeros(cfg.dims, dtype=np.uint32)
    for t in range(n_t):
        for cell_id, cell in enumerate(cells, start=1):
            _paint_cell(image[t], labels[t], cell.centers[t], cell.radii, cfg.cell_intensity, cell_id)
    if cfg.noise_sigma > 0:
        image += rng.normal(0.0, cfg.noise_sigma, size=cfg.dims)
    image = np.clip(image, 0.0, 1.0)

    if cfg.annotation_density >= 1.0:
        annotated = None
    else:
        annotated = frozenset(range(math.ceil(cfg.annotation_density * n_t)))
    grid = VoxelGrid(data=image.astype(np.float32))
    labeling = InstanceLabeling(ids=labels, annotated_frames=annotated)
    return grid, labeling
