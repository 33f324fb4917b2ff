"""Shared data types and the on-disk volume formats.

All arrays follow (t, z, y, x) axis order: frames first, then slices,
then image rows and columns, stored C-contiguously (t-major).

A ``.vxg`` file is one UTF-8 JSON header line followed by a raw
little-endian payload::

    {"dims": [T, Z, Y, X], "dtype": "u8"|"u16"|"u32"|"f32", "order": "tzyx"}\\n
    <exactly T*Z*Y*X elements in (t, z, y, x) order>

Intensity volumes use u8/u16/f32 payloads; integer payloads are rescaled
to [0, 1] by the dtype maximum on read, so identical files always yield
identical grids.  Label volumes always use a u32 payload.  Labelings may
carry an optional ``"annotated"`` header key listing the frames (``[t]``
or ``[t, z]`` entries) that hold valid annotation.

Embedding fields use the same header extended with a ``"channels"`` key
(``.vxe``, f32, 28 embedding channels + 1 foreground channel, channel
last).  Track tables are plain text, one ``id t_begin t_end parent`` row
per track.
"""

import json
from dataclasses import dataclass

import numpy as np

TEMPORAL14 = "temporal14"
CONTEXT14 = "context14"
FUSED28 = "fused28"

KIND_DIMS = {TEMPORAL14: 14, CONTEXT14: 14, FUSED28: 28}

_DTYPES = {"u8": "<u1", "u16": "<u2", "u32": "<u4", "f32": "<f4"}
_INT_MAX = {"u8": 255.0, "u16": 65535.0, "u32": 4294967295.0}


class VxgFormatError(ValueError):
    """Malformed header or payload in a volume file."""


def _freeze(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class VoxelGrid:
    """A (T, Z, Y, X) intensity volume sequence with values in [0, 1].

    ``data`` is float32 so that the f32 file round-trip is exact.
    """

    data: np.ndarray
    voxel_spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ValueError(f"grid must be a non-empty (T, Z, Y, X) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("grid intensities must be finite")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("grid intensities must lie in [0, 1]")
        spacing = tuple(float(s) for s in self.voxel_spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"voxel_spacing must be 3 positive reals, got {self.voxel_spacing}")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "voxel_spacing", spacing)

    @property
    def dims(self):
        return self.data.shape


def _normalize_annotated(annotated):
    if annotated is None:
        return None
    out = set()
    for entry in annotated:
        if isinstance(entry, (int, np.integer)):
            out.add(int(entry))
        else:
            coords = tuple(int(c) for c in entry)
            if len(coords) == 1:
                out.add(coords[0])
            elif len(coords) == 2:
                out.add(coords)
            else:
                raise ValueError(f"annotated entries must be t or (t, z), got {entry!r}")
    return frozenset(out)


@dataclass(frozen=True)
class InstanceLabeling:
    """Per-voxel instance ids on a (T, Z, Y, X) raster; 0 is background.

    ``annotated_frames`` restricts which frames carry valid annotation:
    ``None`` means fully annotated, otherwise a set of ``t`` (whole
    volume) and/or ``(t, z)`` (single slice) coordinates.
    """

    ids: np.ndarray
    annotated_frames: frozenset = None

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 4 or min(ids.shape) < 1:
            raise ValueError(f"labeling must be a non-empty (T, Z, Y, X) array, got shape {ids.shape}")
        if not np.issubdtype(ids.dtype, np.integer):
            raise ValueError(f"labeling ids must be integers, got dtype {ids.dtype}")
        if ids.min() < 0:
            raise ValueError("labeling ids must be non-negative")
        if ids.max() > np.iinfo(np.uint32).max:
            raise ValueError("labeling ids exceed the u32 payload range")
        ids = np.ascontiguousarray(ids, dtype=np.uint32)
        annotated = _normalize_annotated(self.annotated_frames)
        if annotated is not None:
            nt, nz = ids.shape[0], ids.shape[1]
            for entry in annotated:
                t, z = (entry, None) if isinstance(entry, int) else entry
                if not 0 <= t < nt or (z is not None and not 0 <= z < nz):
                    raise ValueError(f"annotated coordinate {entry!r} outside dims {ids.shape}")
        object.__setattr__(self, "ids", _freeze(ids))
        object.__setattr__(self, "annotated_frames", annotated)

    @property
    def dims(self):
        return self.ids.shape

    def frame_annotated(self, t, z):
        """True if slice (t, z) carries valid annotation."""
        if self.annotated_frames is None:
            return True
        return int(t) in self.annotated_frames or (int(t), int(z)) in self.annotated_frames

    def volume_annotated(self, t):
        """True if the whole volume at frame t carries valid annotation."""
        if self.annotated_frames is None:
            return True
        return int(t) in self.annotated_frames


@dataclass(frozen=True)
class EmbeddingField:
    """Per-voxel embedding vectors plus a foreground score channel.

    ``vectors`` has shape (T, Z, Y, X, D) with D fixed by ``dim_kind``;
    ``fg_score`` has shape (T, Z, Y, X) with values in [0, 1].
    """

    vectors: np.ndarray
    fg_score: np.ndarray
    dim_kind: str

    def __post_init__(self):
        if self.dim_kind not in KIND_DIMS:
            raise ValueError(f"unknown dim_kind {self.dim_kind!r}")
        vec = np.ascontiguousarray(self.vectors, dtype=np.float32)
        fg = np.ascontiguousarray(self.fg_score, dtype=np.float32)
        if vec.ndim != 5 or vec.shape[-1] != KIND_DIMS[self.dim_kind]:
            raise ValueError(
                f"vectors for {self.dim_kind} must be (T, Z, Y, X, {KIND_DIMS[self.dim_kind]}), "
                f"got shape {vec.shape}"
            )
        if fg.shape != vec.shape[:4]:
            raise ValueError(f"fg_score shape {fg.shape} does not match dims {vec.shape[:4]}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("embedding vectors must be finite")
        if fg.min() < 0.0 or fg.max() > 1.0:
            raise ValueError("fg_score must lie in [0, 1]")
        object.__setattr__(self, "vectors", _freeze(vec))
        object.__setattr__(self, "fg_score", _freeze(fg))

    @property
    def dims(self):
        return self.vectors.shape[:4]


def concat_embeddings(a, b):
    """Fuse a temporal and a context field into one 28-d field.

    Output components are the temporal 14 followed by the context 14;
    the fused foreground score is the mean of the two inputs.
    """
    if a.dim_kind != TEMPORAL14 or b.dim_kind != CONTEXT14:
        raise ValueError(f"expected kinds ({TEMPORAL14}, {CONTEXT14}), got ({a.dim_kind}, {b.dim_kind})")
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    vectors = np.concatenate([a.vectors, b.vectors], axis=-1)
    fg = (a.fg_score.astype(np.float64) + b.fg_score.astype(np.float64)) / 2.0
    return EmbeddingField(vectors=vectors, fg_score=fg.astype(np.float32), dim_kind=FUSED28)


@dataclass(frozen=True)
class TrackTable:
    """Track rows (id, t_begin, t_end, parent); parent is always 0 here."""

    rows: tuple

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.rows)
        seen = set()
        for row in rows:
            if len(row) != 4:
                raise ValueError(f"track rows need 4 fields, got {row}")
            tid, t_begin, t_end, parent = row
            if tid <= 0:
                raise ValueError(f"track id must be positive, got {tid}")
            if tid in seen:
                raise ValueError(f"duplicate track id {tid}")
            if t_begin > t_end:
                raise ValueError(f"track {tid} has t_begin {t_begin} > t_end {t_end}")
            if parent != 0:
                raise ValueError(f"track {tid} has nonzero parent {parent}; division is unsupported")
            seen.add(tid)
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return len(self.rows)


# ---------------------------------------------------------------------------
# File I/O


def _read_header(fh, path):
    raw = bytearray()
    while True:
        byte = fh.read(1)
        if not byte:
            raise VxgFormatError(f"{path}: missing header line")
        if byte == b"\n":
            break
        raw.extend(byte)
        if len(raw) > 65536:
            raise VxgFormatError(f"{path}: header line exceeds 64 KiB")
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VxgFormatError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise VxgFormatError(f"{path}: header must be a JSON object")
    return header


def _parse_header(header, path):
    dims = header.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != 4
        or not all(isinstance(d, int) and d > 0 for d in dims)
    ):
        raise VxgFormatError(f"{path}: dims must be 4 positive integers, got {dims!r}")
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise VxgFormatError(f"{path}: unknown dtype {dtype!r} (expected one of {sorted(_DTYPES)})")
    if header.get("order") != "tzyx":
        raise VxgFormatError(f"{path}: unsupported order {header.get('order')!r}")
    return tuple(dims), dtype


def _read_payload(fh, dims, dtype, path):
    count = int(np.prod(dims))
    itemsize = np.dtype(_DTYPES[dtype]).itemsize
    expected = count * itemsize
    payload = fh.read()
    if len(payload) != expected:
        raise VxgFormatError(
            f"{path}: payload length mismatch: expected {expected} bytes "
            f"({count} x {itemsize}), got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(dims)


def read_volume(path):
    """Read an intensity volume; integer payloads are rescaled by dtype max."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        dims, dtype = _parse_header(header, path)
        raw = _read_payload(fh, dims, dtype, path)
    if dtype == "f32":
        data = raw.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise VxgFormatError(f"{path}: f32 payload contains non-finite values")
        data = np.clip(data, 0.0, 1.0)
    else:
        data = raw.astype(np.float64) / _INT_MAX[dtype]
    return VoxelGrid(data=data.astype(np.float32))


def write_volume(grid, path, dtype="f32"):
    """Write an intensity volume; u8/u16 quantize by the dtype maximum."""
    if dtype not in ("u8", "u16", "f32"):
        raise ValueError(f"intensity volumes support u8/u16/f32, got {dtype!r}")
    header = {"dims": [int(d) for d in grid.dims], "dtype": dtype, "order": "tzyx"}
    if dtype == "f32":
        payload = grid.data.astype("<f4")
    else:
        payload = np.round(grid.data.astype(np.float64) * _INT_MAX[dtype]).astype(_DTYPES[dtype])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes(order="C"))


def read_labeling(path):
    """Read an instance labeling from a u32 volume file."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        dims, dtype = _parse_header(header, path)
        if dtype != "u32":
            raise VxgFormatError(f"{path}: labelings require a u32 payload, got {dtype!r}")
        raw = _read_payload(fh, dims, dtype, path)
    annotated = header.get("annotated")
    if annotated is not None:
        annotated = [tuple(e) if isinstance(e, list) else e for e in annotated]
    return InstanceLabeling(ids=raw.astype(np.uint32), annotated_frames=annotated)


def write_labeling(labeling, path):
    """Write an instance labeling; the round-trip is bit identical."""
    header = {"dims": [int(d) for d in labeling.dims], "dtype": "u32", "order": "tzyx"}
    if labeling.annotated_frames is not None:
        entries = sorted(
            labeling.annotated_frames,
            key=lambda e: (e, -1) if isinstance(e, int) else e,
        )
        header["annotated"] = [[e] if isinstance(e, int) else list(e) for e in entries]
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(labeling.ids.astype("<u4").tobytes(order="C"))


def write_field(field, path):
    """Write an embedding field (.vxe): f32 payload, channel-last."""
    channels = field.vectors.shape[-1] + 1
    header = {
        "dims": [int(d) for d in field.dims],
        "dtype": "f32",
        "order": "tzyx",
        "channels": channels,
        "kind": field.dim_kind,
    }
    payload = np.concatenate([field.vectors, field.fg_score[..., None]], axis=-1)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.astype("<f4").tobytes(order="C"))


def read_field(path):
    """Read an embedding field (.vxe)."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        dims, dtype = _parse_header(header, path)
        if dtype != "f32":
            raise VxgFormatError(f"{path}: embedding fields require an f32 payload")
        kind = header.get("kind")
        if kind not in KIND_DIMS:
            raise VxgFormatError(f"{path}: unknown field kind {kind!r}")
        channels = header.get("channels")
        if channels != KIND_DIMS[kind] + 1:
            raise VxgFormatError(f"{path}: expected {KIND_DIMS[kind] + 1} channels, got {channels!r}")
        count = int(np.prod(dims)) * channels
        expected = count * 4
        payload = fh.read()
        if len(payload) != expected:
            raise VxgFormatError(
                f"{path}: payload length mismatch: expected {expected} bytes, got {len(payload)}"
            )
        raw = np.frombuffer(payload, dtype="<f4").reshape(dims + (channels,))
    return EmbeddingField(vectors=raw[..., :-1], fg_score=np.clip(raw[..., -1], 0.0, 1.0), dim_kind=kind)


def write_tracks(table, path):
    """Write a track table as `id t_begin t_end parent` rows."""
    lines = [f"{tid} {t0} {t1} {parent}\n" for tid, t0, t1, parent in table.rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_tracks(path):
    """Read a track table written by :func:`write_tracks`."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 integers, got {line.rstrip()!r}")
            rows.append(tuple(int(p) for p in parts))
    return TrackTable(rows=tuple(rows))
