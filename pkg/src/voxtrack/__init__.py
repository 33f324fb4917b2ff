"""Voxel-embedding instance segmentation and tracking for 3D+time videos."""

from .core import (
    CONTEXT14,
    FUSED28,
    TEMPORAL14,
    EmbeddingField,
    InstanceLabeling,
    TrackTable,
    VoxelGrid,
    VxgFormatError,
    concat_embeddings,
    read_field,
    read_labeling,
    read_tracks,
    read_volume,
    write_field,
    write_labeling,
    write_tracks,
    write_volume,
)

__all__ = [
    "CONTEXT14",
    "FUSED28",
    "TEMPORAL14",
    "EmbeddingField",
    "InstanceLabeling",
    "TrackTable",
    "VoxelGrid",
    "VxgFormatError",
    "concat_embeddings",
    "read_field",
    "read_labeling",
    "read_tracks",
    "read_volume",
    "write_field",
    "write_labeling",
    "write_tracks",
    "write_volume",
]

__version__ = "0.1.0"
