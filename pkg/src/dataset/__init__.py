"""
Dataset sintético de figuras en movimiento y formato de clip
"""

from .video import Video, save_clip, load_clip, file_checksum
from .shapes import ClipSpec, make_clip, render_frame, shape_centroid, trajectory_positions
from .generator import (
    DatasetConfig,
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    load_split,
    make_dataset,
    sample_clip_specs,
    verify_manifest,
)

__all__ = [
    'Video',
    'save_clip',
    'load_clip',
    'file_checksum',
    'ClipSpec',
    'make_clip',
    'render_frame',
    'shape_centroid',
    'trajectory_positions',
    'DatasetConfig',
    'DatasetManifest',
    'ManifestEntry',
    'make_dataset',
    'load_split',
    'load_manifest',
    'sample_clip_specs',
    'verify_manifest',
]
