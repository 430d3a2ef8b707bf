"""Six-silo data landscape: synthetic generation, directory ingestion,
augmentation and leakage-free stratified splits."""

from .augment import CROP_SCALE_RANGE, ROTATION_RANGE_DEG, augment, bilinear_warp, resize_bilinear, sample_augment_params
from .dataset import (
    CLASS_NAMES,
    OTHER_CLASS,
    ClassLabel,
    IngestionError,
    SiloDataset,
    SplitIndices,
    export_pgm,
    split,
)
from .ingest import IngestStats, ingest_directory
from .synth import SiloSpec, SiloStyle, default_silo_specs, render_sample, silo_style, synth_silo, table_counts

__all__ = [
    "CLASS_NAMES",
    "CROP_SCALE_RANGE",
    "ClassLabel",
    "IngestStats",
    "IngestionError",
    "OTHER_CLASS",
    "ROTATION_RANGE_DEG",
    "SiloDataset",
    "SiloSpec",
    "SiloStyle",
    "SplitIndices",
    "augment",
    "bilinear_warp",
    "default_silo_specs",
    "export_pgm",
    "ingest_directory",
    "render_sample",
    "resize_bilinear",
    "sample_augment_params",
    "silo_style",
    "split",
    "synth_silo",
    "table_counts",
]
