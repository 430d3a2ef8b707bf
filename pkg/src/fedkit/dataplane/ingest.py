"""Directory ingestion: root/<class_name>/<images> into a SiloDataset."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .dataset import CLASS_NAMES, OTHER_CLASS, ClassLabel, IngestionError, SiloDataset

log = logging.getLogger("fedkit.dataplane")


@dataclass
class IngestStats:
    ingested: int = 0
    skipped_other: int = 0
    skipped_unreadable: int = 0
    skipped_unknown_class: dict[str, int] = field(default_factory=dict)


def ingest_directory(root: str | Path, input_size: int) -> tuple[SiloDataset, IngestStats]:
    """Read a class-per-subdirectory image tree.

    Images are converted to grayscale, bilinearly resized to
    input_size x input_size and normalized to [0, 1]. Directories named
    'other' are skipped with a count; unreadable files are skipped with a
    warning. The returned dataset has no split assignment yet.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"{root} is not a directory")
    stats = IngestStats()
    images, labels, origins = [], [], []
    origin = 0
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        name = sub.name.lower()
        files = sorted(p for p in sub.iterdir() if p.is_file())
        if name == OTHER_CLASS:
            stats.skipped_other += len(files)
            log.info("skipping %d files in excluded class %r", len(files), name)
            continue
        if name not in CLASS_NAMES:
            stats.skipped_unknown_class[name] = len(files)
            log.warning("skipping unknown class directory %r (%d files)", name, len(files))
            continue
        label = ClassLabel[name.upper()]
        for path in files:
            try:
                with Image.open(path) as im:
                    gray = im.convert("L").resize((input_size, input_size), Image.BILINEAR)
            except (OSError, UnidentifiedImageError, ValueError) as exc:
                stats.skipped_unreadable += 1
                log.warning("skipping unreadable image %s: %s", path, exc)
                continue
            images.append(np.asarray(gray, dtype=np.float32) / 255.0)
            labels.append(int(label))
            origins.append(origin)
            origin += 1
            stats.ingested += 1

    if not images:
        raise IngestionError(f"no usable images under {root}")
    dataset = SiloDataset(
        silo_id=root.name,
        images=np.stack(images),
        labels=np.asarray(labels, dtype=np.int64),
        origin_ids=np.asarray(origins, dtype=np.int64),
    )
    dataset.validate()
    return dataset, stats
