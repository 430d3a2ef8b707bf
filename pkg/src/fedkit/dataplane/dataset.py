"""Silo datasets: labeled image collections with leakage-free splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

log = logging.getLogger("fedkit.dataplane")


class IngestionError(RuntimeError):
    """Raised when a directory yields no usable images."""


class ClassLabel(IntEnum):
    ABDOMEN = 0
    BRAIN = 1
    FEMUR = 2
    THORAX = 3


CLASS_NAMES = tuple(label.name.lower() for label in ClassLabel)
# Present in raw collections only; dropped at ingestion, never in a dataset.
OTHER_CLASS = "other"


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def all_indices(self) -> np.ndarray:
        return np.concatenate([self.train, self.val, self.test])


@dataclass
class SiloDataset:
    """One silo's samples. `origin_ids` ties augmented variants to their source
    image so splits can be assigned per origin group (no leakage)."""

    silo_id: str
    images: np.ndarray      # (N, S, S) float32 in [0, 1]
    labels: np.ndarray      # (N,) int64, ClassLabel values
    origin_ids: np.ndarray  # (N,) int64
    splits: SplitIndices | None = None

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def input_size(self) -> int:
        return int(self.images.shape[1])

    def validate(self) -> None:
        n = len(self)
        if self.images.dtype != np.float32:
            raise ValueError("images must be float32")
        if n and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError(f"silo {self.silo_id}: pixel values outside [0, 1]")
        if self.labels.shape != (n,) or self.origin_ids.shape != (n,):
            raise ValueError("labels/origin_ids do not match sample count")
        if self.splits is not None:
            parts = [self.splits.train, self.splits.val, self.splits.test]
            joined = np.concatenate(parts)
            if len(np.unique(joined)) != len(joined) or len(joined) != n:
                raise ValueError("splits must be disjoint and cover all indices")
            origin_split: dict[int, int] = {}
            for si, part in enumerate(parts):
                for origin in self.origin_ids[part]:
                    prev = origin_split.setdefault(int(origin), si)
                    if prev != si:
                        raise ValueError(f"origin {origin} appears in two splits")

    def split_view(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """(images, labels) for one of 'train' / 'val' / 'test'."""
        if self.splits is None:
            raise ValueError(f"silo {self.silo_id} has no split assignment yet")
        idx = getattr(self.splits, name)
        return self.images[idx], self.labels[idx]

    def class_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for label in ClassLabel:
            c = int((self.labels == int(label)).sum())
            if c:
                out[label.name.lower()] = c
        return out


def _group_table(dataset: SiloDataset) -> dict[int, np.ndarray]:
    order = np.argsort(dataset.origin_ids, kind="stable")
    groups: dict[int, list[int]] = {}
    for idx in order:
        groups.setdefault(int(dataset.origin_ids[idx]), []).append(int(idx))
    return {k: np.asarray(v, dtype=np.int64) for k, v in groups.items()}


def _nearest_prefix(sizes: list[int], target: float) -> int:
    """Count of leading groups whose size sum lands closest to target."""
    best_k, best_err, cum = 0, abs(target), 0
    for k, s in enumerate(sizes, start=1):
        cum += s
        err = abs(cum - target)
        if err < best_err:
            best_k, best_err = k, err
    return best_k


def _allocate(
    pools: dict[int, list[tuple[int, int]]],
    fraction_targets: dict[int, float],
    global_target: float,
) -> tuple[dict[int, int], dict[int, list[tuple[int, int]]]]:
    """Pick a prefix of each class pool, then nudge counts so the global sum
    lands as close to global_target as whole groups allow."""
    chosen = {
        c: _nearest_prefix([s for _, s in pools[c]], fraction_targets[c]) for c in pools
    }

    def taken_size(c: int) -> int:
        return sum(s for _, s in pools[c][: chosen[c]])

    while True:
        deviation = global_target - sum(taken_size(c) for c in pools)
        moves = []
        for c in pools:
            if deviation > 0 and chosen[c] < len(pools[c]):
                moves.append((fraction_targets[c] - taken_size(c), c, +1, pools[c][chosen[c]][1]))
            elif deviation < 0 and chosen[c] > 0:
                moves.append((taken_size(c) - fraction_targets[c], c, -1, pools[c][chosen[c] - 1][1]))
        if not moves:
            break
        moves.sort(key=lambda m: (-m[0], m[1]))
        _, c, step, size = moves[0]
        if abs(deviation - step * size) >= abs(deviation):
            break
        chosen[c] += step

    leftover = {c: pools[c][chosen[c]:] for c in pools}
    return chosen, leftover


def split(dataset: SiloDataset, train_fraction: float, val_fraction: float, seed: int) -> SiloDataset:
    """Assign train/val/test splits by whole origin groups, stratified by class.

    Fractions are hit within one origin-group granularity. A class too small
    to fill all three splits is placed in train at minimum, with a warning.
    """
    if not (0.0 < train_fraction <= 1.0) or val_fraction < 0.0:
        raise ValueError("invalid split fractions")
    if train_fraction + val_fraction >= 1.0:
        raise ValueError("train_fraction + val_fraction must be < 1")
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")

    groups = _group_table(dataset)
    rng = np.random.default_rng(np.random.SeedSequence([0x5311, seed]))
    per_class: dict[int, list[tuple[int, int]]] = {}
    for origin in sorted(groups):
        label = int(dataset.labels[groups[origin][0]])
        per_class.setdefault(label, []).append((origin, len(groups[origin])))
    for label in sorted(per_class):
        pool = per_class[label]
        per_class[label] = [pool[i] for i in rng.permutation(len(pool))]

    n_total = len(dataset)
    class_sizes = {c: sum(s for _, s in per_class[c]) for c in per_class}

    train_chosen, remaining = _allocate(
        per_class,
        {c: train_fraction * class_sizes[c] for c in per_class},
        train_fraction * n_total,
    )
    val_chosen, remaining_after_val = _allocate(
        remaining,
        {c: val_fraction * class_sizes[c] for c in remaining},
        val_fraction * n_total,
    )

    origins = {
        "train": [o for c in sorted(per_class) for o, _ in per_class[c][: train_chosen[c]]],
        "val": [o for c in sorted(remaining) for o, _ in remaining[c][: val_chosen[c]]],
        "test": [o for c in sorted(remaining_after_val) for o, _ in remaining_after_val[c]],
    }

    # Guarantee every present class reaches train.
    def origin_class(o: int) -> int:
        return int(dataset.labels[groups[o][0]])

    train_classes = {origin_class(o) for o in origins["train"]}
    for c in sorted(per_class):
        if c not in train_classes:
            for pool_name in ("test", "val"):
                candidates = [o for o in origins[pool_name] if origin_class(o) == c]
                if candidates:
                    origins[pool_name].remove(candidates[0])
                    origins["train"].append(candidates[0])
                    log.warning(
                        "silo %s: class %s too small to stratify; kept in train only",
                        dataset.silo_id, ClassLabel(c).name.lower(),
                    )
                    break

    def indices_for(olist: list[int]) -> np.ndarray:
        if not olist:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate([groups[o] for o in olist]))

    splits = SplitIndices(
        train=indices_for(origins["train"]),
        val=indices_for(origins["val"]),
        test=indices_for(origins["test"]),
    )
    present = set(np.unique(dataset.labels).tolist())
    for name in ("val", "test"):
        part = getattr(splits, name)
        covered = set(np.unique(dataset.labels[part]).tolist()) if len(part) else set()
        if present - covered:
            missing = ", ".join(ClassLabel(c).name.lower() for c in sorted(present - covered))
            log.warning("silo %s: %s split lacks classes: %s", dataset.silo_id, name, missing)

    out = replace(dataset, splits=splits)
    out.validate()
    return out


def export_pgm(dataset: SiloDataset, outdir: str | Path, indices=None, prefix: str = "") -> list[Path]:
    """Write samples as binary PGM files for eyeball inspection."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if indices is None:
        indices = range(len(dataset))
    written = []
    for i in indices:
        img = np.clip(dataset.images[i] * 255.0 + 0.5, 0, 255).astype(np.uint8)
        name = ClassLabel(int(dataset.labels[i])).name.lower()
        path = outdir / f"{prefix}{dataset.silo_id}_{i:05d}_{name}.pgm"
        h, w = img.shape
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(img.tobytes())
        written.append(path)
    return written
