"""Rotation + random-crop augmentation with a shared bilinear affine sampler."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .dataset import SiloDataset

ROTATION_RANGE_DEG = 25.0
CROP_SCALE_RANGE = (0.8, 1.0)


def sample_augment_params(rng: np.random.Generator, rotation_deg: float = ROTATION_RANGE_DEG,
                          crop_scale: tuple[float, float] = CROP_SCALE_RANGE):
    """One variant's parameters: rotation angle, crop side scale, crop anchor."""
    angle = rng.uniform(-rotation_deg, rotation_deg)
    scale = rng.uniform(crop_scale[0], crop_scale[1])
    fx = rng.uniform(0.0, 1.0)
    fy = rng.uniform(0.0, 1.0)
    return angle, scale, fx, fy


def bilinear_warp(img: np.ndarray, angle_deg: float, scale: float, fx: float, fy: float,
                  out_size: int | None = None) -> np.ndarray:
    """Rotate about the center, crop a scale-sized box anchored at (fx, fy),
    and resize back, in one bilinear pass with edge clamping."""
    h, w = img.shape
    out = out_size or h
    side_y, side_x = scale * h, scale * w
    y0 = fy * (h - side_y)
    x0 = fx * (w - side_x)
    u = (np.arange(out) + 0.5) * (side_x / out) - 0.5 + x0
    v = (np.arange(out) + 0.5) * (side_y / out) - 0.5 + y0
    xx, yy = np.meshgrid(u, v)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # Inverse rotation: output coords back into the source frame.
    xs = cos_t * (xx - cx) + sin_t * (yy - cy) + cx
    ys = -sin_t * (xx - cx) + cos_t * (yy - cy) + cy
    return _bilinear_sample(img, xs, ys)


def resize_bilinear(img: np.ndarray, out_size: int) -> np.ndarray:
    h, w = img.shape
    u = (np.arange(out_size) + 0.5) * (w / out_size) - 0.5
    v = (np.arange(out_size) + 0.5) * (h / out_size) - 0.5
    xs, ys = np.meshgrid(u, v)
    return _bilinear_sample(img, xs, ys)


def _bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (xs - x0).astype(np.float32)
    ay = (ys - y0).astype(np.float32)
    top = img[y0, x0] * (1 - ax) + img[y0, x1] * ax
    bot = img[y1, x0] * (1 - ax) + img[y1, x1] * ax
    return (top * (1 - ay) + bot * ay).astype(np.float32)


def augment(dataset: SiloDataset, factor: int, seed: int,
            rotation_deg: float = ROTATION_RANGE_DEG,
            crop_scale: tuple[float, float] = CROP_SCALE_RANGE) -> SiloDataset:
    """Expand every origin image into `factor` samples (itself plus factor-1
    rotated/cropped variants sharing its origin_id). Split assignment is
    cleared: splitting happens after augmentation, on origin groups."""
    if factor < 1:
        raise ValueError(f"augmentation factor must be >= 1, got {factor}")
    if factor == 1:
        return dataset
    rng = np.random.default_rng(np.random.SeedSequence([0xA46, seed]))
    images, labels, origins = [], [], []
    for i in range(len(dataset)):
        img = dataset.images[i]
        images.append(img)
        labels.append(dataset.labels[i])
        origins.append(dataset.origin_ids[i])
        for _ in range(factor - 1):
            angle, scale, fx, fy = sample_augment_params(rng, rotation_deg, crop_scale)
            images.append(np.clip(bilinear_warp(img, angle, scale, fx, fy), 0.0, 1.0))
            labels.append(dataset.labels[i])
            origins.append(dataset.origin_ids[i])
    return replace(
        dataset,
        images=np.stack(images).astype(np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        origin_ids=np.asarray(origins, dtype=np.int64),
        splits=None,
    )
