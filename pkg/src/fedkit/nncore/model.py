"""Compact residual image classifier with explicit forward/backward passes.

The network is a scaled-down residual architecture: a 3x3 stem convolution,
a configurable list of stages of basic residual blocks (two 3x3 convs plus
an identity or 1x1-projection skip), global average pooling and a linear
head. Every stage after the first downsamples by stride 2 in its first
block. No normalization layers: the net is shallow enough to train without
them and omitting them keeps training bit-deterministic and keeps averaging
of weights across clients semantically simple.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from .weights import ConfigurationError, ModelWeights, ShapeMismatchError


class EmptySplitError(ValueError):
    """Raised when an evaluation split contains no samples."""


@dataclass(frozen=True)
class ArchitectureSpec:
    """Shape of the classifier: input geometry plus residual stage layout.

    ``stages`` lists (block_count, width) pairs. The default is the desk-scale
    flagship: 3 stages of 2 basic blocks at widths 16/32/64, under 500k
    parameters. ``stem_stride`` of 2 halves the resolution before the first
    stage, for cheaper configurations.
    """

    input_size: int = 32
    channels: int = 1
    num_classes: int = 4
    stages: tuple[tuple[int, int], ...] = ((2, 16), (2, 32), (2, 64))
    stem_stride: int = 1

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_size < 4:
            raise ConfigurationError(f"input_size must be >= 4, got {self.input_size}")
        if self.channels < 1:
            raise ConfigurationError("channels must be >= 1")
        if self.stem_stride not in (1, 2):
            raise ConfigurationError("stem_stride must be 1 or 2")
        if not self.stages:
            raise ConfigurationError("at least one stage is required")
        for count, width in self.stages:
            if count < 1 or width < 1:
                raise ConfigurationError(f"invalid stage ({count}, {width})")
        # Spatial extent after stem + per-stage downsampling must not vanish.
        size = -(-self.input_size // self.stem_stride)
        for _ in self.stages[1:]:
            size = -(-size // 2)
        if size < 1:
            raise ConfigurationError("input_size too small for the stage count")


@dataclass(frozen=True)
class _ConvDef:
    name: str
    in_ch: int
    out_ch: int
    ksize: int
    stride: int
    pad: int

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_ch, self.in_ch, self.ksize, self.ksize)

    @property
    def fan_in(self) -> int:
        return self.in_ch * self.ksize * self.ksize


@dataclass(frozen=True)
class _BlockDef:
    conv1: _ConvDef
    conv2: _ConvDef
    proj: _ConvDef | None


class ResidualClassifier:
    """Functional model bound to an ArchitectureSpec; weights live outside."""

    def __init__(self, spec: ArchitectureSpec):
        spec.validate()
        self.spec = spec
        self.stem = _ConvDef("stem", spec.channels, spec.stages[0][1], 3, spec.stem_stride, 1)
        self.blocks: list[_BlockDef] = []
        in_ch = self.stem.out_ch
        for si, (count, width) in enumerate(spec.stages):
            for bi in range(count):
                stride = 2 if (si > 0 and bi == 0) else 1
                base = f"stage{si}.block{bi}"
                conv1 = _ConvDef(f"{base}.conv1", in_ch, width, 3, stride, 1)
                conv2 = _ConvDef(f"{base}.conv2", width, width, 3, 1, 1)
                proj = None
                if stride != 1 or in_ch != width:
                    proj = _ConvDef(f"{base}.proj", in_ch, width, 1, stride, 0)
                self.blocks.append(_BlockDef(conv1, conv2, proj))
                in_ch = width
        self.feat_dim = in_ch

    def _convs(self):
        yield self.stem
        for blk in self.blocks:
            yield blk.conv1
            yield blk.conv2
            if blk.proj is not None:
                yield blk.proj

    def param_defs(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(name, shape, fan_in) in build order; the manifest order."""
        defs: list[tuple[str, tuple[int, ...], int]] = []
        for conv in self._convs():
            defs.append((f"{conv.name}.weight", conv.weight_shape, conv.fan_in))
            defs.append((f"{conv.name}.bias", (conv.out_ch,), conv.fan_in))
        defs.append(("head.weight", (self.spec.num_classes, self.feat_dim), self.feat_dim))
        defs.append(("head.bias", (self.spec.num_classes,), self.feat_dim))
        return defs

    def num_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape, _ in self.param_defs())

    def init_weights(self, seed: int) -> ModelWeights:
        """He fan-in normal init for weights, zero biases, fully seeded."""
        rng = np.random.default_rng(seed)
        entries = []
        for name, shape, fan_in in self.param_defs():
            if name.endswith(".bias"):
                entries.append((name, np.zeros(shape, dtype=np.float32)))
            else:
                std = np.sqrt(2.0 / fan_in)
                w = rng.standard_normal(shape, dtype=np.float32) * np.float32(std)
                entries.append((name, w))
        return ModelWeights(entries)

    # -- forward / backward ------------------------------------------------

    def _prepare(self, batch: np.ndarray) -> np.ndarray:
        x = np.asarray(batch)
        if x.ndim == 3 and self.spec.channels == 1:
            x = x[:, None, :, :]
        expected = (self.spec.channels, self.spec.input_size, self.spec.input_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeMismatchError(
                f"batch shape {np.asarray(batch).shape} does not match input {expected}"
            )
        if x.dtype not in (np.float32, np.float64):
            x = x.astype(np.float32)
        # Inputs are [0,1] images; center them so the stem sees signed values.
        return x - x.dtype.type(0.5)

    def _check_weights(self, weights: ModelWeights) -> None:
        expected = [(name, shape) for name, shape, _ in self.param_defs()]
        actual = [(name, arr.shape) for name, arr in weights.entries]
        if [(n, tuple(s)) for n, s in expected] != actual:
            raise ShapeMismatchError("weights are not shape-compatible with this spec")

    def _forward_cached(self, arrays, x):
        caches = []
        h, c = layers.conv2d_forward(
            x, arrays["stem.weight"], arrays["stem.bias"], self.stem.stride, self.stem.pad
        )
        h, m = layers.relu_forward(h)
        caches.append(("stem", c, m))
        for blk in self.blocks:
            identity = h
            out1, c1 = layers.conv2d_forward(
                h, arrays[f"{blk.conv1.name}.weight"], arrays[f"{blk.conv1.name}.bias"],
                blk.conv1.stride, blk.conv1.pad,
            )
            out1, m1 = layers.relu_forward(out1)
            out2, c2 = layers.conv2d_forward(
                out1, arrays[f"{blk.conv2.name}.weight"], arrays[f"{blk.conv2.name}.bias"],
                blk.conv2.stride, blk.conv2.pad,
            )
            if blk.proj is not None:
                skip, cp = layers.conv2d_forward(
                    identity, arrays[f"{blk.proj.name}.weight"], arrays[f"{blk.proj.name}.bias"],
                    blk.proj.stride, blk.proj.pad,
                )
            else:
                skip, cp = identity, None
            h, mo = layers.relu_forward(out2 + skip)
            caches.append((blk, c1, m1, c2, cp, mo))
        pooled, pdims = layers.global_avg_pool_forward(h)
        logits, lc = layers.linear_forward(pooled, arrays["head.weight"], arrays["head.bias"])
        caches.append(("head", pdims, lc))
        return logits, caches

    def _backward(self, caches, dlogits):
        grads: dict[str, np.ndarray] = {}
        _, pdims, lc = caches[-1]
        dpooled, grads["head.weight"], grads["head.bias"] = layers.linear_backward(dlogits, lc)
        dh = layers.global_avg_pool_backward(dpooled, pdims)
        for entry in reversed(caches[1:-1]):
            blk, c1, m1, c2, cp, mo = entry
            dsum = layers.relu_backward(dh, mo)
            dout1, dw2, db2 = layers.conv2d_backward(dsum, c2)
            grads[f"{blk.conv2.name}.weight"] = dw2
            grads[f"{blk.conv2.name}.bias"] = db2
            dout1 = layers.relu_backward(dout1, m1)
            dident, dw1, db1 = layers.conv2d_backward(dout1, c1)
            grads[f"{blk.conv1.name}.weight"] = dw1
            grads[f"{blk.conv1.name}.bias"] = db1
            if blk.proj is not None:
                dskip, dwp, dbp = layers.conv2d_backward(dsum, cp)
                grads[f"{blk.proj.name}.weight"] = dwp
                grads[f"{blk.proj.name}.bias"] = dbp
                dh = dident + dskip
            else:
                dh = dident + dsum
        _, cstem, mstem = caches[0]
        dstem = layers.relu_backward(dh, mstem)
        _, grads["stem.weight"], grads["stem.bias"] = layers.conv2d_backward(dstem, cstem)
        return grads

    def loss_and_grads(self, arrays: dict[str, np.ndarray], batch, labels):
        """Mean cross-entropy and gradients for a raw parameter dict.

        Runs in the dtype of the given arrays, which is how the finite
        difference tests drive the same code path in float64.
        """
        x = self._prepare(batch)
        if next(iter(arrays.values())).dtype == np.float64:
            x = x.astype(np.float64)
        logits, caches = self._forward_cached(arrays, x)
        loss, dlogits = layers.cross_entropy(logits, np.asarray(labels))
        grads = self._backward(caches, dlogits)
        return loss, grads, logits

    def forward(self, weights: ModelWeights, batch) -> np.ndarray:
        """Logits (batch_size, num_classes); finite for finite inputs."""
        self._check_weights(weights)
        x = self._prepare(batch)
        logits, _ = self._forward_cached(dict(weights.entries), x)
        if not np.all(np.isfinite(logits)):
            raise ShapeMismatchError("forward produced non-finite logits")
        return logits

    def evaluate(self, weights: ModelWeights, images, labels, batch_size: int = 256):
        """(accuracy, mean cross-entropy) over a split, argmax ties to lowest index."""
        images = np.asarray(images)
        labels = np.asarray(labels)
        n = images.shape[0]
        if n == 0:
            raise EmptySplitError("cannot evaluate an empty split")
        self._check_weights(weights)
        arrays = dict(weights.entries)
        correct = 0
        loss_sum = 0.0
        for start in range(0, n, batch_size):
            xb = self._prepare(images[start : start + batch_size])
            yb = labels[start : start + batch_size]
            logits, _ = self._forward_cached(arrays, xb)
            preds = np.argmax(logits, axis=1)
            correct += int((preds == yb).sum())
            logp = layers.log_softmax(logits.astype(np.float64))
            loss_sum += float(-logp[np.arange(len(yb)), yb].sum())
        return correct / n, loss_sum / n


def build_model(spec: ArchitectureSpec, seed: int) -> ModelWeights:
    """Deterministic initial weights for a spec; manifest covers every tensor."""
    return ResidualClassifier(spec).init_weights(seed)
