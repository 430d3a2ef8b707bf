"""SGD with momentum plus a reduce-on-plateau learning-rate scheduler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ResidualClassifier
from .weights import ConfigurationError, ModelWeights


class TrainingDivergedError(RuntimeError):
    """Non-finite loss during training; carries the offending batch index."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


@dataclass
class PlateauScheduler:
    """Cuts the learning rate after `patience` consecutive non-improving reports.

    Metrics follow loss semantics: an improvement is a decrease of at least
    `rel_threshold` relative to the best value seen. The scheduler itself only
    tracks staleness; the owning OptimizerState applies the decay so the
    learning rate can never increase and never drops below `min_lr`.
    """

    patience: int = 3
    factor: float = 0.5
    min_lr: float = 1e-4
    rel_threshold: float = 1e-3
    best_metric: float = math.inf
    stale_count: int = 0

    def validate(self) -> None:
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if not (0.0 < self.factor < 1.0):
            raise ConfigurationError("factor must lie in (0, 1)")
        if self.min_lr <= 0:
            raise ConfigurationError("min_lr must be positive")

    def report(self, metric: float) -> bool:
        """Advance on one metric report; True when a decay should fire."""
        if not math.isfinite(metric):
            raise ValueError(f"scheduler metric must be finite, got {metric}")
        if metric < self.best_metric * (1.0 - self.rel_threshold):
            self.best_metric = metric
            self.stale_count = 0
            return False
        self.stale_count += 1
        if self.stale_count >= self.patience:
            self.stale_count = 0
            return True
        return False

    def reset_comparison(self) -> None:
        """Forget the comparison baseline (used when weights are replaced)."""
        self.best_metric = math.inf
        self.stale_count = 0


@dataclass(frozen=True)
class OptimizerConfig:
    """Wire-serializable optimizer settings pushed by the coordinator.

    max_grad_norm of None leaves gradients untouched; a positive value
    rescales each step's gradients so their global L2 norm stays below it,
    which keeps tiny-batch momentum SGD from blowing up late in training.
    """

    learning_rate: float = 0.05
    momentum: float = 0.9
    patience: int = 3
    factor: float = 0.5
    min_lr: float = 1e-4
    rel_threshold: float = 1e-3
    max_grad_norm: float | None = None

    def make_state(self) -> "OptimizerState":
        return OptimizerState(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            max_grad_norm=self.max_grad_norm,
            scheduler=PlateauScheduler(
                patience=self.patience,
                factor=self.factor,
                min_lr=self.min_lr,
                rel_threshold=self.rel_threshold,
            ),
        )


@dataclass
class OptimizerState:
    """SGD hyperparameters plus per-tensor momentum buffers."""

    learning_rate: float = 0.05
    momentum: float = 0.9
    max_grad_norm: float | None = None
    scheduler: PlateauScheduler = field(default_factory=PlateauScheduler)
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ConfigurationError("max_grad_norm must be positive when set")
        self.scheduler.validate()

    def apply(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place momentum SGD update, all float32."""
        lr = np.float32(self.learning_rate)
        mu = np.float32(self.momentum)
        clip_scale = None
        if self.max_grad_norm is not None:
            sq = 0.0
            for g in grads.values():
                sq += float(np.vdot(g, g))
            norm = math.sqrt(sq)
            if norm > self.max_grad_norm:
                clip_scale = np.float32(self.max_grad_norm / norm)
        for name, p in params.items():
            g = grads[name].astype(np.float32, copy=False)
            if clip_scale is not None:
                g = g * clip_scale
            if self.momentum != 0.0:
                v = self.velocity.get(name)
                if v is None:
                    v = np.zeros_like(p)
                    self.velocity[name] = v
                v *= mu
                v += g
                g = v
            p -= lr * g

    def report_metric(self, metric: float) -> None:
        """Feed one loss observation to the plateau scheduler."""
        if self.scheduler.report(metric):
            self.learning_rate = max(self.learning_rate * self.scheduler.factor, self.scheduler.min_lr)


def scheduler_report(sched: PlateauScheduler, metric: float) -> PlateauScheduler:
    """Functional form of PlateauScheduler.report: returns the advanced state."""
    out = PlateauScheduler(**{f: getattr(sched, f) for f in (
        "patience", "factor", "min_lr", "rel_threshold", "best_metric", "stale_count")})
    out.report(metric)
    return out


def train_step(
    model: ResidualClassifier,
    weights: ModelWeights,
    batch,
    labels,
    opt: OptimizerState,
    batch_index: int | None = None,
) -> tuple[ModelWeights, float]:
    """One mini-batch SGD step; returns updated weights and the batch loss."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("batch must be nonempty")
    if labels.min() < 0 or labels.max() >= model.spec.num_classes:
        raise ValueError("labels out of range for the model's class count")
    model._check_weights(weights)
    params = weights.as_dict()
    loss, grads, _ = model.loss_and_grads(params, batch, labels)
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss}", batch_index=batch_index)
    opt.apply(params, grads)
    return weights.replace(params), loss
