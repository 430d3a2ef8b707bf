"""Experiment configuration: one sectioned key=value file drives a run."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from ..coordinator import AGGREGATION_MODES, RoundPlan
from ..dataplane import CLASS_NAMES, SiloSpec
from ..nncore import ArchitectureSpec, OptimizerConfig
from ..trainer import NodeProfile

CONFIG_VERSION = 1

# Desk-scale six-silo default. Small-count silos carry their real per-class
# image counts; the large silo is ratio-preserved but scaled down. Epochs per
# round are desk-reduced; the slow-node silo keeps its reduced batch size and
# train fraction. Learning rate is calibrated for the compact architecture.
DEFAULT_CONFIG_TEXT = """\
[experiment]
name = desk-six-silo
version = 1
seeds = 7
rounds = 16
val_fraction = 0.1
aggregation = weighted
round_timeout_s = 0

[arch]
input_size = 32
channels = 1
num_classes = 4
stem_stride = 2
stages = 1x8, 1x16, 1x32

[optimizer]
learning_rate = 0.01
momentum = 0.9
patience = 3
factor = 0.5
min_lr = 0.0001
rel_threshold = 0.001
max_grad_norm = 25.0

[silo:spain]
abdomen = 14
brain = 36
femur = 21
thorax = 34
augmentation_factor = 6
train_fraction = 0.8
epochs_per_round = 2
batch_size = 8
device_class = gpu
speed_iters_per_s = 15.6

[silo:malawi]
abdomen = 25
brain = 25
femur = 25
thorax = 25
augmentation_factor = 6
train_fraction = 0.4
epochs_per_round = 2
batch_size = 2
device_class = raspberry
speed_iters_per_s = 0.3

[silo:egypt]
abdomen = 25
brain = 25
femur = 25
thorax = 25
augmentation_factor = 6
train_fraction = 0.8
epochs_per_round = 2
batch_size = 8
device_class = cpu
speed_iters_per_s = 2.5

[silo:uganda]
abdomen = 25
brain = 25
femur = 25
thorax = 0
augmentation_factor = 6
train_fraction = 0.8
epochs_per_round = 2
batch_size = 8
device_class = cpu
speed_iters_per_s = 0.57

[silo:ghana]
abdomen = 25
brain = 25
femur = 25
thorax = 0
augmentation_factor = 6
train_fraction = 0.8
epochs_per_round = 2
batch_size = 8
device_class = cpu
speed_iters_per_s = 0.67

[silo:algeria]
abdomen = 25
brain = 25
femur = 25
thorax = 25
augmentation_factor = 6
train_fraction = 0.8
epochs_per_round = 2
batch_size = 8
device_class = cpu
speed_iters_per_s = 0.79
"""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seeds: tuple[int, ...]
    rounds: int
    val_fraction: float
    aggregation: str
    round_timeout_s: float | None
    arch: ArchitectureSpec
    optimizer: OptimizerConfig
    silos: tuple[SiloSpec, ...]
    profiles: tuple[NodeProfile, ...]
    text: str
    config_hash: str

    @property
    def silo_ids(self) -> tuple[str, ...]:
        return tuple(s.silo_id for s in self.silos)

    def plan(self, rounds: int | None = None) -> RoundPlan:
        return RoundPlan(
            total_rounds=rounds if rounds is not None else self.rounds,
            round_timeout_s=self.round_timeout_s,
            optimizer=self.optimizer,
        )

    def with_seeds(self, seeds: tuple[int, ...]) -> "ExperimentConfig":
        import dataclasses

        return dataclasses.replace(self, seeds=seeds)


def _parse_stages(text: str) -> tuple[tuple[int, int], ...]:
    stages = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        blocks, _, width = part.partition("x")
        stages.append((int(blocks), int(width)))
    if not stages:
        raise ValueError(f"no stages in {text!r}")
    return tuple(stages)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)

    exp = parser["experiment"]
    version = exp.getint("version", fallback=CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"config version {version} not supported (expected {CONFIG_VERSION})")
    seeds = tuple(int(s.strip()) for s in exp.get("seeds", "7").split(",") if s.strip())
    aggregation = exp.get("aggregation", "weighted").strip()
    if aggregation not in AGGREGATION_MODES:
        raise ValueError(f"aggregation must be one of {AGGREGATION_MODES}, got {aggregation!r}")
    timeout = exp.getfloat("round_timeout_s", fallback=0.0)

    arch_sec = parser["arch"]
    arch = ArchitectureSpec(
        input_size=arch_sec.getint("input_size", 32),
        channels=arch_sec.getint("channels", 1),
        num_classes=arch_sec.getint("num_classes", 4),
        stages=_parse_stages(arch_sec.get("stages", "1x8, 1x16, 1x32")),
        stem_stride=arch_sec.getint("stem_stride", 1),
    )
    arch.validate()

    if parser.has_section("optimizer"):
        opt_sec = parser["optimizer"]
        optimizer = OptimizerConfig(
            learning_rate=opt_sec.getfloat("learning_rate", 0.05),
            momentum=opt_sec.getfloat("momentum", 0.9),
            patience=opt_sec.getint("patience", 3),
            factor=opt_sec.getfloat("factor", 0.5),
            min_lr=opt_sec.getfloat("min_lr", 1e-4),
            rel_threshold=opt_sec.getfloat("rel_threshold", 1e-3),
            max_grad_norm=opt_sec.getfloat("max_grad_norm", 0.0) or None,
        )
    else:
        optimizer = OptimizerConfig()
    optimizer.make_state().validate()

    silos: list[SiloSpec] = []
    profiles: list[NodeProfile] = []
    for section in parser.sections():
        if not section.startswith("silo:"):
            continue
        silo_id = section.split(":", 1)[1]
        sec = parser[section]
        counts = {name: sec.getint(name, 0) for name in CLASS_NAMES}
        spec = SiloSpec(
            silo_id=silo_id,
            class_counts={k: v for k, v in counts.items() if v > 0},
            augmentation_factor=sec.getint("augmentation_factor", 6),
            train_fraction=sec.getfloat("train_fraction", 0.8),
            input_size=arch.input_size,
        )
        spec.validate()
        profile = NodeProfile(
            client_id=silo_id,
            epochs_per_round=sec.getint("epochs_per_round", 10),
            batch_size=sec.getint("batch_size", 8),
            train_fraction=sec.getfloat("train_fraction", 0.8),
            device_class=sec.get("device_class", "cpu"),
            speed_iters_per_s=sec.getfloat("speed_iters_per_s", 1.0),
        )
        profile.validate()
        silos.append(spec)
        profiles.append(profile)
    if not silos:
        raise ValueError("config defines no [silo:*] sections")

    return ExperimentConfig(
        name=exp.get("name", "experiment"),
        seeds=seeds,
        rounds=exp.getint("rounds", 14),
        val_fraction=exp.getfloat("val_fraction", 0.1),
        aggregation=aggregation,
        round_timeout_s=None if timeout <= 0 else timeout,
        arch=arch,
        optimizer=optimizer,
        silos=tuple(silos),
        profiles=tuple(profiles),
        text=text,
        config_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Parse a config file, or the built-in desk default when path is None."""
    if path is None:
        return parse_config(DEFAULT_CONFIG_TEXT)
    return parse_config(Path(path).read_text())


def default_config() -> ExperimentConfig:
    return parse_config(DEFAULT_CONFIG_TEXT)
