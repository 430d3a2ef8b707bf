"""Client-side runtime: per-node training profiles, the local training loop,
and the protocol loop a client runs against the coordinator."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .dataplane import SiloDataset
from .fedwire import (
    ClientMetrics,
    ConfigPush,
    ConnectionLostError,
    Finish,
    ProtocolError,
    Register,
    TrainResult,
    WeightsDown,
)
from .nncore import ModelWeights, OptimizerState, ResidualClassifier, train_step

log = logging.getLogger("fedkit.trainer")

_SHUFFLE_TAG = 0x7417


@dataclass(frozen=True)
class NodeProfile:
    """Per-client training configuration; device_class is descriptive only."""

    client_id: str
    epochs_per_round: int = 10
    batch_size: int = 8
    train_fraction: float = 0.8
    device_class: str = "cpu"
    speed_iters_per_s: float = 1.0

    def validate(self) -> None:
        if not self.client_id:
            raise ValueError("client_id must be non-empty")
        if self.epochs_per_round < 1:
            raise ValueError("epochs_per_round must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0.0 < self.train_fraction <= 1.0):
            raise ValueError("train_fraction must lie in (0, 1]")
        if self.speed_iters_per_s <= 0:
            raise ValueError("speed_iters_per_s must be positive")

    def summary(self) -> str:
        return (
            f"{self.device_class}:E={self.epochs_per_round},B={self.batch_size},"
            f"f={self.train_fraction},v={self.speed_iters_per_s}"
        )


def raspberry_profile(client_id: str, speed_iters_per_s: float = 0.3) -> NodeProfile:
    """The single-board preset bundling all three slow-node mitigations:
    fewer epochs per round, smaller batches, reduced train fraction."""
    return NodeProfile(
        client_id=client_id,
        epochs_per_round=3,
        batch_size=2,
        train_fraction=0.4,
        device_class="raspberry",
        speed_iters_per_s=speed_iters_per_s,
    )


def reference_profiles() -> dict[str, NodeProfile]:
    """The six measured node profiles: one GPU box, one single-board
    computer, four CPU laptops, with their observed iterations/second."""
    return {
        "spain": NodeProfile("spain", 10, 8, 0.8, "gpu", 15.6),
        "malawi": raspberry_profile("malawi", 0.3),
        "egypt": NodeProfile("egypt", 10, 8, 0.8, "cpu", 2.5),
        "uganda": NodeProfile("uganda", 10, 8, 0.8, "cpu", 0.57),
        "ghana": NodeProfile("ghana", 10, 8, 0.8, "cpu", 0.67),
        "algeria": NodeProfile("algeria", 10, 8, 0.8, "cpu", 0.79),
    }


def derive_client_seed(seed: int, client_id: str) -> int:
    """Stable per-client training seed from the experiment seed."""
    digest = hashlib.sha256(f"{seed}:{client_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def epoch_rng(seed: int, round_num: int, epoch: int) -> np.random.Generator:
    """The shuffle stream for one (round, epoch); reproducible everywhere."""
    return np.random.default_rng(np.random.SeedSequence([_SHUFFLE_TAG, seed, round_num, epoch]))


@dataclass(frozen=True)
class LocalRoundResult:
    weights: ModelWeights
    sample_count: int
    metrics: ClientMetrics


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return -(-n_samples // batch_size)


def local_train(
    model: ResidualClassifier,
    weights_in: ModelWeights,
    silo: SiloDataset,
    profile: NodeProfile,
    opt: OptimizerState,
    seed: int,
    round_num: int,
) -> LocalRoundResult:
    """Run exactly epochs_per_round epochs of mini-batch SGD on the train split.

    Shuffling is reseeded per (seed, round, epoch), so a round is reproducible
    in isolation. The plateau scheduler's comparison baseline resets at round
    start (incoming weights were just replaced by an aggregate); momentum
    carries over between rounds.
    """
    profile.validate()
    images, labels = silo.split_view("train")
    n_k = len(labels)
    if n_k == 0:
        raise ValueError(f"silo {silo.silo_id} has an empty train split")
    weights = weights_in
    opt.scheduler.reset_comparison()
    epoch_losses: list[float] = []
    steps = 0
    t0 = time.perf_counter()
    for epoch in range(profile.epochs_per_round):
        perm = epoch_rng(seed, round_num, epoch).permutation(n_k)
        loss_sum = 0.0
        for start in range(0, n_k, profile.batch_size):
            idx = perm[start : start + profile.batch_size]
            weights, loss = train_step(
                model, weights, images[idx], labels[idx], opt, batch_index=steps
            )
            loss_sum += loss * len(idx)
            steps += 1
        epoch_loss = loss_sum / n_k
        epoch_losses.append(epoch_loss)
        opt.report_metric(epoch_loss)
    wall = time.perf_counter() - t0
    metrics = ClientMetrics(
        iterations_per_second=steps / wall if wall > 0 else 0.0,
        epoch_losses=tuple(epoch_losses),
        wall_time_s=wall,
    )
    return LocalRoundResult(weights=weights, sample_count=n_k, metrics=metrics)


def train_rounds_locally(
    model: ResidualClassifier,
    weights: ModelWeights,
    silo: SiloDataset,
    profile: NodeProfile,
    opt: OptimizerState,
    seed: int,
    rounds: int,
    first_round: int = 1,
) -> tuple[ModelWeights, list[LocalRoundResult]]:
    """Plain local training of rounds x epochs_per_round epochs.

    Structured exactly like the federated client's schedule (same shuffle
    streams, same per-round scheduler reset, momentum carried across round
    boundaries), which makes a single-client federation and plain local
    training step-equivalent.
    """
    results = []
    for r in range(first_round, first_round + rounds):
        res = local_train(model, weights, silo, profile, opt, seed, r)
        weights = res.weights
        results.append(res)
    return weights, results


SiloSource = Union[SiloDataset, Callable[[NodeProfile], SiloDataset]]


@dataclass
class ClientOutcome:
    client_id: str
    rounds_completed: int
    finish_reason: str
    last_weights: ModelWeights | None
    profile: NodeProfile | None


def client_loop(conn, silo_source: SiloSource, client_id: str, seed: int,
                config_timeout_s: float | None = 60.0) -> ClientOutcome:
    """Register, receive configuration, then serve rounds until Finish.

    On connection loss the loop shuts down cleanly, keeping the last trained
    weights in the outcome. Unexpected messages raise ProtocolError.
    """
    conn.send(Register(client_id=client_id, profile_summary=""))
    profile: NodeProfile | None = None
    last_weights: ModelWeights | None = None
    rounds_completed = 0
    try:
        msg = conn.recv(timeout=config_timeout_s)
        if not isinstance(msg, ConfigPush):
            raise ProtocolError(f"expected ConfigPush, got {type(msg).__name__}")
        profile = msg.profile
        if profile.client_id != client_id:
            raise ProtocolError(
                f"coordinator pushed a profile for {profile.client_id!r} to {client_id!r}"
            )
        model = ResidualClassifier(msg.arch)
        opt = msg.plan.optimizer.make_state()
        silo = silo_source(profile) if callable(silo_source) else silo_source
        while True:
            msg = conn.recv()
            if isinstance(msg, Finish):
                log.info("client %s finished: %s", client_id, msg.reason)
                return ClientOutcome(client_id, rounds_completed, f"finish:{msg.reason}",
                                     last_weights, profile)
            if not isinstance(msg, WeightsDown):
                raise ProtocolError(f"expected WeightsDown or Finish, got {type(msg).__name__}")
            result = local_train(model, msg.weights, silo, profile, opt, seed, msg.round_num)
            conn.send(TrainResult(
                round_num=msg.round_num,
                weights=result.weights,
                sample_count=result.sample_count,
                metrics=result.metrics,
            ))
            last_weights = result.weights
            rounds_completed += 1
    except ConnectionLostError:
        log.warning("client %s lost its coordinator connection; shutting down", client_id)
        return ClientOutcome(client_id, rounds_completed, "connection_lost",
                             last_weights, profile)
    finally:
        conn.close()
