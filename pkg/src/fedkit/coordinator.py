"""Server-side synchronous round engine: registration, broadcast, barrier
wait, federated averaging, and the per-round ledger."""

from __future__ import annotations

import csv
import enum
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .fedwire import (
    ClientMetrics,
    ConfigPush,
    FedwireError,
    Finish,
    Register,
    TrainResult,
    WeightsDown,
)
from .nncore import ArchitectureSpec, ModelWeights, OptimizerConfig
from .trainer import NodeProfile

log = logging.getLogger("fedkit.coordinator")

WEIGHTED = "weighted"
UNIFORM = "uniform"
AGGREGATION_MODES = (WEIGHTED, UNIFORM)


class AggregationError(RuntimeError):
    """Shape-incompatible or empty aggregation input; names the offender."""


class RoundFailedError(RuntimeError):
    """A synchronous round could not complete; carries the missing clients."""

    def __init__(self, round_num: int, missing: list[str], state: "ServerState"):
        super().__init__(f"round {round_num} failed; missing results from {missing}")
        self.round_num = round_num
        self.missing = missing
        self.state = state


@dataclass(frozen=True)
class RoundPlan:
    """How many synchronous rounds to run and how long to wait for each."""

    total_rounds: int = 20
    round_timeout_s: float | None = None
    participation: str = "all"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def validate(self) -> None:
        if self.total_rounds < 1:
            raise ValueError("total_rounds must be >= 1")
        if self.participation != "all":
            raise ValueError("only full participation is supported")
        if self.round_timeout_s is not None and self.round_timeout_s <= 0:
            raise ValueError("round_timeout_s must be positive")


class Phase(enum.Enum):
    AWAIT_REGISTRATION = "AwaitRegistration"
    BROADCASTING = "Broadcasting"
    AWAIT_RESULTS = "AwaitResults"
    AGGREGATING = "Aggregating"
    DONE = "Done"
    FAILED = "Failed"


@dataclass
class ClientRoundEntry:
    client_id: str
    sample_count: int
    duration_s: float
    metrics: ClientMetrics


@dataclass
class RoundRecord:
    round_num: int
    entries: list[ClientRoundEntry]
    duration_s: float
    aggregation_s: float
    aggregation_mode: str
    eval_accuracy: float | None = None
    eval_loss: float | None = None
    completed_at: float = 0.0  # unix timestamp; monotone across a session


@dataclass
class ServerState:
    phase: Phase = Phase.AWAIT_REGISTRATION
    current_round: int = 0
    global_weights: ModelWeights | None = None
    registry: dict[str, NodeProfile] = field(default_factory=dict)
    ledger: list[RoundRecord] = field(default_factory=list)


@dataclass
class SessionResult:
    final_weights: ModelWeights
    ledger: list[RoundRecord]
    state: ServerState


def aggregate(
    results: list[tuple[ModelWeights, int]],
    mode: str = WEIGHTED,
    client_ids: list[str] | None = None,
) -> ModelWeights:
    """Elementwise federated average of client weights.

    Sample-weighted mode computes sum_k (n_k / sum n) * w_k; uniform mode
    treats every client alike. Accumulation runs in float64 in the order
    given (the coordinator orders by ascending client_id, which makes the
    result bit-reproducible), then rounds once to float32.
    """
    if mode not in AGGREGATION_MODES:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if not results:
        raise AggregationError("cannot aggregate an empty result set")
    ids = client_ids or [f"#{i}" for i in range(len(results))]
    reference = results[0][0]
    for (weights, n_k), cid in zip(results, ids):
        if n_k <= 0:
            raise AggregationError(f"client {cid} reported non-positive sample count {n_k}")
        if not weights.compatible_with(reference):
            raise AggregationError(
                f"client {cid} submitted weights with manifest "
                f"{weights.manifest_hash[:12]}, expected {reference.manifest_hash[:12]}"
            )
    if mode == WEIGHTED:
        total = float(sum(n for _, n in results))
        fractions = [n / total for _, n in results]
    else:
        fractions = [1.0 / len(results)] * len(results)
    out: dict[str, np.ndarray] = {}
    for name, ref_arr in reference.entries:
        acc = np.zeros(ref_arr.shape, dtype=np.float64)
        for (weights, _), frac in zip(results, fractions):
            acc += weights[name].astype(np.float64) * frac
        out[name] = acc.astype(np.float32)
    return reference.replace(out)


def _await_registrations(connections, profiles, timeout_s) -> dict[str, object]:
    by_client: dict[str, object] = {}
    for conn in connections:
        msg = conn.recv(timeout=timeout_s)
        if not isinstance(msg, Register):
            raise FedwireError(f"expected Register, got {type(msg).__name__}")
        if msg.client_id in by_client:
            raise ValueError(f"duplicate registration for {msg.client_id!r}")
        if msg.client_id not in profiles:
            raise ValueError(f"no profile configured for client {msg.client_id!r}")
        by_client[msg.client_id] = conn
    return by_client


def run_round(
    state: ServerState,
    connections: dict[str, object],
    plan: RoundPlan,
    round_num: int,
    aggregation_mode: str = WEIGHTED,
    duration_fn: Callable[[str, TrainResult], float] | None = None,
    aggregation_cost_s: float | None = None,
    eval_fn: Callable[[ModelWeights], tuple[float, float]] | None = None,
) -> ServerState:
    """One synchronous round: broadcast, barrier-wait all clients, aggregate.

    A timeout or disconnect fails the whole round: synchronous semantics, no
    partial aggregation. Per-client handlers run concurrently so a slow
    sender cannot stall its peers' uploads.
    """
    ordered_ids = sorted(connections)
    state.phase = Phase.BROADCASTING
    broadcast_at = time.perf_counter()
    for cid in ordered_ids:
        connections[cid].send(WeightsDown(round_num=round_num, weights=state.global_weights))

    state.phase = Phase.AWAIT_RESULTS
    results: dict[str, TrainResult] = {}
    arrival: dict[str, float] = {}
    errors: dict[str, Exception] = {}

    def collect(cid: str) -> None:
        try:
            msg = connections[cid].recv(timeout=plan.round_timeout_s)
            if not isinstance(msg, TrainResult):
                raise FedwireError(f"expected TrainResult, got {type(msg).__name__}")
            if msg.round_num != round_num:
                raise FedwireError(
                    f"client {cid} answered round {msg.round_num} during round {round_num}"
                )
            results[cid] = msg
            arrival[cid] = time.perf_counter()
        except Exception as exc:  # noqa: BLE001 - handler boundary
            errors[cid] = exc

    handlers = [threading.Thread(target=collect, args=(cid,), daemon=True) for cid in ordered_ids]
    for t in handlers:
        t.start()
    for t in handlers:
        t.join()

    missing = [cid for cid in ordered_ids if cid not in results]
    if missing:
        state.phase = Phase.FAILED
        for cid in missing:
            log.error("round %d: no result from %s: %s", round_num, cid, errors.get(cid))
        raise RoundFailedError(round_num, missing, state)

    state.phase = Phase.AGGREGATING
    agg_start = time.perf_counter()
    ordered_results = [(results[cid].weights, results[cid].sample_count) for cid in ordered_ids]
    state.global_weights = aggregate(ordered_results, aggregation_mode, ordered_ids)
    measured_agg = time.perf_counter() - agg_start

    eval_acc = eval_loss = None
    if eval_fn is not None:
        eval_acc, eval_loss = eval_fn(state.global_weights)

    if duration_fn is not None:
        durations = {cid: duration_fn(cid, results[cid]) for cid in ordered_ids}
        agg_cost = aggregation_cost_s if aggregation_cost_s is not None else 0.0
    else:
        durations = {cid: arrival[cid] - broadcast_at for cid in ordered_ids}
        agg_cost = aggregation_cost_s if aggregation_cost_s is not None else measured_agg

    entries = [
        ClientRoundEntry(
            client_id=cid,
            sample_count=results[cid].sample_count,
            duration_s=durations[cid],
            metrics=results[cid].metrics,
        )
        for cid in ordered_ids
    ]
    record = RoundRecord(
        round_num=round_num,
        entries=entries,
        duration_s=max(durations.values()) + agg_cost,
        aggregation_s=agg_cost,
        aggregation_mode=aggregation_mode,
        eval_accuracy=eval_acc,
        eval_loss=eval_loss,
        completed_at=time.time(),
    )
    state.ledger.append(record)
    state.current_round = round_num
    return state


def run_session(
    connections: list,
    plan: RoundPlan,
    arch: ArchitectureSpec,
    profiles: dict[str, NodeProfile],
    initial_weights: ModelWeights,
    aggregation_mode: str = WEIGHTED,
    duration_fn: Callable[[str, TrainResult], float] | None = None,
    aggregation_cost_s: float | None = None,
    eval_fn: Callable[[ModelWeights], tuple[float, float]] | None = None,
    registration_timeout_s: float | None = 60.0,
) -> SessionResult:
    """Full synchronous session: registration, config push, rounds, finish.

    Deterministic given seeds and the in-process transport; the partial
    ledger survives in the raised error's state when a round fails.
    """
    plan.validate()
    if not connections:
        raise ValueError("at least one client connection is required")
    state = ServerState(global_weights=initial_weights)
    by_client = _await_registrations(connections, profiles, registration_timeout_s)
    state.registry = {cid: profiles[cid] for cid in sorted(by_client)}
    log.info("session: %d clients registered: %s", len(by_client), sorted(by_client))

    for cid in sorted(by_client):
        by_client[cid].send(ConfigPush(profile=profiles[cid], arch=arch, plan=plan))

    for round_num in range(1, plan.total_rounds + 1):
        run_round(
            state,
            by_client,
            plan,
            round_num,
            aggregation_mode=aggregation_mode,
            duration_fn=duration_fn,
            aggregation_cost_s=aggregation_cost_s,
            eval_fn=eval_fn,
        )
        rec = state.ledger[-1]
        log.info(
            "round %d/%d: duration=%.3fs eval_acc=%s",
            round_num, plan.total_rounds, rec.duration_s,
            f"{rec.eval_accuracy:.4f}" if rec.eval_accuracy is not None else "-",
        )

    for cid in sorted(by_client):
        try:
            by_client[cid].send(Finish(reason="complete"))
        except FedwireError as exc:
            log.warning("finish broadcast to %s failed: %s", cid, exc)
    state.phase = Phase.DONE
    return SessionResult(final_weights=state.global_weights, ledger=state.ledger, state=state)


def export_ledger_csv(ledger: list[RoundRecord], path: str | Path) -> None:
    """One row per round per client: the straggler analysis table."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["round", "client_id", "n_k", "duration_s", "iters_per_s", "loss"])
        for record in ledger:
            for e in record.entries:
                last_loss = e.metrics.epoch_losses[-1] if e.metrics.epoch_losses else float("nan")
                writer.writerow([
                    record.round_num,
                    e.client_id,
                    e.sample_count,
                    f"{e.duration_s:.6f}",
                    f"{e.metrics.iterations_per_second:.6f}",
                    f"{last_loss:.6f}",
                ])


def session_summary(result: SessionResult, extra: dict | None = None) -> dict:
    """JSON-ready summary of a finished session."""
    ledger = result.ledger
    summary = {
        "phase": result.state.phase.value,
        "rounds": len(ledger),
        "clients": sorted(result.state.registry),
        "aggregation_mode": ledger[-1].aggregation_mode if ledger else None,
        "total_duration_s": sum(r.duration_s for r in ledger),
        "round_durations_s": [r.duration_s for r in ledger],
        "accuracy_curve": [r.eval_accuracy for r in ledger],
        "loss_curve": [r.eval_loss for r in ledger],
        "final_manifest": result.final_weights.manifest_hash,
    }
    if extra:
        summary.update(extra)
    return summary


def write_session_summary(result: SessionResult, path: str | Path, extra: dict | None = None) -> None:
    with open(path, "w") as f:
        json.dump(session_summary(result, extra), f, indent=2, sort_keys=True)
        f.write("\n")
