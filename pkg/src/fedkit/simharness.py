"""Whole-federation simulation in one process with a virtual clock.

Client compute time is modeled, not measured: a client that executes S
optimizer steps at a profile speed of v iterations/second is charged
S / v (+ overhead) virtual seconds. Speeds therefore shape the timing
analysis without affecting any training math, and a simulated session is
reproducible on any machine.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .coordinator import RoundPlan, RoundRecord, SessionResult, aggregate, run_session
from .dataplane import SiloDataset, SiloSpec, synth_silo
from .fedwire import TrainResult, in_process_pair
from .nncore import ArchitectureSpec, ModelWeights, ResidualClassifier
from .trainer import NodeProfile, client_loop, derive_client_seed, local_train, steps_per_epoch

log = logging.getLogger("fedkit.simharness")

_SILO_TAG = 0xDA7A
_INIT_TAG = 0x1217

MODE_THREADS = "threads"
MODE_INLINE = "inline"


@dataclass(frozen=True)
class TimingModel:
    """Virtual-clock cost model: steps / speed + constant overhead."""

    overhead_s: float = 0.0

    def predict_round_time(self, profile: NodeProfile, n_k: int) -> float:
        if profile.speed_iters_per_s <= 0:
            raise ValueError("profile speed must be positive")
        steps = profile.epochs_per_round * steps_per_epoch(n_k, profile.batch_size)
        return steps / profile.speed_iters_per_s + self.overhead_s


def predict_round_time(profile: NodeProfile, n_k: int, overhead_s: float = 0.0) -> float:
    """Seconds one client needs for a round of local training."""
    return TimingModel(overhead_s=overhead_s).predict_round_time(profile, n_k)


def default_round_timeout(profiles: list[NodeProfile], n_k_by_client: dict[str, int],
                          timing: TimingModel = TimingModel()) -> float:
    """Ten times the slowest profile's predicted round time."""
    return 10.0 * max(
        timing.predict_round_time(p, n_k_by_client[p.client_id]) for p in profiles
    )


@dataclass
class SimReport:
    client_ids: list[str]
    client_durations: list[dict[str, float]]   # per round
    round_durations: list[float]
    slowest_per_round: list[str]
    total_virtual_time_s: float
    accuracy_curve: list[float]
    loss_curve: list[float]

    @classmethod
    def from_ledger(cls, ledger: list[RoundRecord]) -> "SimReport":
        if not ledger:
            raise ValueError("cannot build a report from an empty ledger")
        client_ids = sorted({e.client_id for r in ledger for e in r.entries})
        per_round = []
        slowest = []
        for record in ledger:
            durations = {e.client_id: e.duration_s for e in record.entries}
            per_round.append(durations)
            slowest.append(max(durations, key=lambda cid: (durations[cid], cid)))
        return cls(
            client_ids=client_ids,
            client_durations=per_round,
            round_durations=[r.duration_s for r in ledger],
            slowest_per_round=slowest,
            total_virtual_time_s=float(sum(r.duration_s for r in ledger)),
            accuracy_curve=[r.eval_accuracy for r in ledger],
            loss_curve=[r.eval_loss for r in ledger],
        )

    def to_json(self) -> dict:
        return {
            "clients": self.client_ids,
            "round_durations_s": self.round_durations,
            "slowest_per_round": self.slowest_per_round,
            "total_virtual_time_s": self.total_virtual_time_s,
            "accuracy_curve": self.accuracy_curve,
            "client_durations": self.client_durations,
        }


@dataclass(frozen=True)
class StragglerRow:
    client_id: str
    mean_round_time_s: float
    slowest_share: float
    slowdown_vs_fastest: float


def straggler_report(report: SimReport) -> list[StragglerRow]:
    """Per client: mean virtual round time, share of rounds as the slowest
    node, and slowdown factor relative to the fastest client."""
    if not report.client_durations:
        raise ValueError("empty simulation report")
    means = {
        cid: float(np.mean([r[cid] for r in report.client_durations]))
        for cid in report.client_ids
    }
    fastest = min(means.values())
    rounds = len(report.client_durations)
    return [
        StragglerRow(
            client_id=cid,
            mean_round_time_s=means[cid],
            slowest_share=sum(1 for s in report.slowest_per_round if s == cid) / rounds,
            slowdown_vs_fastest=means[cid] / fastest if fastest > 0 else math.inf,
        )
        for cid in report.client_ids
    ]


def export_straggler_csv(rows: list[StragglerRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["client_id", "mean_round_time_s", "slowest_share", "slowdown_vs_fastest"])
        for row in rows:
            writer.writerow([
                row.client_id,
                f"{row.mean_round_time_s:.6f}",
                f"{row.slowest_share:.4f}",
                f"{row.slowdown_vs_fastest:.4f}",
            ])


def export_sim_report(report: SimReport, outdir: str | Path, prefix: str = "sim") -> list[Path]:
    """sim_report.csv (per-round client durations) + sim_report.json."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{prefix}_report.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["round", "round_duration_s", "slowest_client"] + report.client_ids)
        for i, durations in enumerate(report.client_durations, start=1):
            writer.writerow(
                [i, f"{report.round_durations[i - 1]:.6f}", report.slowest_per_round[i - 1]]
                + [f"{durations[cid]:.6f}" for cid in report.client_ids]
            )
    json_path = outdir / f"{prefix}_report.json"
    with open(json_path, "w") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    return [csv_path, json_path]


@dataclass
class SimResult:
    final_weights: ModelWeights
    ledger: list[RoundRecord]
    report: SimReport
    silos: dict[str, SiloDataset]
    session: SessionResult | None = None
    client_outcomes: dict[str, object] = field(default_factory=dict)


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def initial_weights(arch: ArchitectureSpec, seed: int) -> ModelWeights:
    """The session's starting global weights for an experiment seed."""
    return ResidualClassifier(arch).init_weights(_derived_seed(_INIT_TAG, seed))


def build_silos(silo_specs: list[SiloSpec], seed: int, val_fraction: float = 0.1) -> dict[str, SiloDataset]:
    """One dataset per spec, each from its own derived substream."""
    silos = {}
    for index, spec in enumerate(silo_specs):
        silos[spec.silo_id] = synth_silo(spec, _derived_seed(_SILO_TAG, seed, index), val_fraction)
    return silos


def merged_eval_fn(model: ResidualClassifier, silos: dict[str, SiloDataset],
                   split_name: str = "val") -> Callable[[ModelWeights], tuple[float, float]]:
    """Post-round evaluation on the concatenated held-out splits of all silos."""
    parts = [silos[sid].split_view(split_name) for sid in sorted(silos)]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])

    def eval_fn(weights: ModelWeights) -> tuple[float, float]:
        return model.evaluate(weights, images, labels)

    return eval_fn


def run_simulation(
    silo_specs: list[SiloSpec],
    profiles: list[NodeProfile],
    plan: RoundPlan,
    arch: ArchitectureSpec,
    seed: int,
    mode: str = MODE_THREADS,
    timing: TimingModel = TimingModel(),
    aggregation_mode: str = "weighted",
    val_fraction: float = 0.1,
    aggregation_cost_s: float = 0.0,
    silos: dict[str, SiloDataset] | None = None,
) -> SimResult:
    """Simulate a full multi-silo federation, deterministically per seed.

    `threads` mode drives every client through the real protocol over the
    in-process transport; `inline` mode calls the same training loop directly
    in client order. The two produce identical weights, ledgers and reports,
    which the test suite asserts.
    """
    plan.validate()
    by_id = {p.client_id: p for p in profiles}
    if len(by_id) != len(profiles):
        raise ValueError("duplicate client ids in profiles")
    spec_ids = [s.silo_id for s in silo_specs]
    if sorted(spec_ids) != sorted(by_id):
        raise ValueError(f"profiles {sorted(by_id)} do not match silos {sorted(spec_ids)}")
    for spec, profile in zip(silo_specs, [by_id[s.silo_id] for s in silo_specs]):
        if abs(spec.train_fraction - profile.train_fraction) > 1e-9:
            log.warning(
                "silo %s: spec train_fraction %.2f differs from profile %.2f",
                spec.silo_id, spec.train_fraction, profile.train_fraction,
            )

    if silos is None:
        silos = build_silos(silo_specs, seed, val_fraction)
    model = ResidualClassifier(arch)
    initial = initial_weights(arch, seed)
    eval_fn = merged_eval_fn(model, silos)

    if plan.round_timeout_s is None:
        n_k = {sid: len(silos[sid].splits.train) for sid in silos}
        plan = replace(plan, round_timeout_s=default_round_timeout(profiles, n_k, timing))

    def duration_fn(cid: str, result: TrainResult) -> float:
        return timing.predict_round_time(by_id[cid], result.sample_count)

    if mode == MODE_THREADS:
        session, outcomes = _run_threaded(
            silos, by_id, plan, arch, seed, initial,
            aggregation_mode, duration_fn, aggregation_cost_s, eval_fn,
        )
    elif mode == MODE_INLINE:
        session = _run_inline(
            silos, by_id, plan, arch, seed, initial,
            aggregation_mode, duration_fn, aggregation_cost_s, eval_fn, model,
        )
        outcomes = {}
    else:
        raise ValueError(f"unknown simulation mode {mode!r}")

    report = SimReport.from_ledger(session.ledger)
    return SimResult(
        final_weights=session.final_weights,
        ledger=session.ledger,
        report=report,
        silos=silos,
        session=session,
        client_outcomes=outcomes,
    )


def _run_threaded(silos, by_id, plan, arch, seed, initial,
                  aggregation_mode, duration_fn, aggregation_cost_s, eval_fn):
    server_conns = []
    outcomes: dict[str, object] = {}
    client_threads = []
    for cid in sorted(by_id):
        server_side, client_side = in_process_pair()
        server_conns.append(server_side)

        def run_client(conn=client_side, cid=cid):
            outcomes[cid] = client_loop(
                conn, silos[cid], cid, derive_client_seed(seed, cid)
            )

        client_threads.append(threading.Thread(target=run_client, daemon=True))
    for t in client_threads:
        t.start()
    try:
        session = run_session(
            server_conns,
            plan,
            arch,
            dict(by_id),
            initial,
            aggregation_mode=aggregation_mode,
            duration_fn=duration_fn,
            aggregation_cost_s=aggregation_cost_s,
            eval_fn=eval_fn,
        )
    finally:
        for conn in server_conns:
            conn.close()
    for t in client_threads:
        t.join(timeout=30.0)
    return session, outcomes


def _run_inline(silos, by_id, plan, arch, seed, initial,
                aggregation_mode, duration_fn, aggregation_cost_s, eval_fn, model):
    """Sequential equivalent of the threaded session, bypassing the wire."""
    from .coordinator import ClientRoundEntry, Phase, ServerState

    ordered_ids = sorted(by_id)
    opts = {cid: plan.optimizer.make_state() for cid in ordered_ids}
    seeds = {cid: derive_client_seed(seed, cid) for cid in ordered_ids}
    state = ServerState(global_weights=initial, registry=dict(by_id))
    for round_num in range(1, plan.total_rounds + 1):
        round_results = {}
        for cid in ordered_ids:
            round_results[cid] = local_train(
                model, state.global_weights, silos[cid], by_id[cid],
                opts[cid], seeds[cid], round_num,
            )
        ordered = [(round_results[cid].weights, round_results[cid].sample_count) for cid in ordered_ids]
        state.global_weights = aggregate(ordered, aggregation_mode, ordered_ids)
        eval_acc, eval_loss = eval_fn(state.global_weights)
        durations = {
            cid: duration_fn(cid, TrainResult(
                round_num=round_num,
                weights=round_results[cid].weights,
                sample_count=round_results[cid].sample_count,
                metrics=round_results[cid].metrics,
            ))
            for cid in ordered_ids
        }
        entries = [
            ClientRoundEntry(
                client_id=cid,
                sample_count=round_results[cid].sample_count,
                duration_s=durations[cid],
                metrics=round_results[cid].metrics,
            )
            for cid in ordered_ids
        ]
        state.ledger.append(RoundRecord(
            round_num=round_num,
            entries=entries,
            duration_s=max(durations.values()) + aggregation_cost_s,
            aggregation_s=aggregation_cost_s,
            aggregation_mode=aggregation_mode,
            eval_accuracy=eval_acc,
            eval_loss=eval_loss,
            completed_at=time.time(),
        ))
        state.current_round = round_num
    state.phase = Phase.DONE
    return SessionResult(final_weights=state.global_weights, ledger=state.ledger, state=state)
