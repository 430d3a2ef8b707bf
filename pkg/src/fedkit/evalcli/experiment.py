"""The eight-model experiment: six local baselines, one centralized model,
one federated model; cross-silo evaluation matrix and accuracy curves."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..coordinator import RoundRecord, export_ledger_csv
from ..dataplane import SiloDataset, SplitIndices
from ..nncore import ModelWeights, ResidualClassifier
from ..simharness import (
    MODE_INLINE,
    SimReport,
    TimingModel,
    export_sim_report,
    merged_eval_fn,
    run_simulation,
)
from ..trainer import NodeProfile, derive_client_seed, train_rounds_locally
from .config import ExperimentConfig
from .report import (
    CrossEvalMatrix,
    write_curves_csv,
    write_curves_svg,
    write_matrix_csv,
    write_matrix_svg,
)

log = logging.getLogger("fedkit.evalcli")

CENTRALIZED = "centralized"
FEDERATED = "federated"


@dataclass
class SeedResult:
    seed: int
    matrix: CrossEvalMatrix
    curves: dict[str, list[float]]
    ledger: list[RoundRecord]
    sim_report: SimReport
    models: dict[str, ModelWeights]
    wall_time_s: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    per_seed: list[SeedResult]
    mean_matrix: CrossEvalMatrix | None = None
    outputs: list[Path] = field(default_factory=list)


def merge_train_splits(silos: dict[str, SiloDataset], silo_order: list[str]) -> SiloDataset:
    """All silos' train splits as one silo whose train split covers everything."""
    images = []
    labels = []
    origins = []
    offset = 0
    for sid in silo_order:
        ds = silos[sid]
        xi, yi = ds.split_view("train")
        images.append(xi)
        labels.append(yi)
        origins.append(ds.origin_ids[ds.splits.train] + offset)
        offset += int(ds.origin_ids.max()) + 1
    images = np.concatenate(images)
    n = len(images)
    merged = SiloDataset(
        silo_id="merged",
        images=images,
        labels=np.concatenate(labels),
        origin_ids=np.concatenate(origins),
        splits=SplitIndices(
            train=np.arange(n, dtype=np.int64),
            val=np.empty(0, dtype=np.int64),
            test=np.empty(0, dtype=np.int64),
        ),
    )
    return merged


def _train_on_silo(config: ExperimentConfig, silo: SiloDataset, profile: NodeProfile,
                   seed_label: str, seed: int, init: ModelWeights,
                   eval_each_round=None) -> tuple[ModelWeights, list[float]]:
    """Local-style training for rounds x epochs_per_round epochs, optionally
    evaluating the running weights after every round-equivalent."""
    model = ResidualClassifier(config.arch)
    opt = config.optimizer.make_state()
    weights = init
    curve: list[float] = []
    train_seed = derive_client_seed(seed, seed_label)
    for round_num in range(1, config.rounds + 1):
        weights, _ = train_rounds_locally(
            model, weights, silo, profile, opt, train_seed, rounds=1, first_round=round_num
        )
        if eval_each_round is not None:
            acc, _ = eval_each_round(weights)
            curve.append(acc)
    return weights, curve


def default_profile(config: ExperimentConfig, client_id: str) -> NodeProfile:
    """Centralized training uses the plain (non-raspberry) desk profile."""
    epochs = max(p.epochs_per_round for p in config.profiles)
    batch = max(p.batch_size for p in config.profiles)
    return NodeProfile(
        client_id=client_id,
        epochs_per_round=epochs,
        batch_size=batch,
        train_fraction=1.0,
        device_class="cpu",
        speed_iters_per_s=1.0,
    )


def train_locals(config: ExperimentConfig, silos: dict[str, SiloDataset], seed: int,
                 init: ModelWeights, workers: int = 2) -> dict[str, ModelWeights]:
    """One model per silo, trained on that silo's train split only, with the
    same rounds x epochs step budget as that silo's federated client.

    The six trainings are independent (no shared mutable state), so they run
    in a small thread pool; results do not depend on scheduling."""
    by_id = {p.client_id: p for p in config.profiles}

    def one(sid: str) -> tuple[str, ModelWeights]:
        weights, _ = _train_on_silo(
            config, silos[sid], by_id[sid], f"local:{sid}", seed, init
        )
        log.info("trained local-%s", sid)
        return sid, weights

    models: dict[str, ModelWeights] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for sid, weights in pool.map(one, config.silo_ids):
            models[f"local-{sid}"] = weights
    return models


def train_centralized(config: ExperimentConfig, silos: dict[str, SiloDataset], seed: int,
                      init: ModelWeights, eval_fn=None) -> tuple[ModelWeights, list[float]]:
    """One model on the union of all silo train splits."""
    merged = merge_train_splits(silos, list(config.silo_ids))
    profile = default_profile(config, "centralized")
    weights, curve = _train_on_silo(
        config, merged, profile, "centralized", seed, init, eval_each_round=eval_fn
    )
    log.info("trained centralized on %d samples", len(merged))
    return weights, curve


def train_federated(config: ExperimentConfig, seed: int,
                    silos: dict[str, SiloDataset] | None = None,
                    mode: str = MODE_INLINE):
    """Full federated session. Inline execution by default: with six clients
    on a small CPU the threaded transport variant computes the identical
    session (a tested equivalence) several times slower."""
    return run_simulation(
        list(config.silos),
        list(config.profiles),
        config.plan(),
        config.arch,
        seed,
        mode=mode,
        timing=TimingModel(),
        aggregation_mode=config.aggregation,
        val_fraction=config.val_fraction,
        silos=silos,
    )


def cross_eval(config: ExperimentConfig, silos: dict[str, SiloDataset],
               models: dict[str, ModelWeights]) -> CrossEvalMatrix:
    model = ResidualClassifier(config.arch)
    names = tuple(models)
    values = np.zeros((len(names), len(config.silo_ids)), dtype=np.float64)
    for i, name in enumerate(names):
        for j, sid in enumerate(config.silo_ids):
            images, labels = silos[sid].split_view("test")
            acc, _ = model.evaluate(models[name], images, labels)
            values[i, j] = acc
    return CrossEvalMatrix(model_names=names, silo_ids=config.silo_ids, values=values)


def run_seed(config: ExperimentConfig, seed: int) -> SeedResult:
    """All eight models for one seed, then the cross-silo matrix."""
    t0 = time.perf_counter()
    sim = train_federated(config, seed)
    silos = sim.silos
    model = ResidualClassifier(config.arch)
    init = model.init_weights(_init_seed(seed))
    eval_fn = merged_eval_fn(model, silos)

    models: dict[str, ModelWeights] = {}
    models.update(train_locals(config, silos, seed, init))
    central_weights, central_curve = train_centralized(config, silos, seed, init, eval_fn)
    models[CENTRALIZED] = central_weights
    models[FEDERATED] = sim.final_weights

    matrix = cross_eval(config, silos, models)
    curves = {
        CENTRALIZED: central_curve,
        FEDERATED: [a for a in sim.report.accuracy_curve],
    }
    return SeedResult(
        seed=seed,
        matrix=matrix,
        curves=curves,
        ledger=sim.ledger,
        sim_report=sim.report,
        models=models,
        wall_time_s=time.perf_counter() - t0,
    )


def _init_seed(seed: int) -> int:
    # All eight models start from the same initial weights for comparability;
    # this mirrors the simulation harness's derivation.
    from ..simharness import _INIT_TAG, _derived_seed

    return _derived_seed(_INIT_TAG, seed)


def write_seed_outputs(config: ExperimentConfig, result: SeedResult, outdir: Path,
                       save_models: bool = False) -> list[Path]:
    from ..fedwire import save_weights

    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    matrix_csv = outdir / "matrix.csv"
    write_matrix_csv(result.matrix, matrix_csv)
    write_matrix_svg(result.matrix, outdir / "matrix.svg")
    write_curves_csv(result.curves, outdir / "curves.csv")
    write_curves_svg(result.curves, outdir / "curves.svg")
    export_ledger_csv(result.ledger, outdir / "ledger.csv")
    export_sim_report(result.sim_report, outdir)
    session = {
        "experiment": config.name,
        "seed": result.seed,
        "config_hash": config.config_hash,
        "rounds": config.rounds,
        "row_means": result.matrix.row_means(),
        "wall_time_s": result.wall_time_s,
        "total_virtual_time_s": result.sim_report.total_virtual_time_s,
    }
    with open(outdir / "session.json", "w") as f:
        json.dump(session, f, indent=2, sort_keys=True)
        f.write("\n")
    if save_models:
        models_dir = outdir / "models"
        models_dir.mkdir(exist_ok=True)
        for name, weights in result.models.items():
            save_weights(weights, models_dir / f"{name}.weights")
    written.extend([
        matrix_csv, outdir / "matrix.svg", outdir / "curves.csv", outdir / "curves.svg",
        outdir / "ledger.csv", outdir / "session.json",
    ])
    return written


def run_experiment(config: ExperimentConfig, outdir: str | Path,
                   save_models: bool = False) -> ExperimentResult:
    """Run every configured seed; multi-seed runs get per-seed subdirectories
    plus a seed-averaged matrix at the top level."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.ini").write_text(config.text)
    per_seed = []
    outputs: list[Path] = [outdir / "config.ini"]
    for seed in config.seeds:
        result = run_seed(config, seed)
        seed_dir = outdir if len(config.seeds) == 1 else outdir / f"seed_{seed}"
        outputs.extend(write_seed_outputs(config, result, seed_dir, save_models))
        per_seed.append(result)
        log.info("seed %d finished in %.1fs", seed, result.wall_time_s)

    mean_matrix = None
    if len(per_seed) > 1:
        stacked = np.stack([r.matrix.values for r in per_seed]).mean(axis=0)
        mean_matrix = CrossEvalMatrix(
            model_names=per_seed[0].matrix.model_names,
            silo_ids=per_seed[0].matrix.silo_ids,
            values=stacked,
        )
        write_matrix_csv(mean_matrix, outdir / "matrix_mean.csv")
        write_matrix_svg(mean_matrix, outdir / "matrix_mean.svg",
                         title="Mean accuracy across seeds")
        outputs.extend([outdir / "matrix_mean.csv", outdir / "matrix_mean.svg"])
    return ExperimentResult(config=config, per_seed=per_seed,
                            mean_matrix=mean_matrix, outputs=outputs)
