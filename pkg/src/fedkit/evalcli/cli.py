"""Command-line entry points: experiment, sim, server, client, plot."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .. import __version__
from ..coordinator import export_ledger_csv, run_session, write_session_summary
from ..dataplane import ingest_directory, split as split_dataset
from ..fedwire import (
    Listener,
    client_context,
    connect,
    default_endpoint,
    generate_self_signed_cert,
    parse_endpoint,
    save_weights,
    server_context,
)
from ..nncore import build_model
from ..simharness import (
    MODE_INLINE,
    MODE_THREADS,
    export_sim_report,
    export_straggler_csv,
    run_simulation,
    straggler_report,
)
from ..trainer import client_loop, derive_client_seed
from .config import DEFAULT_CONFIG_TEXT, ExperimentConfig, load_config
from .experiment import run_experiment
from .report import read_curves_csv, read_matrix_csv, write_curves_svg, write_matrix_svg

log = logging.getLogger("fedkit.cli")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="experiment config file (defaults to the built-in desk config)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's seed list with a single seed")
    parser.add_argument("--out", type=Path, default=Path("runs/latest"),
                        help="output directory for artifacts")


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seeds((args.seed,))
    return config


def _cmd_experiment(args) -> int:
    config = _load(args)
    result = run_experiment(config, args.out, save_models=args.save_models)
    matrix = result.mean_matrix or result.per_seed[0].matrix
    print(f"experiment {config.name!r}: seeds={list(config.seeds)} out={args.out}")
    for name, mean in matrix.row_means().items():
        print(f"  {name:<18} mean cross-silo accuracy = {mean:.4f}")
    return 0


def _cmd_sim(args) -> int:
    config = _load(args)
    seed = config.seeds[0]
    sim = run_simulation(
        list(config.silos),
        list(config.profiles),
        config.plan(),
        config.arch,
        seed,
        mode=args.mode,
        aggregation_mode=config.aggregation,
        val_fraction=config.val_fraction,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    export_sim_report(sim.report, outdir)
    export_ledger_csv(sim.ledger, outdir / "ledger.csv")
    rows = straggler_report(sim.report)
    export_straggler_csv(rows, outdir / "stragglers.csv")
    save_weights(sim.final_weights, outdir / "federated.weights")
    if sim.session is not None:
        write_session_summary(sim.session, outdir / "session.json",
                              extra={"config_hash": config.config_hash, "seed": seed})
    print(f"simulated {len(config.silos)} silos x {config.rounds} rounds (seed {seed})")
    print(f"  total virtual time: {sim.report.total_virtual_time_s:.1f}s")
    for row in rows:
        print(
            f"  {row.client_id:<10} mean round {row.mean_round_time_s:8.1f}s  "
            f"slowest {row.slowest_share:5.1%}  x{row.slowdown_vs_fastest:.2f} vs fastest"
        )
    return 0


def _cmd_server(args) -> int:
    config = _load(args)
    seed = config.seeds[0]
    endpoint = parse_endpoint(args.listen) if args.listen else default_endpoint()
    ssl_ctx = None
    if args.secure:
        cert, key = args.cert, args.key
        if not cert or not key:
            cert, key = generate_self_signed_cert(Path(args.out) / "tls")
            print(f"generated ephemeral TLS cert at {cert}")
        ssl_ctx = server_context(cert, key)
    listener = Listener(endpoint.host, endpoint.port, ssl_context=ssl_ctx)
    n_clients = len(config.profiles)
    print(f"listening on {listener.endpoint} for {n_clients} clients "
          f"({'tls' if ssl_ctx else 'plain tcp'})")
    connections = [listener.accept(timeout=args.accept_timeout) for _ in range(n_clients)]
    try:
        result = run_session(
            connections,
            config.plan(),
            config.arch,
            {p.client_id: p for p in config.profiles},
            build_model(config.arch, seed),
            aggregation_mode=config.aggregation,
        )
    finally:
        for conn in connections:
            conn.close()
        listener.close()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    export_ledger_csv(result.ledger, outdir / "ledger.csv")
    write_session_summary(result, outdir / "session.json", extra={"config_hash": config.config_hash})
    save_weights(result.final_weights, outdir / "federated.weights")
    print(f"session complete: {len(result.ledger)} rounds, artifacts in {outdir}")
    return 0


def _load_profile_file(path: Path):
    """A standalone [profile] INI: client_id plus the NodeProfile fields."""
    import configparser

    from ..trainer import NodeProfile

    parser = configparser.ConfigParser()
    parser.read_string(path.read_text())
    sec = parser["profile"]
    profile = NodeProfile(
        client_id=sec.get("client_id"),
        epochs_per_round=sec.getint("epochs_per_round", 10),
        batch_size=sec.getint("batch_size", 8),
        train_fraction=sec.getfloat("train_fraction", 0.8),
        device_class=sec.get("device_class", "cpu"),
        speed_iters_per_s=sec.getfloat("speed_iters_per_s", 1.0),
    )
    profile.validate()
    return profile


def _cmd_client(args) -> int:
    config = _load(args)
    seed = config.seeds[0]
    by_id = {p.client_id: p for p in config.profiles}
    profile_path = Path(args.profile)
    if profile_path.is_file():
        profile = _load_profile_file(profile_path)
        client_id = profile.client_id
    else:
        client_id = args.profile
        if client_id not in by_id:
            print(f"error: no profile {client_id!r} in config (have {sorted(by_id)})",
                  file=sys.stderr)
            return 2
        profile = by_id[client_id]

    if args.data:
        dataset, stats = ingest_directory(args.data, config.arch.input_size)
        dataset = split_dataset(dataset, profile.train_fraction, config.val_fraction,
                                derive_client_seed(seed, f"split:{client_id}"))
        print(f"ingested {stats.ingested} images from {args.data} "
              f"(skipped other={stats.skipped_other}, unreadable={stats.skipped_unreadable})")
    else:
        silo_id = args.silo or client_id
        spec = next((s for s in config.silos if s.silo_id == silo_id), None)
        if spec is None:
            print(f"error: no silo {silo_id!r} in config", file=sys.stderr)
            return 2
        from ..simharness import build_silos

        dataset = build_silos(list(config.silos), seed, config.val_fraction)[silo_id]
        print(f"synthesized silo {silo_id!r}: {len(dataset)} samples")

    endpoint = parse_endpoint(args.connect) if args.connect else default_endpoint()
    ssl_ctx = client_context(args.cafile) if args.cafile else None
    conn = connect(endpoint, ssl_context=ssl_ctx)
    outcome = client_loop(conn, dataset, client_id, derive_client_seed(seed, client_id))
    print(f"client {client_id}: {outcome.rounds_completed} rounds, {outcome.finish_reason}")
    if args.out and outcome.last_weights is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        save_weights(outcome.last_weights, outdir / f"{client_id}.weights")
    return 0 if outcome.finish_reason.startswith("finish") else 1


def _cmd_plot(args) -> int:
    outdir = Path(args.out)
    did = []
    matrix_csv = Path(args.matrix) if args.matrix else outdir / "matrix.csv"
    curves_csv = Path(args.curves) if args.curves else outdir / "curves.csv"
    if matrix_csv.exists():
        write_matrix_svg(read_matrix_csv(matrix_csv), matrix_csv.with_suffix(".svg"))
        did.append(matrix_csv.with_suffix(".svg"))
    if curves_csv.exists():
        write_curves_svg(read_curves_csv(curves_csv), curves_csv.with_suffix(".svg"))
        did.append(curves_csv.with_suffix(".svg"))
    if not did:
        print(f"nothing to plot: no matrix.csv or curves.csv under {outdir}", file=sys.stderr)
        return 2
    for path in did:
        print(f"wrote {path}")
    return 0


def _cmd_show_config(args) -> int:
    print(DEFAULT_CONFIG_TEXT, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedkit",
        description="Federated-averaging engine and desk-scale simulation harness",
    )
    parser.add_argument("--version", action="version", version=f"fedkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="train 8 models and emit the cross-silo matrix")
    _add_common(p)
    p.add_argument("--save-models", action="store_true", help="also write every model's weights")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("sim", help="run one federated session with the virtual clock")
    _add_common(p)
    p.add_argument("--mode", choices=(MODE_THREADS, MODE_INLINE), default=MODE_THREADS)
    p.set_defaults(func=_cmd_sim)

    p = sub.add_parser("server", help="run the coordinator on a real TCP endpoint")
    _add_common(p)
    p.add_argument("--listen", default=None, help="host:port (default FEDKIT_ADDR or 127.0.0.1:7787)")
    p.add_argument("--secure", action="store_true", help="wrap connections in TLS")
    p.add_argument("--cert", default=None, help="server certificate (PEM)")
    p.add_argument("--key", default=None, help="server private key (PEM)")
    p.add_argument("--accept-timeout", type=float, default=120.0)
    p.set_defaults(func=_cmd_server)

    p = sub.add_parser("client", help="run one training client against a coordinator")
    _add_common(p)
    p.add_argument("--profile", required=True, help="client id; must match a config silo")
    p.add_argument("--silo", default=None, help="synthesize this config silo (default: same as profile)")
    p.add_argument("--data", type=Path, default=None, help="ingest a real image directory instead")
    p.add_argument("--connect", default=None, help="host:port (default FEDKIT_ADDR or 127.0.0.1:7787)")
    p.add_argument("--cafile", default=None, help="pinned CA bundle enabling TLS")
    p.set_defaults(func=_cmd_client)

    p = sub.add_parser("plot", help="regenerate SVGs from existing CSV artifacts")
    p.add_argument("--out", type=Path, default=Path("runs/latest"))
    p.add_argument("--matrix", default=None, help="explicit matrix.csv path")
    p.add_argument("--curves", default=None, help="explicit curves.csv path")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("show-config", help="print the built-in desk config")
    p.set_defaults(func=_cmd_show_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
