#!/usr/bin/env python3
"""Run the built-in desk-scale six-silo experiment and print the matrix.

Equivalent to `fedkit experiment --seed 7 --out runs/desk`, then prints the
cross-silo accuracy table with row means.
"""

import argparse
import sys
from pathlib import Path

from fedkit.evalcli import default_config, load_config, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", type=Path, default=Path("runs/desk"))
    args = parser.parse_args()

    config = load_config(args.config) if args.config else default_config()
    config = config.with_seeds((args.seed,))
    result = run_experiment(config, args.out)
    matrix = result.per_seed[0].matrix

    width = max(len(n) for n in matrix.model_names)
    header = " ".join(f"{sid:>9}" for sid in matrix.silo_ids)
    print(f"{'model':<{width}} {header}      mean")
    for i, name in enumerate(matrix.model_names):
        cells = " ".join(f"{v:9.4f}" for v in matrix.values[i])
        print(f"{name:<{width}} {cells} {matrix.values[i].mean():9.4f}")
    print(f"\nartifacts in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
