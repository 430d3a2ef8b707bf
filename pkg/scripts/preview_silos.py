#!/usr/bin/env python3
"""Export a few synthetic samples per silo as PGM files for inspection."""

import argparse
import sys
from pathlib import Path

import numpy as np

from fedkit.dataplane import default_silo_specs, export_pgm, synth_silo


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/silo_previews"))
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--per-class", type=int, default=2)
    args = parser.parse_args()

    for spec in default_silo_specs():
        dataset = synth_silo(spec, seed=args.seed)
        picks = []
        for label in np.unique(dataset.labels):
            idx = np.flatnonzero(dataset.labels == label)[: args.per_class]
            picks.extend(int(i) for i in idx)
        paths = export_pgm(dataset, args.out, indices=picks)
        print(f"{spec.silo_id}: wrote {len(paths)} previews")
    print(f"previews in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
