#!/usr/bin/env python3
"""Print the timing-model predictions for the six reference node profiles
and the straggler analysis of a short simulated session."""

import sys

from fedkit.coordinator import RoundPlan
from fedkit.dataplane import SiloSpec, table_counts
from fedkit.nncore import ArchitectureSpec, OptimizerConfig
from fedkit.simharness import MODE_INLINE, predict_round_time, run_simulation, straggler_report
from fedkit.trainer import reference_profiles

REPORTED_MIN = {"spain": 10.48, "malawi": 26.78, "egypt": 4.05,
                "uganda": 12.96, "ghana": 14.88, "algeria": 14.81}
SAMPLES = {"spain": 6549, "malawi": 240, "egypt": 480,
           "uganda": 360, "ghana": 360, "algeria": 480}


def main() -> int:
    profiles = reference_profiles()
    print(f"{'node':<9} {'samples':>7} {'steps/round':>11} {'pred min':>9} {'meas min':>9} {'err':>7}")
    for cid, profile in profiles.items():
        n = SAMPLES[cid]
        steps = profile.epochs_per_round * -(-n // profile.batch_size)
        pred = predict_round_time(profile, n) / 60.0
        measured = REPORTED_MIN[cid]
        print(f"{cid:<9} {n:>7} {steps:>11} {pred:>9.2f} {measured:>9.2f} "
              f"{abs(pred - measured) / measured:>6.1%}")

    print("\nshort simulated session (tiny silos, measured speeds):")
    specs = []
    for cid, p in profiles.items():
        thorax = 0 if cid in ("uganda", "ghana") else 10
        specs.append(SiloSpec(cid, table_counts(10, 10, 10, thorax), augmentation_factor=2,
                              train_fraction=p.train_fraction, input_size=8))
    sim = run_simulation(
        specs, list(profiles.values()),
        RoundPlan(total_rounds=3, optimizer=OptimizerConfig(learning_rate=0.01)),
        ArchitectureSpec(input_size=8, num_classes=4, stages=((1, 4),)),
        seed=7, mode=MODE_INLINE,
    )
    for row in straggler_report(sim.report):
        print(f"  {row.client_id:<9} mean {row.mean_round_time_s:8.1f}s "
              f"slowest {row.slowest_share:5.1%}  x{row.slowdown_vs_fastest:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
