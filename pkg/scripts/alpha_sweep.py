"""Accuracy and wrap statistics across alpha values, several seeds each.

Writes one metrics CSV per (alpha, seed) plus summary.csv with the median
final accuracy, mean fitted sigma/t ratio and mean observed wrap fraction.

    python scripts/alpha_sweep.py --out runs/sweep --alphas 0.5,0.1,0.05,0.01,0.001,1e-6
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from autosecagg import harness


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/alpha_sweep")
    ap.add_argument("--alphas", default="0.5,0.1,0.05,0.01,0.001,1e-6")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--rounds", type=int, default=200)
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    out = Path(args.out)
    base = dict(harness.parse_override(o) for o in args.override)
    keys = ["clear"] + [float(a) for a in args.alphas.split(",")]
    rows = []
    for key in keys:
        finals, ratios, wraps = [], [], []
        for seed in range(args.seeds):
            extra = {"aggregator": "clear"} if key == "clear" else {"alpha": key}
            cfg = harness.config_from_mapping(
                {**base, **extra, "seed": seed, "rounds": args.rounds, "paired": True,
                 "name": f"{key}_seed{seed}"}
            )
            metrics = harness.read_metrics(harness.run_experiment(cfg, out))
            finals.append(metrics[-1]["eval_accuracy"])
            ratios += [m["sigma_over_t"] for m in metrics if m["sigma_over_t"] is not None]
            wraps += [m["wrap_fraction_actual"] for m in metrics if m["wrap_fraction_actual"] is not None]
        row = {
            "setting": key,
            "median_final_accuracy": float(np.median(finals)),
            "mean_sigma_over_t": float(np.mean(ratios)) if ratios else "",
            "mean_wrap_fraction": float(np.mean(wraps)) if wraps else "",
        }
        rows.append(row)
        print(row)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
