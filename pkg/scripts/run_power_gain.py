#!/usr/bin/env python3
"""Run the committed power-gain scenario and print the paired comparison.

Usage: python scripts/run_power_gain.py [--reps N] [--out report.json]
"""

import argparse
import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

import tehscreen as ts
from tehscreen.config import PipelineConfig, synthetic_spec_from_dict

SCENARIO = pathlib.Path(__file__).resolve().parent.parent / "scenarios" / "power_gain.json"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--reps", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    cfg = json.loads(SCENARIO.read_text())
    spec = synthetic_spec_from_dict(cfg["spec"])
    methods = []
    for m in cfg["methods"]:
        entry = dict(m)
        entry.setdefault("family", cfg["spec"]["family"])
        methods.append(PipelineConfig.from_dict(entry))

    reps = args.reps or cfg["reps"]
    study = ts.power_study(spec, methods, reps=reps, seed=cfg["seed"],
                           alpha=cfg["alpha"], threads=args.threads)
    print(f"scenario: {cfg['description']}")
    print(f"reps={reps} alpha={cfg['alpha']} seed={cfg['seed']}")
    for label, rate in study.summary["rejection_rates"].items():
        print(f"  rejection rate [{label}]: {rate:.3f}")
    for pair, stats in study.summary["paired_differences"].items():
        print(f"  paired {pair}: diff={stats['mean_difference']:+.3f} z={stats['z']:.2f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(study.summary, fh, indent=2, sort_keys=True)
        print(f"summary written to {args.out}")


if __name__ == "__main__":
    main()
