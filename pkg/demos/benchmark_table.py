"""Desk-scale Monte Carlo tables for the three benchmark scenarios."""
import argparse
from dataclasses import replace

from hnnest.config import load_preset
from hnnest.experiments import aggregate, format_table, run_montecarlo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", nargs="+", default=["S1", "S2"],
                    choices=["S1", "S2", "S3"])
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    for sid in args.scenarios:
        cfg = load_preset(f"tableI-{sid}")
        if args.trials:
            cfg = replace(cfg, scenario=replace(cfg.scenario, trials=args.trials))
        horizon = cfg.horizon
        if sid == "S3":
            # reduced horizon at a coarser step, as in the acceptance gate
            cfg, horizon = replace(cfg, h=1e-4), 200.0
        results = run_montecarlo(cfg, horizon=horizon, workers=args.workers)
        print(f"{sid}: {len(results)} trials, horizon {horizon:g} s")
        print(format_table(aggregate(results)))
        print()


if __name__ == "__main__":
    main()
