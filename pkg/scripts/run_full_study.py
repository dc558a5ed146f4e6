#!/usr/bin/env python3
"""Opt-in full-scale recovery study (8 scenarios x 50 replications).

This targets the full simulation-study table at its original replication
count and is far too slow for CI (hundreds of fits). Use the desk-scale
script for routine checks.
"""

import argparse
import sys
import time

import pandas as pd

from dirshift.sampler import SamplerConfig
from dirshift.simulation import run_study, scenario_grid, summarize_study
from dirshift.io import atomic_write


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="full_study_out")
    ap.add_argument("--replications", type=int, default=50)
    ap.add_argument("--chains", type=int, default=4)
    ap.add_argument("--warmup", type=int, default=1000)
    ap.add_argument("--draws", type=int, default=1000)
    ap.add_argument("--target-accept", type=float, default=0.95)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = SamplerConfig(chains=args.chains, warmup=args.warmup, draws=args.draws,
                        seed=args.seed, target_accept=args.target_accept)
    t0 = time.time()
    table = run_study(scenario_grid(), args.replications, cfg, study_seed=args.seed)
    import os
    os.makedirs(args.out, exist_ok=True)
    atomic_write(f"{args.out}/study_detail.csv", table.to_csv(index=False))
    summary = summarize_study(table)
    atomic_write(f"{args.out}/study_summary.csv", summary.to_csv(index=False))
    pd.set_option("display.width", 200)
    print(summary.to_string(index=False))
    print(f"elapsed: {time.time() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
