#!/usr/bin/env python3
"""Full-scale Monte Carlo sweep (all design cells, R=1000 by default).

Deliberately not part of the test suite: at the published replication count
this is hours of compute.  Each cell writes results.csv + summary.json under
--out-dir/<cell-name>/ and one combined tables.csv at the end, from which the
published tables' Average FPE / Winning Ratio / Loss-to-CSA blocks can be
assembled directly.

    python scripts/run_full_tables.py --out-dir runs/full --threads 8
    python scripts/run_full_tables.py --reps 50 --only rho_sweep --dry-run
"""

import argparse
import csv
import sys
import time
from pathlib import Path

from csaqr import SimDesign, run_study
from csaqr.simulate import study_summary_dict, write_study_csv, write_study_summary

METHODS = ["csa", "jma", "l1qr", "bag", "l2qr"]

R2_GRID = [round(0.1 * i, 1) for i in range(1, 10)]
TAU_GRID = [round(0.1 * i, 1) for i in range(1, 10)]
RHO_GRID = [round(0.1 * i, 1) for i in range(0, 10)]


def design_cells(reps):
    """(name, SimDesign) pairs for every published design cell, de-duplicated."""
    cells = {}

    def add(group, **kw):
        d = SimDesign(n_reps=reps, **kw)
        key = (d.family, d.signal, d.n, d.observed_k, d.r2, d.tau, d.rho_x)
        name = (
            f"{group}__{d.family[:4]}_{d.signal[:4]}_n{d.n}_K{d.observed_k}"
            f"_r2{d.r2}_tau{d.tau}_rho{d.rho_x}"
        )
        cells.setdefault(key, (name, d))

    for n in (50, 150):
        for r2 in R2_GRID:  # R^2 sweeps at both quantiles
            add("r2_sweep_tau05", family="misspecified", n=n, r2=r2, tau=0.5, rho_x=0.9)
            add("r2_sweep_tau01", family="misspecified", n=n, r2=r2, tau=0.1, rho_x=0.9)
        for tau in TAU_GRID:  # quantile sweep
            add("tau_sweep", family="misspecified", n=n, r2=0.5, tau=tau, rho_x=0.9)
        for rho in RHO_GRID:  # dependence sweep
            add("rho_sweep", family="misspecified", n=n, r2=0.5, tau=0.5, rho_x=rho)
    for signal in ("decreasing", "constant", "sparse"):  # correct specification
        for n, ks in ((50, (5, 15)), (150, (10, 20))):
            for k in ks:
                add(
                    "correct_spec", family="correct", signal=signal, n=n,
                    k_obs=k, r2=0.5, tau=0.5, rho_x=0.9,
                )
    return [cells[k] for k in sorted(cells)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/full_tables")
    ap.add_argument("--reps", type=int, default=1000, help="replications per cell")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--methods", default=",".join(METHODS))
    ap.add_argument("--only", default="", help="substring filter on cell names")
    ap.add_argument("--dry-run", action="store_true", help="list cells and exit")
    args = ap.parse_args(argv)

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    cells = [(n, d) for n, d in design_cells(args.reps) if args.only in n]
    print(f"{len(cells)} design cells, R={args.reps}, methods={methods}", file=sys.stderr)
    if args.dry_run:
        for name, _ in cells:
            print(name)
        return 0

    out_root = Path(args.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    combined = []
    for i, (name, design) in enumerate(cells, 1):
        t0 = time.perf_counter()
        result = run_study(
            design, methods, master_seed=args.seed, n_jobs=args.threads
        )
        wall = time.perf_counter() - t0
        cell_dir = out_root / name
        cell_dir.mkdir(parents=True, exist_ok=True)
        write_study_csv(result, cell_dir / "results.csv")
        write_study_summary(result, cell_dir / "summary.json")
        summary = study_summary_dict(result)
        for m in methods:
            combined.append(
                {
                    "cell": name,
                    "family": design.family,
                    "signal": design.signal,
                    "n": design.n,
                    "k_obs": design.observed_k,
                    "r2": design.r2,
                    "tau": design.tau,
                    "rho_x": design.rho_x,
                    "method": m,
                    "avg_fpe": summary["avg_fpe"][m],
                    "sd_fpe": summary["sd_fpe"][m],
                    "winning_ratio": summary["winning_ratio"][m],
                    "loss_to_csa": (summary["loss_to_csa"] or {}).get(m),
                }
            )
        print(f"[{i}/{len(cells)}] {name}: {wall:.0f}s", file=sys.stderr)

    with open(out_root / "tables.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(combined[0]))
        writer.writeheader()
        writer.writerows(combined)
    print(f"combined table -> {out_root / 'tables.csv'}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
