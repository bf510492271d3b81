"""Compare the clusters and scenario methods on the lane-change fixture.

Prints one row per method (N, objective, MILP time, empirical violation) and
writes the rows to a CSV.

    python3 scripts/lane_change_table.py --seeds 1 2 3 --out results/lane_change.csv
"""

import argparse
import csv
from pathlib import Path

from scenplan import config as config_mod
from scenplan import validation

ROOT = Path(__file__).resolve().parent.parent
FIELDS = ["seed", "method", "N", "objective", "milp_time", "violation", "M"]


def rows_for_seed(cfg, seed, M):
    cfg = cfg.with_overrides(seed=seed)
    fresh = config_mod.fresh_samples(cfg, M)
    infl = cfg["geometry"]["inflation"]
    out = []
    for method in ("clusters", "scenario"):
        res = config_mod.run_plan(cfg.with_overrides(method=method))
        v = validation.empirical_violation(res.outputs, fresh, infl).violation_fraction if res.feasible else None
        out.append({"seed": seed, "method": method, "N": res.provenance["N"], "objective": res.objective,
                    "milp_time": res.stats["milp_time"], "violation": v, "M": M})
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "fixtures" / "lane_change.json"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--M", type=int, default=100_000, help="fresh validation samples")
    ap.add_argument("--out", default=None, help="CSV path")
    args = ap.parse_args()

    cfg = config_mod.load_config(args.config)
    rows = []
    print(f"{'seed':>4} {'method':>9} {'N':>6} {'objective':>10} {'milp s':>7} {'violation':>9}")
    for seed in args.seeds:
        for r in rows_for_seed(cfg, seed, args.M):
            rows.append(r)
            print(f"{r['seed']:>4} {r['method']:>9} {r['N']:>6} {r['objective']:>10.4f} "
                  f"{r['milp_time']:>7.2f} {r['violation']:>9.5f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, FIELDS)
            w.writeheader()
            w.writerows(rows)
    if len(args.seeds) > 1:
        pairs = [rows[i:i + 2] for i in range(0, len(rows), 2)]
        held = sum(c["violation"] >= s["violation"] for c, s in pairs)
        print(f"clusters violation >= scenario violation in {held}/{len(pairs)} seeds")


if __name__ == "__main__":
    main()
