"""Repeat the clustered pipeline many times and check the confidence guarantee.

    python3 scripts/confidence_check.py --runs 100 --out results/confidence.json
"""

import argparse
import json
from pathlib import Path

from scenplan import config as config_mod
from scenplan import validation

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "fixtures" / "confidence.json"))
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--M", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = config_mod.load_config(args.config)

    def progress(r, entry):
        if r % 10 == 0:
            print(f"run {r:3d}: violation {entry['violation']:.4f}, "
                  f"sum of cluster noncoverage {entry['noncoverage_total']:.4f}")

    rep = validation.certify(cfg, args.runs, args.M, progress=progress)
    print(f"exceed fraction {rep.exceed_fraction:.3f} (threshold {rep.threshold:.3f}), "
          f"union bound held in every run: {rep.bound_inequality_holds}, passed: {rep.passed}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")


if __name__ == "__main__":
    main()
