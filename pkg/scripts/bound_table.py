"""Tabulate sample counts from the closed-form rule against the exact binomial minimum."""

import argparse

from scenplan.sampling_bounds import BoundQuery, RiskSpec, min_samples, scenario_confidence

CASES = [(0.05, 0.01, 1, 2), (0.025, 0.005, 2, 0), (0.025, 5e-4, 40, 0), (0.05, 1e-3, 20, 40)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.parse_args()
    print(f"{'eps':>6} {'beta':>7} {'n_c':>4} {'n_b':>4} {'closed':>7} {'exact':>6} {'tail at closed':>15}")
    for eps, beta, nc, nb in CASES:
        q = BoundQuery(RiskSpec(eps, beta), nc, nb)
        a, b = min_samples(q), min_samples(q, rule="exact")
        print(f"{eps:>6} {beta:>7} {nc:>4} {nb:>4} {a:>7} {b:>6} {scenario_confidence(a, eps, nc, nb):>15.3e}")


if __name__ == "__main__":
    main()
