"""Sample-count bounds for scenario programs and risk allocation across clusters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "RiskSpec",
    "BoundQuery",
    "AllocationEntry",
    "Allocation",
    "scenario_confidence",
    "log_scenario_confidence",
    "min_samples",
    "closed_form_samples",
    "allocate_uniform",
    "allocate_weighted",
    "inverse_probability_weights",
]

MAX_SAMPLES = 10**9

# Rounded e/(e-1); the published sample counts are reproduced with this constant.
CLOSED_FORM_FACTOR = 1.59


class SampleBoundError(ValueError):
    pass


@dataclass(frozen=True)
class RiskSpec:
    epsilon: float
    beta: float

    def __post_init__(self):
        _check_probability("epsilon", self.epsilon)
        _check_probability("beta", self.beta)


@dataclass(frozen=True)
class BoundQuery:
    risk: RiskSpec
    n_c: int
    n_b: int = 0

    def __post_init__(self):
        if int(self.n_c) != self.n_c or self.n_c < 1:
            raise SampleBoundError(f"n_c must be a positive integer, got {self.n_c}")
        if int(self.n_b) != self.n_b or self.n_b < 0:
            raise SampleBoundError(f"n_b must be a nonnegative integer, got {self.n_b}")


@dataclass(frozen=True)
class AllocationEntry:
    ov_id: int
    cluster_id: int
    epsilon: float
    beta: float
    n_samples: int


@dataclass
class Allocation:
    risk: RiskSpec
    n_c: int
    entries: list[AllocationEntry] = field(default_factory=list)

    def total_epsilon(self) -> float:
        return math.fsum(e.epsilon for e in self.entries)

    def total_beta(self) -> float:
        return math.fsum(e.beta for e in self.entries)

    def required_total(self) -> int:
        """Smallest total sample count that covers every cluster's requirement."""
        return max(e.n_samples for e in self.entries)

    def summed_total(self) -> int:
        return sum(e.n_samples for e in self.entries)

    def entry(self, ov_id: int, cluster_id: int) -> AllocationEntry:
        for e in self.entries:
            if e.ov_id == ov_id and e.cluster_id == cluster_id:
                return e
        raise KeyError((ov_id, cluster_id))

    def to_dict(self) -> dict:
        return {
            "epsilon": self.risk.epsilon,
            "beta": self.risk.beta,
            "n_c": self.n_c,
            "entries": [
                {
                    "ov_id": e.ov_id,
                    "cluster_id": e.cluster_id,
                    "epsilon": e.epsilon,
                    "beta": e.beta,
                    "n_samples": e.n_samples,
                }
                for e in self.entries
            ],
        }


def _check_probability(name, value):
    if not (0.0 < value < 1.0) or not math.isfinite(value):
        raise SampleBoundError(f"{name} must lie in (0, 1), got {value}")


def log_scenario_confidence(N: int, epsilon: float, n_c: int, n_b: int = 0) -> float:
    """Natural log of ``2**n_b * P(Binomial(N, epsilon) <= n_c - 1)``."""
    _check_probability("epsilon", epsilon)
    if n_c < 1 or n_b < 0:
        raise SampleBoundError(f"need n_c >= 1 and n_b >= 0, got n_c={n_c}, n_b={n_b}")
    if N < n_c:
        raise SampleBoundError(f"N={N} is smaller than n_c={n_c}")
    i = np.arange(n_c, dtype=float)
    log_terms = (
        gammaln(N + 1.0)
        - gammaln(i + 1.0)
        - gammaln(N - i + 1.0)
        + i * math.log(epsilon)
        + (N - i) * math.log1p(-epsilon)
    )
    return float(logsumexp(log_terms) + n_b * math.log(2.0))


def scenario_confidence(N: int, epsilon: float, n_c: int, n_b: int = 0) -> float:
    """Left-hand side of the scenario sample condition, evaluated in log space.

    The returned value is ``2**n_b * sum_{i<n_c} C(N, i) eps**i (1-eps)**(N-i)``.
    A sample count ``N`` certifies confidence ``1 - beta`` when this is ``<= beta``.
    """
    return max(0.0, math.exp(log_scenario_confidence(N, epsilon, n_c, n_b)))


def closed_form_samples(epsilon: float, beta: float, n_c: int, n_b: int = 0,
                        factor: float = CLOSED_FORM_FACTOR) -> int:
    """Explicit sufficient count ``ceil(factor/eps * (n_c - 1 + ln(1/beta) + n_b ln 2))``.

    Any ``factor >= e/(e-1)`` yields a count satisfying the binomial condition.
    """
    if factor < math.e / (math.e - 1.0):
        raise SampleBoundError(f"factor must be at least e/(e-1), got {factor}")
    value = factor / epsilon * (n_c - 1 + math.log(1.0 / beta) + n_b * math.log(2.0))
    return max(int(math.ceil(value - 1e-9)), n_c)


def _log_beta(beta):
    return math.log(beta)


def _exact_search(epsilon, beta, n_c, n_b):
    log_beta = _log_beta(beta)

    def ok(N):
        return log_scenario_confidence(N, epsilon, n_c, n_b) <= log_beta

    lo = max(n_c, 1)
    if ok(lo):
        return lo
    hi = lo
    while not ok(hi):
        lo = hi
        hi *= 2
        if hi > MAX_SAMPLES:
            if ok(MAX_SAMPLES):
                hi = MAX_SAMPLES
                break
            raise SampleBoundError(
                f"sample count exceeds {MAX_SAMPLES} for eps={epsilon}, beta={beta}, "
                f"n_c={n_c}, n_b={n_b}"
            )
    # invariant: not ok(lo), ok(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    assert not ok(hi - 1) and ok(hi), "monotone bracketing violated"
    return hi


def min_samples(query: BoundQuery, rule: str = "closed_form") -> int:
    """Number of samples needed for the scenario guarantee.

    ``rule="exact"`` returns the smallest ``N`` with
    ``scenario_confidence(N, ...) <= beta`` (doubling, then bisection).
    ``rule="closed_form"`` returns the explicit sufficient count; it is never
    below the exact value and is verified against the binomial condition.
    """
    eps, beta = query.risk.epsilon, query.risk.beta
    if rule == "exact":
        return _exact_search(eps, beta, query.n_c, query.n_b)
    if rule != "closed_form":
        raise ValueError(f"unknown rule {rule!r}")
    N = closed_form_samples(eps, beta, query.n_c, query.n_b)
    if N > MAX_SAMPLES:
        raise SampleBoundError(f"sample count {N} exceeds {MAX_SAMPLES}")
    if log_scenario_confidence(N, eps, query.n_c, query.n_b) > _log_beta(beta):
        # cannot happen for factor >= e/(e-1); fall back rather than return an invalid N
        N = _exact_search(eps, beta, query.n_c, query.n_b)
    return N


def allocate_weighted(risk: RiskSpec, weights, L_C: int, T: int,
                      rule: str = "closed_form") -> Allocation:
    """Split ``(epsilon, beta)`` over clusters in proportion to ``weights``.

    ``weights[o][k]`` is the weight of cluster ``k`` of OV ``o``; pass
    ``1/p(cluster)`` to give rare clusters a larger share of the risk.
    """
    flat = [(o, k, float(w)) for o, row in enumerate(weights) for k, w in enumerate(row)]
    if not flat:
        raise SampleBoundError("at least one cluster is required")
    for o, k, w in flat:
        if not (w > 0.0) or not math.isfinite(w):
            raise SampleBoundError(f"weight for ov {o}, cluster {k} must be positive, got {w}")
    total = math.fsum(w for _, _, w in flat)
    n_c = L_C * T
    shares = [w / total for _, _, w in flat]
    eps_parts = _exact_split(risk.epsilon, shares)
    beta_parts = _exact_split(risk.beta, shares)
    cache: dict[tuple[float, float], int] = {}
    entries = []
    for (o, k, _), e, b in zip(flat, eps_parts, beta_parts):
        if (e, b) not in cache:
            cache[(e, b)] = min_samples(BoundQuery(RiskSpec(e, b), n_c, 0), rule=rule)
        entries.append(AllocationEntry(o + 1, k + 1, e, b, cache[(e, b)]))
    return Allocation(risk=risk, n_c=n_c, entries=entries)


def allocate_uniform(risk: RiskSpec, cluster_counts, L_C: int, T: int,
                     rule: str = "closed_form") -> Allocation:
    """Give every cluster ``epsilon / sum(K_o)`` and ``beta / sum(K_o)``."""
    counts = [int(k) for k in cluster_counts]
    if any(k < 1 for k in counts):
        raise SampleBoundError(f"every OV needs at least one cluster, got {counts}")
    return allocate_weighted(risk, [[1.0] * k for k in counts], L_C, T, rule=rule)


def inverse_probability_weights(mode_probs) -> list[list[float]]:
    """Weights ``1/p`` per (OV, cluster) from per-OV cluster probabilities."""
    return [[1.0 / float(p) for p in row] for row in mode_probs]


def _exact_split(total, shares):
    # last share absorbs rounding so the parts sum to ``total`` to machine precision
    parts = [total * s for s in shares]
    parts[-1] = total - math.fsum(parts[:-1])
    return parts
