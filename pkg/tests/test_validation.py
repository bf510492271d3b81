import math

import numpy as np
import pytest

from scenplan import config as config_mod
from scenplan.clustering import cluster_samples
from scenplan.planner import ClusteringConfig, ObjectiveSpec, ObjectiveTerm, direct_output, plan
from scenplan.prediction import GeneratorSpec, OvSpec, PredictionSet, generate
from scenplan.sampling_bounds import RiskSpec
from scenplan.validation import (
    ValidationError,
    binomial_band,
    certify,
    cluster_noncoverage,
    empirical_violation,
    violation_mask,
)


def ov_spec(noise=0.2):
    ov = OvSpec((5.0, 0.0), 0.0, 10.0, 8.0, 2.5, [-2.0, 2.0], [0.5, 0.5], noise)
    return GeneratorSpec("accel-brake-ov", seed=1, T=4, ovs=[ov])


def test_far_trajectory_never_violates():
    fresh = generate(ov_spec(), 5000, stream=1)
    rep = empirical_violation(np.tile([0.0, 100.0], (4, 1)), fresh)
    assert rep.violation_fraction == 0.0 and rep.violating == 0 and rep.witness is None


def test_pinned_trajectory_always_violates():
    fresh = generate(ov_spec(noise=0.0), 200, stream=1)
    fresh = fresh.subset(np.zeros(200, dtype=int))  # identical samples
    y = fresh.pos[0, :, 0, :]
    rep = empirical_violation(y, fresh)
    assert rep.violation_fraction == 1.0 and rep.violating == rep.M == 200
    assert rep.witness == (1, 1, 1)


def test_fraction_is_count_over_m():
    fresh = generate(ov_spec(noise=1.0), 777, stream=1)
    y = fresh.pos[3, :, 0, :] + [3.9, 0.0]
    rep = empirical_violation(y, fresh)
    assert rep.violation_fraction == rep.violating / 777


def test_boundary_is_not_a_violation():
    pos = np.zeros((1, 1, 1, 2))
    fresh = PredictionSet(pos, 0.0, 2.0, 2.0)
    assert empirical_violation(np.array([[1.0, 0.0]]), fresh).violating == 0
    assert empirical_violation(np.array([[0.999, 0.0]]), fresh).violating == 1


def test_chunking_does_not_change_result():
    fresh = generate(ov_spec(noise=1.0), 1000, stream=1)
    y = fresh.pos[0, :, 0, :]
    assert np.array_equal(violation_mask(y, fresh, 0.5, chunk=7), violation_mask(y, fresh, 0.5))


def test_shape_errors():
    fresh = generate(ov_spec(), 10)
    with pytest.raises(ValidationError):
        empirical_violation(np.zeros((3, 2)), fresh)
    with pytest.raises(ValidationError):
        empirical_violation(np.zeros((4, 1)), fresh)


def test_noncoverage_zero_on_planning_samples_and_union_bound():
    spec = GeneratorSpec("uniform-mixture-1d", seed=4)
    samples = generate(spec, 300)
    obj = ObjectiveSpec([ObjectiveTerm("abs", "y", 0, 1.0, reference=1.4)])
    res = plan(direct_output(1, 1, -100, 100), obj, samples, RiskSpec(0.1, 0.2), "clusters",
               ClusteringConfig("kmeans", [2], 0))
    own = cluster_noncoverage(res.polytopes, res.cluster_index, samples)
    assert own.total == 0.0
    fresh = generate(spec, 20000, stream=1)
    cov = cluster_noncoverage(res.polytopes, res.cluster_index, fresh)
    v = empirical_violation(res, fresh)
    assert v.violation_fraction <= cov.total + 1e-12
    assert cov.to_dict()["clusters"][0]["ov_id"] == 1


def test_binomial_band():
    assert binomial_band(0.2, 100) == pytest.approx(0.2 + 3 * math.sqrt(0.0016))


def test_certify_single_run_and_scenario_echo(fixtures_dir):
    cfg = config_mod.load_config(fixtures_dir / "two_interval_clusters.json")
    rep = certify(cfg, 1, M=2000)
    assert rep.runs == 1 and len(rep.fractions) == 1 and rep.extra["M"] == 2000
    assert rep.bound_inequality_holds is True
    scen = certify(config_mod.load_config(fixtures_dir / "two_interval_scenario.json"), 1, M=500)
    assert scen.extra["scenario_bound_N"] == 191 and scen.bound_inequality_holds is None
    with pytest.raises(ValidationError):
        certify(cfg, 0)


def test_certify_deterministic_generator_never_violates(fixtures_dir):
    cfg = config_mod.load_config(fixtures_dir / "two_interval_clusters.json").with_overrides(
        prediction={"generator": {"kind": "uniform-mixture-1d", "T": 1, "intervals": [[1.5, 1.5000001]],
                                  "weights": [1.0], "half_width": 0.1}, "N": 20},
        clustering={"K": [1]})
    rep = certify(cfg, 3, M=1000)
    assert rep.fractions == [0.0, 0.0, 0.0] and rep.passed


def test_certify_counts_infeasible_runs(fixtures_dir):
    cfg = config_mod.load_config(fixtures_dir / "blocked.json")
    rep = certify(cfg, 2, M=100)
    assert rep.infeasible_runs == 2 and rep.fractions == [] and not rep.passed
