import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenplan import config as config_mod
from scenplan.clustering import cluster_samples
from scenplan.geometry import Polytope, interval_polytope
from scenplan.planner import (
    BIG_M_MARGIN,
    ClusteringConfig,
    GeometryConfig,
    LtvModel,
    ObjectiveSpec,
    ObjectiveTerm,
    PlanningError,
    PlanResult,
    build_cluster_plan,
    build_scenario_plan,
    cluster_polytopes,
    direct_output,
    double_integrator,
    exterior_violations,
    plan,
)
from scenplan.prediction import GeneratorSpec, OvSpec, generate
from scenplan.sampling_bounds import RiskSpec
from scenplan.milp import solve_milp

ABS_Y = ObjectiveSpec([ObjectiveTerm("abs", "y", 0, 1.0)])
RISK = RiskSpec(0.05, 0.01)


def lane_model(T=10):
    return double_integrator(0.5, 15, 3, [0, 3.5, 10, 0], T, position_lo=[-1e3, -1.75],
                             position_hi=[1e3, 5.25])


def lane_objective(T=10):
    return ObjectiveSpec([ObjectiveTerm("linear", "y", 0, -0.1, T), ObjectiveTerm("abs", "y", 1, 5.0, T)])


def lane_samples(N, T=10, seed=1, stream=0):
    ov = OvSpec((5.0, 0.0), 0.0, 10.0, 8.0, 2.5, [-2.0, 2.0], [0.5, 0.5], 0.2)
    return generate(GeneratorSpec("accel-brake-ov", seed=seed, T=T, dt=0.5, ovs=[ov]), N, stream=stream)


def strictly_inside_any(outputs, samples, inflation):
    for t in range(1, samples.T + 1):
        for o in range(samples.O):
            normals, offsets = samples.obstacle_halfspaces(t, o, inflation)
            if np.any(np.all(normals @ outputs[t - 1] < offsets, axis=1)):
                return True
    return False


def test_double_integrator_coefficients():
    m = double_integrator(0.5, 10, 2, [0, 0, 0, 0], 3)
    assert m.B[0][0, 0] == pytest.approx(0.125) and m.B[0][2, 0] == pytest.approx(0.5)
    assert m.A[0][0, 2] == pytest.approx(0.5)
    _, y = m.rollout(np.zeros((3, 2)))
    assert np.all(y == 0)
    m = double_integrator(1.0, 10, 2, [0, 0, 0, 0], 3)
    _, y = m.rollout(np.tile([1.0, 0.0], (3, 1)))
    assert np.allclose(y[:, 0], [0.5, 2.0, 4.5])
    with pytest.raises(PlanningError):
        double_integrator(0.0, 1, 1, [0, 0, 0, 0], 3)


@given(st.integers(1, 8), st.integers(0, 2**31))
def test_condensed_matches_rollout(T, seed):
    rng = np.random.default_rng(seed)
    nx, nu, ny = 3, 2, 2
    m = LtvModel([rng.normal(size=(nx, nx)) * 0.5 for _ in range(T)],
                 [rng.normal(size=(nx, nu)) for _ in range(T)],
                 [rng.normal(size=(ny, nx)) for _ in range(T)], rng.normal(size=nx))
    u = rng.normal(size=(T, nu))
    Sx, sx, Sy, sy = m.condensed()
    xs, ys = m.rollout(u)
    assert np.allclose(Sx @ u.ravel() + sx, xs.ravel(), atol=1e-9)
    assert np.allclose(Sy @ u.ravel() + sy, ys.ravel(), atol=1e-9)


def test_model_checks():
    with pytest.raises(PlanningError):
        LtvModel([np.eye(2)], [np.ones((3, 1))], [np.eye(2)], [0, 0])
    with pytest.raises(PlanningError):
        LtvModel([np.eye(2)], [np.ones((2, 1))], [np.eye(2)], [0, 0, 0])
    with pytest.raises(PlanningError):
        ObjectiveTerm("abs", "y", 0, -1.0)
    with pytest.raises(PlanningError):
        ObjectiveTerm("square", "y", 0, 1.0)
    free = LtvModel([np.eye(1)], [np.eye(1)], [np.eye(1)], [0.0])
    with pytest.raises(PlanningError, match="unbounded"):
        build_cluster_plan(free, ABS_Y, {(1, 0, 0): interval_polytope(0, 1)})
    with pytest.raises(PlanningError, match="dimension"):
        build_cluster_plan(lane_model(), ABS_Y, {(1, 0, 0): interval_polytope(0, 1)})


def test_cluster_plan_counts():
    samples = lane_samples(200)
    index = cluster_samples(samples, "kmeans", [2], seed=0)
    polys = cluster_polytopes(samples, index, 4, 1.0)
    prob = build_cluster_plan(lane_model(), lane_objective(), polys)
    assert prob.n_binaries == 80
    assert prob.n_bigm_rows == 80 and prob.n_cover_rows == 20


def test_scenario_plan_counts():
    samples = lane_samples(37)
    prob = build_scenario_plan(lane_model(), lane_objective(), samples, 1.0)
    assert prob.n_binaries == 4 * 10 * 1
    assert prob.n_bigm_rows == 4 * 10 * 1 * 37 and prob.n_cover_rows == 10


def test_no_obstacles_is_pure_lp():
    m = lane_model()
    prob = build_cluster_plan(m, lane_objective(), {})
    assert prob.n_binaries == 0
    sol = solve_milp(prob)
    u = sol.x[:prob.n_inputs].reshape(10, 2)
    _, y = m.rollout(u)
    # full forward acceleration is capped by the speed bound; the lateral target is reached
    assert y[-1, 1] == pytest.approx(0.0, abs=1e-7)
    v = 10.0
    x = 0.0
    for _ in range(10):
        a = min(3.0, (15.0 - v) / 0.5)
        x += 0.5 * v + 0.125 * a
        v += 0.5 * a
    assert y[-1, 0] == pytest.approx(x, abs=1e-6)


def test_two_interval_clusters_in_one_dimension():
    c = 1.95
    polys = {(1, 0, 0): Polytope([[1.0], [-1.0]], [-0.9, c + 0.1]),
             (1, 0, 1): Polytope([[1.0], [-1.0]], [c + 0.1, -0.9])}
    prob = build_cluster_plan(direct_output(1, 1, -100, 100), ABS_Y, polys)
    sol = solve_milp(prob)
    assert sol.objective + prob.objective_constant == pytest.approx(0.0, abs=1e-9)


def test_two_interval_scenario_general_optimum():
    spec = GeneratorSpec("uniform-mixture-1d", seed=1)
    samples = generate(spec, 191)
    res = plan(direct_output(1, 1, -100, 100), ABS_Y, samples, RISK, "scenario")
    x = samples.pos[:, 0, 0, 0]
    assert res.objective == pytest.approx(min(x.max(), -x.min()) + 0.1, abs=1e-6)
    assert res.provenance["required_total"] == 191 and res.provenance["samples_sufficient"]


def test_single_sample_scenario_equals_single_cluster():
    samples = lane_samples(1, T=4)
    m, obj = lane_model(4), lane_objective(4)
    index = cluster_samples(samples, "kmeans", [1])
    polys = cluster_polytopes(samples, index, 4, 1.0)
    a = solve_milp(build_cluster_plan(m, obj, polys))
    b = solve_milp(build_scenario_plan(m, obj, samples, 1.0))
    assert a.objective == pytest.approx(b.objective, abs=1e-7)


def test_big_m_rows_are_slack_when_released():
    samples = lane_samples(50)
    m = lane_model()
    prob = build_scenario_plan(m, lane_objective(), samples, 1.0)
    A = prob.base.A.tocsr()
    bigm_rows = np.concatenate([rows[:-1] for _, rows, _ in prob.groups])
    sub = A[bigm_rows][:, :prob.n_inputs].toarray()
    rhs = prob.base.rhs[bigm_rows]
    M = -np.asarray(A[bigm_rows][:, prob.n_inputs + prob.n_aux:].sum(axis=1)).ravel()
    assert np.all(M >= BIG_M_MARGIN)
    # with every binary at 0 each row must hold for any input whose outputs respect the bounds
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(2000):
        u = rng.uniform(-3, 3, size=(10, 2))
        xs, ys = m.rollout(u)
        if np.any(ys < m.y_lo - 1e-9) or np.any(ys > m.y_hi + 1e-9):
            continue
        checked += 1
        assert np.all(sub @ u.ravel() >= rhs - 1e-9)
    assert checked > 100


def test_dynamics_and_exteriors_on_plans():
    samples = lane_samples(300)
    model, obj = lane_model(), lane_objective()
    geo = GeometryConfig(4, 1.0, 0.05)
    res = plan(model, obj, samples, RiskSpec(0.05, 1e-3), "clusters", ClusteringConfig("kmeans", [2], 0), geo)
    assert res.feasible
    _, y = model.rollout(res.inputs)
    assert np.allclose(y, res.outputs, atol=1e-7)
    assert exterior_violations(res.outputs, res.polytopes) == []
    assert not strictly_inside_any(res.outputs, samples, 1.0)
    assert not res.provenance["samples_sufficient"]

    scen = plan(model, obj, samples, RiskSpec(0.05, 1e-3), "scenario", geometry_cfg=geo)
    assert scen.feasible and not strictly_inside_any(scen.outputs, samples, 1.0)
    # passing between the modes makes more progress than staying behind both
    assert res.outputs[-1, 0] > scen.outputs[-1, 0] > 0
    assert res.objective < scen.objective


def test_intersection_halts(fixtures_dir):
    cfg = config_mod.load_config(fixtures_dir / "intersection.json")
    res = config_mod.run_plan(cfg)
    assert res.feasible
    assert np.abs(res.states[-1, 2:]).max() <= 1e-6
    assert res.outputs[-1, 0] < 20.0 - 1.0


def test_blocked_reports_diagnostics(fixtures_dir):
    cfg = config_mod.load_config(fixtures_dir / "blocked.json")
    res = config_mod.run_plan(cfg)
    assert res.status == "infeasible" and res.outputs is None and res.inputs is None
    assert res.diagnostics["blocking"] == [{"t": 1, "ov_id": 1, "cluster_id": 1}]
    with pytest.raises(PlanningError):
        res.save_trajectory_csv("never-written.csv")


def test_result_serialization(tmp_path):
    samples = generate(GeneratorSpec("uniform-mixture-1d", seed=2), 100)
    res = plan(direct_output(1, 1, -100, 100), ABS_Y, samples, RISK, "clusters",
               ClusteringConfig("kmeans", [2], 0))
    res.save_json(tmp_path / "r.json")
    back = PlanResult.from_dict(json.loads((tmp_path / "r.json").read_text()))
    assert back.objective == res.objective and np.array_equal(back.outputs, res.outputs)
    assert set(back.polytopes) == set(res.polytopes)
    for k in res.polytopes:
        assert np.array_equal(back.polytopes[k].offsets, res.polytopes[k].offsets)
    res.save_polytope_csv(tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["t", "ov_id", "cluster_id", "row", "normal_x", "normal_y", "offset"]
    assert len(rows) == 1 + 2 * 2


def test_trajectory_csv_columns(tmp_path):
    samples = lane_samples(50)
    res = plan(lane_model(), lane_objective(), samples, RiskSpec(0.05, 1e-3), "clusters",
               ClusteringConfig("kmeans", [2], 0), GeometryConfig(4, 1.0, 0.05))
    res.save_trajectory_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "x", "y", "vx", "vy", "ux", "uy"]
    assert len(rows) == 11
    assert float(rows[-1][1]) == res.outputs[-1, 0]


def test_weighted_allocation_needs_labels():
    from scenplan.planner import AllocationConfig
    samples = lane_samples(50)
    with pytest.raises(PlanningError):
        plan(lane_model(), lane_objective(), samples, RiskSpec(0.05, 1e-3), "clusters",
             ClusteringConfig("kmeans", [2], 0), allocation=AllocationConfig("weighted"))
    res = plan(lane_model(), lane_objective(), samples, RiskSpec(0.05, 1e-3), "clusters",
               ClusteringConfig("labels"), GeometryConfig(4, 1.0, 0.05), AllocationConfig("weighted"))
    entries = res.provenance["allocation"]["entries"]
    assert sum(e["epsilon"] for e in entries) == pytest.approx(0.05, abs=1e-12)
