import json

import pytest
from click.testing import CliRunner

from scenplan import __version__
from scenplan.cli import EXIT_CONFIG, EXIT_EXCEEDED, EXIT_INFEASIBLE, cli, main, strip_run_info


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args):
    # route through main() so the exit-code mapping is what gets tested
    holder = {}

    def target():
        holder["code"] = main(args)

    result = runner.invoke(cli_wrapper(target), [])
    return holder.get("code", result.exit_code), result.output


def cli_wrapper(fn):
    import click

    @click.command()
    def cmd():
        fn()

    return cmd


@pytest.mark.parametrize("args,N", [
    (["--eps", "0.05", "--beta", "0.01", "--nc", "1", "--nb", "2"], 191),
    (["--eps", "0.025", "--beta", "0.005", "--nc", "2", "--nb", "0"], 401),
    (["--eps", "0.05", "--beta", "0.001", "--nc", "20", "--nb", "40"], 1706),
])
def test_bound(runner, args, N):
    code, out = invoke(runner, ["bound", *args])
    assert code == 0
    assert out.splitlines()[0] == f"N = {N}"
    code, out = invoke(runner, ["bound", "--json", *args])
    d = json.loads(out)
    assert d["N"] == N and d["achieved_beta"] <= 0.01 and d["confidence"] == pytest.approx(1 - d["achieved_beta"])


def test_bound_rejects_bad_eps(runner):
    code, _ = invoke(runner, ["bound", "--eps", "1.5", "--beta", "0.01", "--nc", "1"])
    assert code == EXIT_CONFIG


def test_plan_two_interval_clusters(runner, fixtures_dir, tmp_path):
    code, out = invoke(runner, ["plan", "--config", str(fixtures_dir / "two_interval_clusters.json"),
                                "--out-dir", str(tmp_path), "--prefix", "ex2", "--write-lp"])
    assert code == 0, out
    d = json.loads((tmp_path / "ex2.json").read_text())
    assert d["status"] == "optimal" and abs(d["objective"]) < 1e-9
    assert (tmp_path / "ex2_trajectory.csv").exists()
    assert (tmp_path / "ex2_polytopes.csv").exists()
    assert (tmp_path / "ex2.lp").read_text().startswith("\\ clusters plan")


def test_plan_rerun_is_byte_identical_outside_run_info(runner, fixtures_dir, tmp_path):
    args = ["plan", "--config", str(fixtures_dir / "two_interval_clusters.json"), "--out-dir"]
    invoke(runner, [*args, str(tmp_path / "a")])
    invoke(runner, [*args, str(tmp_path / "b")])
    a = (tmp_path / "a" / "two_interval_clusters.json").read_text()
    b = (tmp_path / "b" / "two_interval_clusters.json").read_text()
    assert "run_info" in json.loads(a)
    assert strip_run_info(a) == strip_run_info(b)
    for name in ("two_interval_clusters_trajectory.csv", "two_interval_clusters_polytopes.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_plan_infeasible_writes_only_json(runner, fixtures_dir, tmp_path):
    # a stale trajectory from an earlier run must not survive
    (tmp_path / "blocked_trajectory.csv").write_text("stale\n")
    code, out = invoke(runner, ["plan", "--config", str(fixtures_dir / "blocked.json"),
                                "--out-dir", str(tmp_path)])
    assert code == EXIT_INFEASIBLE
    d = json.loads((tmp_path / "blocked.json").read_text())
    assert d["status"] == "infeasible"
    assert d["diagnostics"]["blocking"] == [{"t": 1, "ov_id": 1, "cluster_id": 1}]
    assert not (tmp_path / "blocked_trajectory.csv").exists()


def test_plan_method_override_and_missing_config(runner, fixtures_dir, tmp_path):
    code, _ = invoke(runner, ["plan", "--config", str(fixtures_dir / "two_interval_clusters.json"),
                              "--method", "scenario", "--out-dir", str(tmp_path)])
    assert code == 0
    assert json.loads((tmp_path / "two_interval_clusters.json").read_text())["method"] == "scenario"
    code, _ = invoke(runner, ["plan", "--config", str(tmp_path / "nope.json")])
    assert code == EXIT_CONFIG


def test_validate_paths(runner, fixtures_dir, tmp_path):
    cfg = str(fixtures_dir / "two_interval_scenario.json")
    invoke(runner, ["plan", "--config", cfg, "--out-dir", str(tmp_path)])
    plan_path = tmp_path / "two_interval_scenario.json"
    code, out = invoke(runner, ["validate", "--plan", str(plan_path), "--config", cfg, "--M", "20000"])
    assert code == 0
    rep = json.loads(out)
    assert rep["M"] == 20000 and rep["within_epsilon"] and rep["violation_fraction"] <= 0.05

    d = json.loads(plan_path.read_text())
    d["outputs"] = [[500.0]]
    far = tmp_path / "far.json"
    far.write_text(json.dumps(d))
    code, out = invoke(runner, ["validate", "--plan", str(far), "--config", cfg, "--M", "5000"])
    assert code == 0 and json.loads(out)["violation_fraction"] == 0.0

    # 1.5 sits in the middle of one mode: about a tenth of obstacles contain it
    d["outputs"] = [[1.5]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    code, out = invoke(runner, ["validate", "--plan", str(bad), "--config", cfg, "--M", "5000"])
    assert code == EXIT_EXCEEDED
    assert json.loads(out)["violation_fraction"] == pytest.approx(0.1, abs=0.02)

    code, _ = invoke(runner, ["validate", "--plan", str(plan_path), "--config", cfg, "--M", "0"])
    assert code == EXIT_CONFIG


def test_validate_clusters_reports_noncoverage(runner, fixtures_dir, tmp_path):
    cfg = str(fixtures_dir / "two_interval_clusters.json")
    invoke(runner, ["plan", "--config", cfg, "--out-dir", str(tmp_path)])
    code, out = invoke(runner, ["validate", "--plan", str(tmp_path / "two_interval_clusters.json"),
                                "--config", cfg, "--M", "10000"])
    assert code == 0
    rep = json.loads(out)
    assert rep["violation_fraction"] <= rep["noncoverage"]["total"] + 1e-12


def test_certify_single_run(runner, fixtures_dir, tmp_path):
    out_path = tmp_path / "cert.json"
    code, out = invoke(runner, ["certify", "--config", str(fixtures_dir / "two_interval_clusters.json"),
                                "--runs", "1", "--M", "5000", "--out", str(out_path)])
    assert code == 0
    d = json.loads(out_path.read_text())
    assert d["runs"] == 1 and d["passed"] and d["bound_inequality_holds"]
    code, _ = invoke(runner, ["certify", "--config", str(fixtures_dir / "two_interval_clusters.json"), "--runs", "0"])
    assert code == EXIT_CONFIG


def test_gen_and_cluster(runner, fixtures_dir, tmp_path):
    out = tmp_path / "s.jsonl"
    code, _ = invoke(runner, ["gen", "--config", str(fixtures_dir / "intersection.json"),
                              "--N", "25", "--out", str(out)])
    assert code == 0
    assert len(out.read_text().splitlines()) >= 25
    code, text = invoke(runner, ["cluster", "--config", str(fixtures_dir / "labeled.json")])
    assert code == 0
    d = json.loads(text)
    assert d["N"] == 6
    assert d["ovs"][0]["label_histogram"] == {"1": 2, "2": 4}  # mode 3 merged into 2


def test_help_and_version(runner):
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for cmd in ("bound", "plan", "validate", "certify", "gen", "cluster"):
        assert cmd in result.output
    result = runner.invoke(cli, ["--version"])
    assert __version__ in result.output
