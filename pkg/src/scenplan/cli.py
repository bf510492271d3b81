"""Command-line front end.

Exit codes: 0 success, 2 infeasible plan, 3 validation exceeded, 4 config or
argument error. JSON results are written with sorted keys; wall-clock
timings and the timestamp live under a single ``run_info`` key so the rest
of the file is byte-identical across reruns.
"""

from __future__ import annotations

import datetime
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import clustering as cl
from . import config as config_mod
from . import prediction, sampling_bounds, validation
from .milp import write_lp
from .planner import PlanningError, PlanResult

EXIT_OK, EXIT_INFEASIBLE, EXIT_EXCEEDED, EXIT_CONFIG = 0, 2, 3, 4

_TIMING_KEYS = ("cluster_time", "overapprox_time", "build_time", "milp_time")


class CliExit(Exception):
    def __init__(self, code: int):
        self.code = code


def _dump(d) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _isolate(d: dict) -> dict:
    """Move nondeterministic fields of a result dict under ``run_info``."""
    info = {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")}
    stats = d.get("stats") or {}
    for k in _TIMING_KEYS:
        if k in stats:
            info[k] = stats.pop(k)
    d["run_info"] = info
    return d


def strip_run_info(text: str) -> dict:
    d = json.loads(text)
    d.pop("run_info", None)
    return d


def _load(path, method=None) -> config_mod.ScenarioConfig:
    cfg = config_mod.load_config(path)
    if method is not None:
        cfg = cfg.with_overrides(method=method)
    return cfg


def _out_paths(cfg, out_dir, prefix):
    d = Path(out_dir) if out_dir is not None else cfg.resolve(cfg["output"]["dir"])
    d.mkdir(parents=True, exist_ok=True)
    p = prefix or cfg["output"]["prefix"]
    return d / f"{p}.json", d / f"{p}_trajectory.csv", d / f"{p}_polytopes.csv", d / f"{p}.lp"


@click.group()
@click.version_option(version=__version__, prog_name="scenplan")
def cli():
    """Chance-constrained motion planning with clustered forecast samples."""


@cli.command()
@click.option("--eps", type=float, required=True, help="Violation level epsilon in (0, 1).")
@click.option("--beta", type=float, required=True, help="Confidence parameter beta in (0, 1).")
@click.option("--nc", type=int, required=True, help="Number of continuous decision variables.")
@click.option("--nb", type=int, default=0, show_default=True, help="Number of binary variables.")
@click.option("--rule", type=click.Choice(["closed_form", "exact"]), default="closed_form",
              show_default=True, help="Sample-count rule.")
@click.option("--json", "as_json", is_flag=True, help="Print a JSON object instead of text.")
def bound(eps, beta, nc, nb, rule, as_json):
    """Smallest sample count N for the scenario guarantee, and its confidence."""
    try:
        q = sampling_bounds.BoundQuery(sampling_bounds.RiskSpec(eps, beta), nc, nb)
        N = sampling_bounds.min_samples(q, rule=rule)
    except (ValueError, sampling_bounds.SampleBoundError) as exc:
        raise click.BadParameter(str(exc)) from exc
    # the binomial tail at N is the smallest beta this N certifies
    achieved_beta = sampling_bounds.scenario_confidence(N, eps, nc, nb)
    conf = 1.0 - achieved_beta
    if as_json:
        click.echo(_dump({"N": N, "confidence": conf, "achieved_beta": achieved_beta,
                          "epsilon": eps, "beta": beta, "n_c": nc, "n_b": nb, "rule": rule}), nl=False)
    else:
        click.echo(f"N = {N}")
        click.echo(f"confidence = {conf!r} (achieved beta {achieved_beta!r})")


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True)
@click.option("--method", type=click.Choice(["clusters", "scenario"]), default=None,
              help="Override the configured method.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: the config's output.dir).")
@click.option("--prefix", default=None, help="Output file prefix (default: output.prefix).")
@click.option("--write-lp", "lp", is_flag=True, help="Also dump the MILP in LP format.")
def plan(config_path, method, out_dir, prefix, lp):
    """Plan with a config; writes result JSON, trajectory CSV and polytope CSV."""
    cfg = _load(config_path, method)
    json_path, traj_path, poly_path, lp_path = _out_paths(cfg, out_dir, prefix)
    for p in (traj_path, poly_path):
        p.unlink(missing_ok=True)
    samples = config_mod.planning_samples(cfg)
    res = config_mod.run_plan(cfg, samples)
    if lp:
        from . import planner as pl
        model, obj = config_mod.build_model(cfg), config_mod.build_objective(cfg)
        g = cfg["geometry"]
        if cfg.method == "clusters":
            prob = pl.build_cluster_plan(model, obj, res.polytopes, g["clearance"])
        else:
            prob = pl.build_scenario_plan(model, obj, samples, g["inflation"], g["clearance"])
        write_lp(prob, lp_path, comment=f"{cfg.method} plan for {Path(config_path).name}")
    json_path.write_text(_dump(_isolate(res.to_dict())))
    if not res.provenance.get("samples_sufficient", True):
        click.echo(f"warning: {res.provenance['N']} samples, {res.provenance['required_total']} "
                   "needed for the risk guarantee", err=True)
    if not res.feasible:
        click.echo(f"status: {res.status}; diagnostics in {json_path}", err=True)
        raise CliExit(EXIT_INFEASIBLE)
    res.save_trajectory_csv(traj_path)
    if res.polytopes:
        res.save_polytope_csv(poly_path)
    click.echo(f"status: optimal, objective {res.objective!r}")
    click.echo(f"wrote {json_path}")


def _fresh(cfg, M, samples_path):
    if samples_path is not None:
        ps = prediction.load_samples(samples_path)
        if M is not None:
            if M > ps.N:
                raise click.BadParameter(f"file holds {ps.N} samples, {M} requested", param_hint="--M")
            ps = ps.subset(np.arange(M))
        return ps
    return config_mod.fresh_samples(cfg, M)


@cli.command()
@click.option("--plan", "plan_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Result JSON written by 'plan'.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True,
              help="Config whose generator draws the fresh samples.")
@click.option("--M", "M", type=int, default=None, help="Fresh sample count (default: validation.M).")
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Validate against a sample file instead of generated samples.")
def validate(plan_path, config_path, M, samples_path):
    """Empirical violation of a stored plan on fresh samples; exit 3 above epsilon."""
    if M is not None and M < 1:
        raise click.BadParameter(f"must be positive, got {M}", param_hint="--M")
    cfg = _load(config_path)
    with open(plan_path) as fh:
        res = PlanResult.from_dict(json.load(fh))
    if not res.feasible:
        raise click.BadParameter(f"plan status is {res.status}; nothing to validate", param_hint="--plan")
    fresh = _fresh(cfg, M, samples_path)
    inflation = cfg["geometry"]["inflation"]
    rep = validation.empirical_violation(res.outputs, fresh, inflation)
    out = rep.to_dict()
    out["epsilon"] = cfg.risk.epsilon
    out["within_epsilon"] = rep.violation_fraction <= cfg.risk.epsilon
    if res.method == "clusters" and res.polytopes:
        c = cfg["clustering"]
        index = cl.cluster_samples(config_mod.planning_samples(cfg), c["strategy"], c["K"], c["seed"])
        out["noncoverage"] = validation.cluster_noncoverage(res.polytopes, index, fresh, inflation).to_dict()
    click.echo(_dump(out), nl=False)
    if not out["within_epsilon"]:
        raise CliExit(EXIT_EXCEEDED)


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True)
@click.option("--runs", type=int, default=100, show_default=True, help="Independent planning runs.")
@click.option("--M", "M", type=int, default=None, help="Fresh sample count (default: validation.M).")
@click.option("--method", type=click.Choice(["clusters", "scenario"]), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the report here.")
def certify(config_path, runs, M, method, out):
    """Repeat the pipeline and check the confidence guarantee; exit 3 on failure."""
    if runs < 1:
        raise click.BadParameter(f"must be positive, got {runs}", param_hint="--runs")
    if M is not None and M < 1:
        raise click.BadParameter(f"must be positive, got {M}", param_hint="--M")
    cfg = _load(config_path, method)
    rep = validation.certify(cfg, runs, M)
    text = _dump(_isolate(rep.to_dict()))
    if out:
        Path(out).write_text(text)
    click.echo(text, nl=False)
    if not rep.passed:
        raise CliExit(EXIT_EXCEEDED)


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True)
@click.option("--N", "N", type=int, required=True, help="Number of samples.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output JSONL path.")
@click.option("--stream", type=int, default=0, show_default=True,
              help="RNG substream (0 is what 'plan' uses, 1 is the validation stream).")
def gen(config_path, N, out, stream):
    """Draw forecast samples from the config's generator into a JSONL file."""
    if N < 1:
        raise click.BadParameter(f"must be positive, got {N}", param_hint="--N")
    cfg = _load(config_path)
    spec = cfg.generator()
    if spec is None:
        raise config_mod.ConfigError("prediction.generator", "gen needs a generator")
    spec.seed = cfg["seed"]
    prediction.save_samples(out, prediction.generate(spec, N, stream=stream))
    click.echo(f"wrote {N} samples to {out}")


@cli.command(name="cluster")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True)
def cluster_cmd(config_path):
    """Cluster the planning samples and print sizes, centroids and label histograms."""
    cfg = _load(config_path)
    samples = config_mod.planning_samples(cfg)
    c = cfg["clustering"]
    index = cl.cluster_samples(samples, c["strategy"], c["K"], c["seed"])
    out = index.to_dict()
    out["N"] = samples.N
    if samples.labels is not None:
        for o, ov in enumerate(out["ovs"]):
            labs, counts = np.unique(samples.labels[:, o], return_counts=True)
            ov["label_histogram"] = {str(int(z)): int(n) for z, n in zip(labs, counts)}
    click.echo(_dump(out), nl=False)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="scenplan", standalone_mode=False)
    except CliExit as exc:
        return exc.code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except (config_mod.ConfigError, prediction.SampleFileError, cl.ClusteringError,
            PlanningError, validation.ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
