"""Reproducible experiment runner.

Every experiment is described by a JSON config with three top-level keys:
``experiment`` (the subcommand name), ``seed`` (mandatory, overridable with
--seed), and ``params``.  Unknown fields anywhere are rejected.  Outputs are
CSV files plus a manifest JSON in the output directory; reruns with the same
config and seed are byte-identical.  Exit codes: 0 success, 2 invalid
config, 3 budget exhausted (a diagnostic manifest is still written).
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import cb as cbmod
from . import discrete_lab as lab
from . import exact as ex
from . import excursions as exc
from . import offspring as off
from . import samplers as sam
from .reports import RunClock, write_csv, write_manifest
from .rng import RngStream
from .trees import (
    DegreeSet,
    Functional,
    HEIGHT,
    MAX_OUT_DEGREE,
    TOTAL_PROGENY,
    WIDTH,
    count_in_set,
)


class ConfigError(ValueError):
    pass


def _check_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {where}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing fields in {where}: {sorted(missing)}")


def _parse_functional(spec) -> Functional:
    if isinstance(spec, str):
        named = {
            "height": HEIGHT,
            "width": WIDTH,
            "maxdeg": MAX_OUT_DEGREE,
            "progeny": TOTAL_PROGENY,
            "leaves": count_in_set(DegreeSet.of(0)),
        }
        if spec not in named:
            raise ConfigError(f"unknown functional {spec!r}")
        return named[spec]
    _check_keys(spec, {"kind", "members", "complement"}, {"kind"}, "functional")
    if spec["kind"] != "count":
        raise ConfigError("structured functionals must have kind 'count'")
    ds = DegreeSet(frozenset(spec.get("members", [])), bool(spec.get("complement", False)))
    return count_in_set(ds)


def _parse_offspring(spec) -> off.OffspringDist:
    try:
        return off.OffspringDist.from_json(spec)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad offspring law: {err}") from err


def _parse_mechanism(spec) -> cbmod.BranchingMechanism:
    try:
        return cbmod.BranchingMechanism.from_json(spec)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad branching mechanism: {err}") from err


def _load_config(config_path: str, seed_override, experiment: str) -> tuple[dict, int]:
    try:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(doc, {"experiment", "seed", "params"}, {"experiment", "seed"}, "config")
    if doc["experiment"] != experiment:
        raise ConfigError(
            f"config is for experiment {doc['experiment']!r}, not {experiment!r}"
        )
    seed = seed_override if seed_override is not None else doc["seed"]
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    return params, seed


def _resolve_workers(workers) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("BL_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class _Runner:
    """Output-directory lifecycle: collect artifacts, clean up on failure."""

    def __init__(self, out: str, experiment: str, params: dict, seed: int):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.experiment = experiment
        self.params = params
        self.seed = seed
        self.outputs: list[str] = []
        self.clock = RunClock()

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.dir / name

    def finish(self, extra: dict | None = None) -> None:
        write_manifest(
            self.dir / "manifest.json",
            experiment=self.experiment,
            config=self.params,
            seed=self.seed,
            outputs=self.outputs,
            wall_seconds=self.clock.elapsed(),
            extra=extra,
        )

    def abort_budget(self, detail: str) -> None:
        for name in self.outputs:
            (self.dir / name).unlink(missing_ok=True)
        write_manifest(
            self.dir / "manifest.json",
            experiment=self.experiment,
            config=self.params,
            seed=self.seed,
            outputs=[],
            wall_seconds=self.clock.elapsed(),
            extra={"status": "budget-exhausted", "detail": detail},
        )


def _common(fn):
    fn = click.option("--config", required=True, type=click.Path())(fn)
    fn = click.option("--seed", type=int, default=None, help="overrides the config seed")(fn)
    fn = click.option("--workers", type=int, default=None, help="defaults to BL_WORKERS or all cores")(fn)
    fn = click.option("--out", required=True, type=click.Path(file_okay=False))(fn)
    return fn


@click.group()
def main():
    """Branching-tree and CB-process experiments."""


def _run_guarded(experiment, config, seed, out, body):
    try:
        params, seed_val = _load_config(config, seed, experiment)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    runner = _Runner(out, experiment, params, seed_val)
    try:
        extra = body(params, seed_val, runner)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    except (ex.EnumerationBudgetError,) as err:
        runner.abort_budget(str(err))
        click.echo(f"budget exhausted: {err}", err=True)
        sys.exit(3)
    runner.finish(extra)
    sys.exit(0)


@main.command("exact")
@_common
def exact_cmd(config, seed, workers, out):
    """Tail/point tables of a functional under an offspring law."""

    def body(params, seed_val, runner):
        _check_keys(params, {"law", "functional", "N", "k_list"}, {"law", "functional", "N"}, "params")
        p = _parse_offspring(params["law"])
        f = _parse_functional(params["functional"])
        table = ex.tail_table(p, f, int(params["N"]))
        ks = [int(k) for k in params.get("k_list", [])]
        rows = []
        for n in range(table.N + 1):
            row = {"n": n, "v_n": table.tail(n), "v_point_n": table.point_mass(n)}
            for k in ks:
                row[f"v_n_k{k}"] = table.forest_tail(k, n)
                row[f"v_point_n_k{k}"] = table.forest_point(k, n)
            rows.append(row)
        write_csv(runner.path("tail_table.csv"), rows)
        return {"law": p.describe(), "functional": f.name}

    _run_guarded("exact", config, seed, out, body)


@main.command("sample")
@_common
def sample_cmd(config, seed, workers, out):
    """Dump sampled trees, one preorder degree string per line."""

    def body(params, seed_val, runner):
        allowed = {"law", "sampler", "n", "b", "k", "functional", "conditioning",
                   "threshold", "node_cap", "max_attempts"}
        _check_keys(params, allowed, {"law", "sampler", "n"}, "params")
        p = _parse_offspring(params["law"])
        sampler = params["sampler"]
        n = int(params["n"])
        rng = RngStream(seed_val)
        node_cap = int(params.get("node_cap", sam.DEFAULT_NODE_CAP))
        header = {
            "law": p.describe(), "seed": seed_val, "sampler": sampler,
            "functional": params.get("functional"),
            "conditioning": params.get("conditioning"),
        }
        lines = [f"# {json.dumps(header, default=str)}"]
        n_overflow = 0
        exhausted = None
        if sampler == "gw":
            for i in range(n):
                t = sam.sample_gw(p, rng.child(i), node_cap)
                if isinstance(t, sam.Overflow):
                    n_overflow += 1
                else:
                    lines.append(t.to_string())
        elif sampler == "forest":
            k = int(params.get("k", 1))
            for i in range(n):
                fr = sam.sample_forest(p, k, rng.child(i), node_cap)
                if isinstance(fr, sam.Overflow):
                    n_overflow += 1
                else:
                    lines.append(" | ".join(t.to_string() for t in fr))
        elif sampler == "immortal":
            b = int(params.get("b", 2))
            counts = sam.immortal_prefix_counts(p, rng, b, n)
            for t, c in sorted(counts.items(), key=lambda kv: -kv[1]):
                lines.extend([t.to_string()] * c)
        elif sampler == "conditioned":
            if "functional" not in params or "threshold" not in params:
                raise ConfigError("conditioned sampling needs functional and threshold")
            f = _parse_functional(params["functional"])
            kind = params.get("conditioning", "tail")
            cond = ex.Tail(int(params["threshold"])) if kind == "tail" else ex.Point(int(params["threshold"]))
            budget = sam.SamplerBudget(
                max_attempts=int(params.get("max_attempts", 10**6)), node_cap=node_cap
            )
            for i in range(n):
                t = sam.sample_conditioned(p, f, cond, rng.child(i), budget)
                if isinstance(t, sam.BudgetExhausted):
                    exhausted = t
                    break
                lines.append(t.to_string())
        else:
            raise ConfigError(f"unknown sampler {sampler!r}")
        if exhausted is not None:
            raise ex.EnumerationBudgetError(
                f"conditioned sampling exhausted: {exhausted.reason}"
            )
        runner.path("samples.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return {"overflows": n_overflow}

    _run_guarded("sample", config, seed, out, body)


def _convergence_body(kind):
    def body(params, seed_val, runner):
        allowed = {"law", "functional", "b", "n_grid", "mode", "reps", "max_degree"}
        _check_keys(params, allowed, {"law", "functional", "b", "n_grid"}, "params")
        p = _parse_offspring(params["law"])
        f = _parse_functional(params["functional"])
        run = lab.run_tail_convergence if kind == "tail" else lab.run_point_convergence
        report = run(
            p, f, int(params["b"]), [int(n) for n in params["n_grid"]],
            params.get("mode", "exact"),
            rng=RngStream(seed_val), reps=int(params.get("reps", 100_000)),
            max_degree=params.get("max_degree"),
        )
        report.write(runner.path("convergence.csv"))
        return {"meta": report.meta, "law": p.describe(), "functional": f.name}

    return body


@main.command("converge-tail")
@_common
def converge_tail_cmd(config, seed, workers, out):
    """TV of the law given {A > n} to the immortal prefix law, along n."""
    _run_guarded("converge-tail", config, seed, out, _convergence_body("tail"))


@main.command("converge-point")
@_common
def converge_point_cmd(config, seed, workers, out):
    """TV of the law given {A = n} to the immortal prefix law, along n."""
    _run_guarded("converge-point", config, seed, out, _convergence_body("point"))


@main.command("ratio")
@_common
def ratio_cmd(config, seed, workers, out):
    """Forest/tree ratio limits for a monotone functional."""

    def body(params, seed_val, runner):
        allowed = {"law", "functional", "k_list", "r_list", "n_grid", "mode", "reps"}
        _check_keys(params, allowed, {"law", "functional", "k_list", "n_grid"}, "params")
        p = _parse_offspring(params["law"])
        f = _parse_functional(params["functional"])
        report = lab.run_ratio_limits(
            p, f, [int(k) for k in params["k_list"]],
            [int(r) for r in params.get("r_list", [1])],
            [int(n) for n in params["n_grid"]],
            params.get("mode", "exact"),
            rng=RngStream(seed_val), reps=int(params.get("reps", 200_000)),
        )
        report.write(runner.path("ratios.csv"))
        return {"law": p.describe(), "functional": f.name}

    _run_guarded("ratio", config, seed, out, body)


@main.command("cb-verify")
@_common
def cb_verify_cmd(config, seed, workers, out):
    """CB-process checks: lccb, scale, or sigma-tails."""

    def body(params, seed_val, runner):
        allowed = {"mechanism", "check", "x", "b", "r_grid", "functional",
                   "lam_grid", "reps", "dt", "horizon", "x_grid"}
        _check_keys(params, allowed, {"mechanism", "check"}, "params")
        m = _parse_mechanism(params["mechanism"])
        check = params["check"]
        rng = RngStream(seed_val)
        if check == "lccb":
            rows = cbmod.verify_lccb(
                m, float(params.get("x", 1.0)), float(params.get("b", 1.0)),
                [float(r) for r in params.get("r_grid", [20.0])],
                params.get("functional", "sigma"),
                [float(l) for l in params.get("lam_grid", [0.0, 1.0])],
                int(params.get("reps", 100_000)), rng,
                dt=float(params.get("dt", 0.02)),
                horizon=float(params.get("horizon", 2000.0)),
            )
            write_csv(runner.path("lccb.csv"), rows)
        elif check == "scale":
            rows = cbmod.scale_ratio_report(
                m, [float(x) for x in params.get("x_grid", [0.5, 1.0, 2.0])],
                [float(r) for r in params.get("r_grid", [10.0, 100.0])],
            )
            write_csv(runner.path("scale_ratios.csv"), rows)
        elif check == "sigma-tails":
            rows = cbmod.sigma_tail_checks(
                m, [float(r) for r in params.get("r_grid", [100.0])],
                [float(x) for x in params.get("x_grid", [1.0])],
                int(params.get("reps", 10**6)), rng,
                dt=float(params.get("dt", 0.05)),
                horizon=float(params.get("horizon", 20000.0)),
            )
            write_csv(runner.path("sigma_tails.csv"), rows)
        else:
            raise ConfigError(f"unknown cb check {check!r}")
        return {"mechanism": m.describe(), "check": check}

    _run_guarded("cb-verify", config, seed, out, body)


@main.command("continuum")
@_common
def continuum_cmd(config, seed, workers, out):
    """Height-excursion checks: expectation, bismut, theorem-l, max-identity, delta-band."""

    def body(params, seed_val, runner):
        allowed = {"check", "alpha", "beta", "b", "b0", "dt", "reps", "horizon",
                   "F", "G", "functional", "r_grid", "eps", "x", "n_exc"}
        _check_keys(params, allowed, {"check"}, "params")
        check = params["check"]
        rng = RngStream(seed_val)
        alpha = float(params.get("alpha", 0.0))
        beta = float(params.get("beta", 1.0))
        dt = float(params.get("dt", 1e-3))
        if check in ("expectation", "bismut"):
            F = tuple(params.get("F", ["one", None]))
            G = tuple(params.get("G", ["one", None]))
            if check == "expectation":
                F = G = ("one", None)
            row = exc.verify_bismut(
                alpha, beta, float(params.get("b", 1.0)), F, G, dt,
                int(params.get("reps", 100_000)), rng,
                b0=float(params.get("b0", 0.5)),
                eps=float(params.get("eps", 0.02)),
                horizon=float(params.get("horizon", 1000.0)),
            )
            write_csv(runner.path("bismut.csv"), [row])
        elif check == "theorem-l":
            rows = exc.verify_theorem_L(
                beta, params.get("functional", "sup"), float(params.get("b", 0.5)),
                [float(r) for r in params.get("r_grid", [1.0, 2.0, 4.0])],
                dt, int(params.get("reps", 10**6)), rng,
                horizon=float(params.get("horizon", 500.0)),
            )
            write_csv(runner.path("theorem_l.csv"), rows)
        elif check == "max-identity":
            rows = exc.max_identity_check(
                beta, dt, int(params.get("n_exc", 10**5)), float(params.get("x", 1.0)),
                [float(r) for r in params.get("r_grid", [0.5, 1.0, 2.0])],
                int(params.get("reps", 3000)), rng,
                horizon=float(params.get("horizon", 500.0)),
            )
            write_csv(runner.path("max_identity.csv"), rows)
        elif check == "delta-band":
            row = exc.delta_band_study(
                alpha, beta, float(params.get("b", 1.0)), float(params.get("b0", 0.5)),
                dt, int(params.get("reps", 20000)), rng,
                eps=float(params.get("eps", 0.02)),
                horizon=float(params.get("horizon", 400.0)),
            )
            write_csv(runner.path("delta_band.csv"), [row])
        else:
            raise ConfigError(f"unknown continuum check {check!r}")
        return {"check": check, "alpha": alpha, "beta": beta, "dt": dt}

    _run_guarded("continuum", config, seed, out, body)


@main.command("probe-conjecture")
@_common
def probe_cmd(config, seed, workers, out):
    """Exploratory subcritical heavy-tail probes (not acceptance-gated)."""

    def body(params, seed_val, runner):
        allowed = {"law", "functional", "b", "n_grid", "reps", "max_attempts", "node_cap"}
        _check_keys(params, allowed, {"law", "functional", "b", "n_grid"}, "params")
        p = _parse_offspring(params["law"])
        f = _parse_functional(params["functional"])
        budget = sam.SamplerBudget(
            max_attempts=int(params.get("max_attempts", 2 * 10**6)),
            node_cap=int(params.get("node_cap", 10**6)),
        )
        report = lab.probe_conjectures(
            p, f, int(params["b"]), [int(n) for n in params["n_grid"]],
            int(params.get("reps", 20000)), RngStream(seed_val), budget=budget,
        )
        report.write(runner.path("probe.csv"))
        return {"meta": report.meta, "exploratory": True}

    _run_guarded("probe-conjecture", config, seed, out, body)


@main.command("acceptance")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--criteria", default=None, help="comma-separated subset, e.g. '1,2,5'")
def acceptance_cmd(out, criteria):
    """Run the full acceptance suite with pinned seeds."""
    from . import acceptance

    subset = None
    if criteria:
        subset = [int(c) for c in criteria.split(",")]
    results = acceptance.run_all(Path(out), subset=subset)
    bad = [r for r in results if not r.passed and not r.expected_failure]
    sys.exit(1 if bad else 0)


if __name__ == "__main__":  # pragma: no cover
    main()
