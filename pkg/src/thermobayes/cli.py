"""Command-line entry point: ``thermobayes {thermo,gpi,select,oracle-check}``.

Every output starts with ``#`` comment lines carrying the tool version and the
full run configuration, so identical commands give byte-identical files.
Exit status: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click
import numpy as np

from . import __version__, gpi, oracles, selection, zoo
from .core import (
    CSV_COLUMNS,
    InvalidInputError,
    ThermoError,
    ThermoReport,
    disorder_average,
)

# --------------------------------------------------------------------------
# Parsing helpers
# --------------------------------------------------------------------------


def parse_sizes(text: str, integer: bool = True) -> list:
    """``"2..200"`` (inclusive) or ``"5,20,100"``; must be strictly increasing."""
    text = text.strip()
    if ".." in text:
        a, _, b = text.partition("..")
        try:
            lo, hi = int(a), int(b)
        except ValueError:
            raise InvalidInputError(f"range bounds must be integers: {text}") from None
        values = list(range(lo, hi + 1))
    else:
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise InvalidInputError(f"bad sample-size list: {text}") from None
        if integer:
            if any(v != int(v) for v in values):
                raise InvalidInputError("sample sizes must be integers here")
            values = [int(v) for v in values]
    if not values:
        raise InvalidInputError("sample-size list is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidInputError("sample sizes must be strictly increasing")
    return values


def parse_grid(text: str):
    """``"m=1..200"`` -> ("m", array of integers)."""
    name, eq, rng = text.partition("=")
    if not eq:
        raise InvalidInputError("grid must look like name=a..b")
    return name.strip(), np.array(parse_sizes(rng), dtype=float)


def job_count(flag):
    cap = os.environ.get("THERMO_JOBS")
    jobs = flag if flag is not None else (int(cap) if cap else 1)
    if cap:
        jobs = min(jobs, int(cap))
    return max(1, int(jobs))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def emit(rows, columns, config, fmt, out, extra_comments=()):
    header = {"tool": "thermobayes", "version": __version__, "config": config}
    if fmt == "json":
        text = json.dumps({"header": header, "comments": list(extra_comments),
                           "rows": [{c: _json_safe(r[c]) for c in columns} for r in rows]},
                          sort_keys=True, indent=1) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"# thermobayes {__version__}\n")
        buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        for c in extra_comments:
            buf.write(f"# {c}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
        text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _json_safe(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _parse_model(spec):
    try:
        return zoo.parse_model_id(spec)
    except InvalidInputError as exc:
        raise click.UsageError(str(exc)) from None


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


# --------------------------------------------------------------------------
# Thermodynamics
# --------------------------------------------------------------------------

def _thermo_one(args):
    """One sample size (top level so worker processes can import it)."""
    model_spec, N, replicates, seed, method = args
    model, theta0 = zoo.parse_model_id(model_spec)
    kind = model.params["kind"]
    label = " ".join(repr(float(v)) for v in np.atleast_1d(theta0)) if theta0 is not None else "prior"
    if method == "statistic" or (method == "auto" and kind in ("poisson", "normal-discrete")):
        th = zoo.statistic_thermo(model, theta0, N)
        return ThermoReport(N, th.Fbar, th.Ubar, th.Cbar, th.Sbar, 0.0, 0.0, 0.0, 0.0, 0, seed,
                            model.name, label, "statistic")
    prior = zoo.default_prior(model, N)
    t0 = theta0 if theta0 is not None else "prior"
    rep = disorder_average(model, prior, t0, int(N), replicates, seed)
    rep.theta0 = label
    return rep


def _run_parallel(fn, tasks, jobs):
    if jobs == 1 or len(tasks) == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


@click.group()
@click.version_option(__version__, prog_name="thermobayes")
def main():
    """Thermodynamic potentials of Bayesian inference."""


@main.command()
@click.option("--model", "model_spec", required=True, help="registry id, e.g. normal-conj:K=1")
@click.option("--N", "sizes", default=None, help="a..b or comma list (Poisson: defaults to t/dt)")
@click.option("--replicates", default=1000, show_default=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--method", type=click.Choice(["auto", "mc", "statistic"]), default="auto")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--jobs", type=int, default=None, help="worker processes (capped by THERMO_JOBS)")
def thermo(model_spec, sizes, replicates, seed, method, fmt, out, jobs):
    """Disorder-averaged F, U, C, S over a list of sample sizes."""
    model, theta0 = _parse_model(model_spec)
    kind = model.params["kind"]
    try:
        if sizes is None:
            if kind != "poisson":
                raise click.UsageError("--N is required for this model")
            Ns = [model.params["t"] / model.params["dt"]]
        else:
            Ns = parse_sizes(sizes, integer=kind not in ("poisson", "normal-discrete"))
    except InvalidInputError as exc:
        raise click.UsageError(str(exc)) from None
    if kind in ("poisson", "normal-discrete") and theta0 is None:
        raise click.UsageError("this model needs its true parameter (e.g. m0=6 or mu0=0)")
    if theta0 is None and model.params.get("prior_family") != "conjugate":
        raise click.UsageError("set the true parameter in the model id (e.g. lam0=2)")
    use_mc = method == "mc" or (method == "auto" and kind not in ("poisson", "normal-discrete"))
    if use_mc and replicates < 2:
        raise click.UsageError("--replicates must be at least 2")
    config = {"subcommand": "thermo", "model": model_spec, "N": Ns, "replicates": replicates,
              "seed": seed, "method": method, "format": fmt}
    tasks = [(model_spec, N, replicates, seed, method) for N in Ns]
    try:
        reports = _run_parallel(_thermo_one, tasks, job_count(jobs))
    except ThermoError as exc:
        _fail(exc)
    columns = CSV_COLUMNS + ["method", "divergent"]
    rows = []
    for r in reports:
        d = r.row()
        d["method"] = r.method
        d["divergent"] = r.divergent
        rows.append(d)
    emit(rows, columns, config, fmt, out)


# --------------------------------------------------------------------------
# GPI priors
# --------------------------------------------------------------------------

@main.command("gpi")
@click.option("--model", "model_spec", required=True)
@click.option("--N", "sizes", default=None, help="sample sizes for closed-form priors")
@click.option("--grid", default=None, help="grid for the recursive solver, e.g. m=1..200")
@click.option("--recursive", is_flag=True, help="solve on the grid by entropy flattening")
@click.option("--extend", default=5.0, show_default=True,
              help="grid extension factor beyond the reported range (recursive Poisson)")
@click.option("--max-iter", default=20, show_default=True, type=int)
@click.option("--replicates", default=200, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def gpi_cmd(model_spec, sizes, grid, recursive, extend, max_iter, replicates, seed, fmt, out):
    """GPI prior: closed-form normalisation and effective complexity, or a recursive solve."""
    model, _ = _parse_model(model_spec)
    kind = model.params["kind"]
    config = {"subcommand": "gpi", "model": model_spec, "N": sizes, "grid": grid,
              "recursive": recursive, "extend": extend, "maxIter": max_iter,
              "replicates": replicates, "seed": seed, "format": fmt}
    if recursive:
        if grid is None:
            raise click.UsageError("--recursive needs --grid")
        try:
            _, points = parse_grid(grid)
        except InvalidInputError as exc:
            raise click.UsageError(str(exc)) from None
        try:
            result = _solve_recursive(model, points, sizes, extend, max_iter, replicates, seed)
        except ThermoError as exc:
            _fail(exc)
        keep = (result.grid >= points[0]) & (result.grid <= points[-1])
        name = model.param_space.names[0]
        rows = [{name: float(g), "logw": float(w), "iteration": result.iterations,
                 "maxAbsS": float(result.final_residual)}
                for g, w in zip(result.grid[keep], result.log_w[keep])]
        comments = ["trace: " + " ".join(repr(float(v)) for v in result.trace),
                    f"N: {result.N!r}", f"converged: {str(result.converged).lower()}",
                    "smoothing: false"] + [f"warning: {w}" for w in result.warnings]
        emit(rows, [name, "logw", "iteration", "maxAbsS"], config, fmt, out, comments)
        return
    if sizes is None:
        raise click.UsageError("--N is required for closed-form priors")
    if kind not in gpi.SYMMETRIC_KINDS:
        raise click.UsageError(f"{kind} has no closed-form GPI prior; use --recursive --grid")
    try:
        Ns = parse_sizes(sizes, integer=False)
    except InvalidInputError as exc:
        raise click.UsageError(str(exc)) from None
    D = model.params.get("D", 1)
    sigma = model.params.get("sigma", 1.0)
    rows = []
    for N in Ns:
        keff = float(oracles.effective_complexity(kind, N, D))
        logc = float(oracles.gpi_log_c(kind, N, D, sigma)) if math.isfinite(keff) else math.inf
        rows.append({"N": float(N), "logc": -math.inf if not math.isfinite(keff) else logc,
                     "Keff": keff})
    emit(rows, ["N", "logc", "Keff"], config, fmt, out)


def _solve_recursive(model, points, sizes, extend, max_iter, replicates, seed):
    kind = model.params["kind"]
    if kind == "poisson":
        N = model.params["t"] / model.params["dt"]
        top = int(max(points[-1] * extend, points[-1] + 50))
        prior0 = gpi.poisson_flat_grid(model, top)
        full = prior0.grid_points[0]
        mask = (full >= points[0]) & (full <= points[-1])
        return gpi.gpi_recursive(model, prior0, N, max_iter=max_iter, eval_mask=mask, seed=seed)
    if sizes is None:
        raise click.UsageError("--N is required for this model")
    N = parse_sizes(sizes, integer=kind != "normal-discrete")[0]
    prior0 = zoo.PriorSpec.from_grid(points, np.zeros(len(points)), sample_size=N)
    if kind == "normal-discrete":
        prior0 = gpi.GpiPrior(model=model, N=N, base="uniform", grid=points,
                              log_w=np.zeros(len(points)),
                              log_correction=np.zeros(len(points))).to_prior_spec()
    return gpi.gpi_recursive(model, prior0, N, mc_replicates=replicates, max_iter=max_iter, seed=seed)


# --------------------------------------------------------------------------
# Model selection
# --------------------------------------------------------------------------

@main.command("select")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON with keys modes, N, replicates, seed")
@click.option("--mode", "modes", multiple=True, type=click.Choice(selection.PRIOR_MODES))
@click.option("--N", "N", type=int, default=20, show_default=True)
@click.option("--replicates", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lindley", is_flag=True, help="print the Lindley-Bartlett threshold table instead")
@click.option("--L", "L", type=float, default=100.0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def select_cmd(config_path, modes, N, replicates, seed, lindley, L, sigma, fmt, out):
    """Posterior over model identity (five-model experiment) or Lindley thresholds."""
    if lindley:
        config = {"subcommand": "select", "lindley": True, "L": L, "sigma": sigma, "N": N}
        rows = []
        for mode in ("gpi", "normalized"):
            try:
                thr = selection.lindley_threshold(L, sigma, N, mode)
                exact = selection.lindley_threshold(L, sigma, N, mode, exact=True)
            except ThermoError as exc:
                thr = exact = math.nan
                click.echo(f"warning: {mode}: {exc}", err=True)
            delta = sigma / math.sqrt(N)
            rows.append({"mode": mode, "L": L, "sigma": sigma, "N": N, "thresholdOverDelta": thr,
                         "exactThresholdOverDelta": exact, "threshold": thr * delta})
        emit(rows, ["mode", "L", "sigma", "N", "thresholdOverDelta", "exactThresholdOverDelta",
                    "threshold"], config, fmt, out)
        return
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise click.UsageError(f"config is not valid JSON: {exc}") from None
        modes = tuple(cfg.get("modes", modes or ("gpi",)))
        N = int(cfg.get("N", N))
        replicates = int(cfg.get("replicates", replicates))
        seed = int(cfg.get("seed", seed))
    modes = modes or ("gpi",)
    for m in modes:
        if m not in selection.PRIOR_MODES:
            raise click.UsageError(f"unknown prior mode {m}")
    if N < 2 or replicates < 1:
        raise click.UsageError("need N >= 2 and replicates >= 1")
    config = {"subcommand": "select", "modes": list(modes), "N": N, "replicates": replicates,
              "seed": seed, "format": fmt}
    rows = []
    try:
        for mode in modes:
            rows.extend(selection.run_fig6(mode, N, replicates, seed).rows())
    except ThermoError as exc:
        _fail(exc)
    emit(rows, list(selection.PosteriorMatrix.COLUMNS), config, fmt, out)


# --------------------------------------------------------------------------
# Oracle check
# --------------------------------------------------------------------------

ORACLE_KINDS = ("normal-conj", "normal-mean", "normal-meanvar", "exponential", "uniform")


def _oracle_for(model, theta0, N, sigma_scale):
    kind = model.params["kind"]
    p = model.params
    if kind == "normal-conj":
        sigma = p["sigma"] * sigma_scale
        kw = {"K": p["K"], "N0": sigma ** 2 / p["sigma_p"] ** 2, "sigma": sigma}
        if theta0 is not None:
            kw["delta2"] = float(np.sum((np.atleast_1d(theta0) - p["mu_p"]) ** 2)) / sigma ** 2
        return oracles.analytic_thermo(kind, N, "discrete", log_c=0.0, **kw)
    if kind == "normal-mean":
        kw = {"D": p["D"], "sigma": p["sigma"] * sigma_scale}
    elif kind == "normal-meanvar":
        kw = {"D": p["D"], "sigma": float(np.atleast_1d(theta0)[-1]) * sigma_scale}
    elif kind == "exponential":
        kw = {"lam": float(np.atleast_1d(theta0)[0]) * sigma_scale}
    else:
        kw = {"L0": float(np.atleast_1d(theta0)[0]) * sigma_scale}
    log_c = zoo.gpi_log_c_for(model, N)
    return oracles.analytic_thermo(kind, N, "discrete", log_c=log_c, **kw)


@main.command("oracle-check")
@click.option("--model", "model_spec", required=True)
@click.option("--N", "sizes", default="5,20,100", show_default=True)
@click.option("--replicates", type=int, default=4000, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--inject-sigma", type=float, default=1.0, show_default=True,
              help="scale the oracle's sigma (or rate/end point); a negative control when != 1")
@click.option("--threshold", type=float, default=4.0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def oracle_check(model_spec, sizes, replicates, seed, inject_sigma, threshold, fmt, out):
    """Compare Monte Carlo potentials with closed forms; exit 1 if any |z| exceeds the threshold."""
    model, theta0 = _parse_model(model_spec)
    kind = model.params["kind"]
    if kind not in ORACLE_KINDS:
        raise click.UsageError(f"no analytic oracle for {kind}")
    if theta0 is None and kind != "normal-conj":
        raise click.UsageError("set the true parameter in the model id")
    try:
        Ns = parse_sizes(sizes)
    except InvalidInputError as exc:
        raise click.UsageError(str(exc)) from None
    config = {"subcommand": "oracle-check", "model": model_spec, "N": Ns, "replicates": replicates,
              "seed": seed, "injectSigma": inject_sigma, "threshold": threshold, "format": fmt}
    rows = []
    worst = 0.0
    try:
        for N in Ns:
            prior = zoo.default_prior(model, N)
            rep = disorder_average(model, prior, theta0 if theta0 is not None else "prior", N,
                                   replicates, seed)
            ref = _oracle_for(model, theta0, N, inject_sigma)
            for q in ("F", "U", "C", "S"):
                mc, se = getattr(rep, q + "bar"), getattr(rep, q + "se")
                an = getattr(ref, q + "bar")
                if se > 0:
                    z = (mc - an) / se
                else:
                    z = 0.0 if abs(mc - an) < 1e-9 * max(1.0, abs(an)) else math.inf
                worst = max(worst, abs(z))
                rows.append({"N": N, "quantity": q, "monteCarlo": mc, "stderr": se, "analytic": an,
                             "z": z})
    except ThermoError as exc:
        _fail(exc)
    status = "PASS" if worst <= threshold else "FAIL"
    emit(rows, ["N", "quantity", "monteCarlo", "stderr", "analytic", "z"], config, fmt, out,
         [f"max|z|: {worst!r}", f"status: {status}"])
    if status == "FAIL":
        sys.exit(1)


if __name__ == "__main__":
    main()
