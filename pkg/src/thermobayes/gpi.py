"""Sample-size-dependent priors that give every distinguishable model unit weight.

Closed forms exist for the symmetric zoo models; other models are solved on a
grid by repeatedly multiplying the prior by ``exp(-damping * S(theta))``,
where S is the disorder-averaged Gibbs entropy at the true parameter theta.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from . import oracles, zoo
from .core import (
    DivergenceError,
    InvalidInputError,
    ModelSpec,
    NotDefinedError,
    NotSupportedError,
    PriorSpec,
    disorder_average,
    fisher_information,
)

log = logging.getLogger(__name__)

SYMMETRIC_KINDS = ("normal-mean", "normal-meanvar", "exponential", "uniform")


@dataclass
class GpiPrior:
    """A solved prior: a base density times a tabulated correction.

    Closed-form priors carry ``log_c`` and an empty grid. Grid priors store the
    support points of their single coordinate in ``grid`` and the total log
    weight in ``log_w``; ``log_correction`` is ``log_w`` minus the base.
    """

    model: ModelSpec
    N: float
    base: str
    log_c: float = math.nan
    grid: Optional[np.ndarray] = None
    log_w: Optional[np.ndarray] = None
    log_correction: Optional[np.ndarray] = None
    trace: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    warnings: list = field(default_factory=list)
    smoothing: bool = False
    eval_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.N >= 1:
            raise InvalidInputError("GPI priors need N >= 1")
        if self.log_w is not None and not np.all(np.isfinite(self.log_w)):
            raise InvalidInputError("GPI prior density must be strictly positive on its support")

    @property
    def final_residual(self) -> float:
        return self.trace[-1] if self.trace else math.nan

    def to_prior_spec(self) -> PriorSpec:
        if self.grid is None:
            return zoo.shape_prior(self.model, self.log_c, sample_size=self.N, name=f"gpi(N={self.N:g})")
        grid = self.grid
        log_w = self.log_w
        if self.model.param_space.discrete:
            lookup = {float(g): float(w) for g, w in zip(grid, log_w)}

            def log_density(thetas):
                t = np.atleast_2d(thetas)[:, 0]
                return np.array([lookup.get(float(v), -np.inf) for v in t])

            return PriorSpec(log_density, proper=False, representation="grid", grid_points=(grid,),
                             log_weights=log_w, sample_size=self.N, name="gpi-grid",
                             params={"family": "grid"})
        return PriorSpec.from_grid(grid, log_w, sample_size=self.N, name="gpi-grid")


# --------------------------------------------------------------------------
# Closed forms
# --------------------------------------------------------------------------

def scaled_jeffreys(model: ModelSpec, theta, N) -> float:
    """(N / 2 pi)^(K/2) sqrt(det I(theta)): inverse volume of indistinguishable models."""
    if not model.regular:
        raise NotDefinedError(f"{model.name} is not regular; Fisher information undefined")
    I = np.atleast_2d(fisher_information(model, theta))
    K = I.shape[0]
    if K == 0:
        return 1.0
    det = float(np.linalg.det(I))
    if det <= 0:
        raise NotDefinedError("Fisher information is singular")
    return float((N / (2 * math.pi)) ** (K / 2) * math.sqrt(det))


def gpi_asymptotic(model: ModelSpec, theta, N) -> float:
    """Large-N GPI density: scaled Jeffreys times e^{-K}."""
    K = model.param_space.dim
    return scaled_jeffreys(model, theta, N) * math.exp(-K)


def gpi_exact_symmetric(kind: str, N, D: int = 1, sigma: float = 1.0) -> GpiPrior:
    """Exact GPI prior for a symmetric model: fixed shape times a constant solved at N."""
    if kind not in SYMMETRIC_KINDS:
        raise NotSupportedError(f"no closed-form GPI prior for {kind}")
    factories = {"normal-mean": lambda: zoo.normal_mean(D, sigma),
                 "normal-meanvar": lambda: zoo.normal_meanvar(D),
                 "exponential": zoo.exponential, "uniform": zoo.uniform_support}
    model = factories[kind]()
    if kind == "normal-meanvar" and N < 2:
        raise DivergenceError("the mean+variance GPI prior is improper below N=2 "
                              "(effective complexity infinite)", direction="sample size")
    log_c = float(oracles.gpi_log_c(kind, N, D, sigma))
    return GpiPrior(model=model, N=N, base="closedForm", log_c=log_c)


def gpi_log_density(gpi: GpiPrior, thetas) -> np.ndarray:
    return np.asarray(gpi.to_prior_spec().log_density(np.atleast_2d(np.asarray(thetas, dtype=float))))


# --------------------------------------------------------------------------
# Recursive solver
# --------------------------------------------------------------------------

def _exact_entropy_route(model):
    return model.params.get("kind") in ("poisson", "normal-discrete")


def _entropy_profile(model, prior, points, N, replicates, seed):
    """Returns (S, stderr) at each evaluation point."""
    if _exact_entropy_route(model):
        S = zoo.statistic_thermo_many(model, points, N, prior)[3]
        return np.asarray(S, dtype=float), np.zeros(len(points))
    S = np.empty(len(points))
    se = np.empty(len(points))
    for i, th in enumerate(points):
        rep = disorder_average(model, prior, np.atleast_1d(th), int(N), replicates, seed + i)
        S[i], se[i] = rep.Sbar, rep.Sse
    return S, se


def _grid_prior(model, grid, log_w, N):
    return GpiPrior(model=model, N=N, base="uniform", grid=grid, log_w=log_w,
                    log_correction=log_w.copy()).to_prior_spec()


def gpi_recursive(model: ModelSpec, prior0: PriorSpec, N, mc_replicates: int = 200,
                  max_iter: int = 20, stop_tol: Optional[float] = None, damping: float = 1.0,
                  seed: int = 0, eval_mask=None, exact_tol: float = 5e-3) -> GpiPrior:
    """Flatten the entropy profile of a tabulated prior.

    Each iteration evaluates S at the grid points selected by ``eval_mask``
    (all by default; exclude points near a truncated grid edge) and multiplies
    the prior there by ``exp(-damping * S)``. Points outside the mask are
    carried along with the correction of their nearest evaluated neighbour.

    Stops when max|S| < ``stop_tol`` (default: three times the pooled Monte
    Carlo standard error, or ``exact_tol`` when S is computed exactly). A
    regression in max|S| reverts the step and halves the damping; three
    consecutive iterations without improvement end the run with a warning.
    ``trace`` holds the accepted residual after each iteration, so it never
    increases; ``iterations`` counts prior updates kept.
    """
    if prior0.representation != "grid":
        raise InvalidInputError("the recursive solver needs a grid prior")
    if len(prior0.grid_points) != 1:
        raise NotSupportedError("recursive GPI solving is implemented for one coordinate")
    grid = np.asarray(prior0.grid_points[0], dtype=float)
    log_w0 = np.asarray(prior0.log_weights, dtype=float)
    mask = np.ones(len(grid), bool) if eval_mask is None else np.asarray(eval_mask, bool)
    if mask.shape != grid.shape or not mask.any():
        raise InvalidInputError("eval_mask must select at least one grid point")
    points = grid[mask]
    nearest = np.searchsorted(points, grid).clip(0, len(points) - 1)
    left = (nearest - 1).clip(0)
    pick = np.where(np.abs(points[left] - grid) < np.abs(points[nearest] - grid), left, nearest)

    log_w = log_w0.copy()
    trace, warnings = [], []
    best = math.inf
    stale = 0
    updates = 0
    converged = False
    S, se = _entropy_profile(model, _grid_prior(model, grid, log_w, N), points, N, mc_replicates, seed)
    tol = stop_tol
    if tol is None:
        tol = exact_tol if _exact_entropy_route(model) else 3 * float(np.sqrt(np.mean(se ** 2)))
    resid = float(np.max(np.abs(S)))
    trace.append(resid)
    for it in range(max_iter):
        if resid < tol:
            converged = True
            break
        prev_log_w, prev_S, prev_resid = log_w, S, resid
        log_w = prev_log_w - damping * prev_S[pick]
        updates += 1
        S, se = _entropy_profile(model, _grid_prior(model, grid, log_w, N), points, N,
                                 mc_replicates, seed + 7919 * (it + 1))
        resid = float(np.max(np.abs(S)))
        if resid > prev_resid:
            damping *= 0.5
            log_w, S, resid = prev_log_w, prev_S, prev_resid
            updates -= 1
            warnings.append(f"iteration {it + 1}: residual rose; damping halved to {damping:g}")
        trace.append(resid)
        if resid < best - 1e-12:
            best, stale = resid, 0
        else:
            stale += 1
            if stale >= 3:
                warnings.append("terminated early: residual did not improve for 3 iterations")
                break
    else:
        converged = resid < tol
    if not converged and not any("terminated" in w for w in warnings):
        warnings.append(f"max|S| = {resid:.3g} above tolerance {tol:.3g} after {max_iter} iterations")
    for w in warnings:
        log.warning(w)
    return GpiPrior(model=model, N=N, base="uniform", grid=grid, log_w=log_w,
                    log_correction=log_w - log_w0, trace=trace, converged=converged,
                    iterations=updates, warnings=warnings, eval_mask=mask)


def poisson_flat_grid(model: ModelSpec, m_max: int) -> PriorSpec:
    """Unit weights on m = 1..m_max."""
    grid = np.arange(1, int(m_max) + 1, dtype=float)
    return GpiPrior(model=model, N=1, base="uniform", grid=grid, log_w=np.zeros(len(grid)),
                    log_correction=np.zeros(len(grid))).to_prior_spec()


# --------------------------------------------------------------------------
# Discrete parameter manifolds
# --------------------------------------------------------------------------

@dataclass
class DiscreteLimitPrior:
    prior: PriorSpec
    branch: np.ndarray  # per grid point: "continuum" or "lattice"
    mixed: bool
    threshold: float


def gpi_discrete_limits(model: ModelSpec, N, grid, threshold: float = 1.0) -> DiscreteLimitPrior:
    """Two-branch GPI prior on a lattice.

    Where the lattice spacing is below ``threshold`` times the statistical
    resolution, the continuum density times the cell volume applies; where it
    is above, every lattice point gets unit weight.
    """
    dims = model.param_space.discrete
    if not dims or model.param_space.continuous:
        raise NotSupportedError("discrete-limit prior needs a purely discrete parameter space")
    grid = np.atleast_2d(np.asarray(grid, dtype=float).T).T if np.ndim(grid) == 1 else np.asarray(grid, float)
    spacing = np.array([d.spacing for d in dims])
    K = len(dims)
    log_w = np.empty(len(grid))
    branch = np.empty(len(grid), dtype=object)
    for i, th in enumerate(grid):
        I = np.atleast_2d(model.fisher(th))
        delta = np.sqrt(np.diag(np.linalg.inv(I)) / N)
        if np.all(spacing / delta < threshold):
            rho = (N / (2 * math.pi)) ** (K / 2) * math.sqrt(np.linalg.det(I))
            log_w[i] = math.log(rho) - K + float(np.sum(np.log(spacing)))
            branch[i] = "continuum"
        elif np.all(spacing / delta >= threshold):
            log_w[i] = 0.0
            branch[i] = "lattice"
        else:
            # coordinates disagree: continuum factors only for the resolved ones
            resolved = spacing / delta < threshold
            sub = I[np.ix_(resolved, resolved)]
            k = int(resolved.sum())
            log_w[i] = (k / 2 * math.log(N / (2 * math.pi)) + 0.5 * math.log(np.linalg.det(sub)) - k
                        + float(np.sum(np.log(spacing[resolved]))))
            branch[i] = "mixed"
    kinds = set(branch)
    prior = GpiPrior(model=model, N=N, base="closedForm", grid=grid[:, 0], log_w=log_w,
                     log_correction=np.zeros(len(grid))).to_prior_spec() if K == 1 else None
    return DiscreteLimitPrior(prior, branch, len(kinds) > 1, threshold)


# --------------------------------------------------------------------------
# Counting distinguishable models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelCount:
    M: float
    divergent: bool
    region: tuple

    def __post_init__(self):
        if not (self.divergent or self.M >= 0):
            raise InvalidInputError("model count must be nonnegative")


def _integrate_box(log_density, box, log_scale):
    def f(*u):
        th = np.array([math.exp(v) if ls else v for v, ls in zip(u, log_scale)])
        jac = sum(v for v, ls in zip(u, log_scale) if ls)
        return math.exp(float(log_density(th[None, :])[0]) + jac)

    ranges = [(math.log(lo), math.log(hi)) if ls else (lo, hi) for (lo, hi), ls in zip(box, log_scale)]
    if len(ranges) == 1:
        return integrate.quad(f, *ranges[0], epsrel=1e-12, epsabs=0, limit=200)[0]
    return integrate.nquad(f, ranges, opts={"epsrel": 1e-10, "epsabs": 0})[0]


def count_models(gpi: GpiPrior, region=None, max_doublings: int = 60,
                 density: Optional[PriorSpec] = None) -> ModelCount:
    """Integral (or lattice sum) of the GPI density over ``region``.

    ``region`` is a list of (lo, hi) per coordinate; infinite ends are
    approached by doubling a finite window, and the count is flagged divergent
    when the increments stop shrinking. ``density`` replaces the GPI density
    (for example to count under a flat or Jeffreys prior).
    """
    model = gpi.model
    ps = model.param_space
    if ps.dim == 0:
        return ModelCount(1.0, False, ())
    if gpi.grid is not None:
        grid = gpi.grid
        lo, hi = (region[0] if region else (-np.inf, np.inf))
        sel = (grid >= lo) & (grid <= hi)
        if not sel.any():
            return ModelCount(0.0, False, ((lo, hi),))
        if ps.discrete:
            return ModelCount(float(np.exp(logsumexp(gpi.log_w[sel]))), False, ((lo, hi),))
        return ModelCount(float(np.trapezoid(np.exp(gpi.log_w[sel]), grid[sel])), False, ((lo, hi),))

    dims = ps.continuous
    region = list(region) if region is not None else [(d.lower, d.upper) for d in dims]
    if len(region) != len(dims):
        raise InvalidInputError("region needs one (lo, hi) per parameter")
    log_scale = [d.log_scale for d in dims]
    for (lo, hi), d in zip(region, dims):
        if not lo < hi or lo < d.lower or hi > d.upper:
            raise InvalidInputError(f"region for {d.name} must lie within its support")
    log_density = (density or gpi.to_prior_spec()).log_density
    # finite starting window
    start = []
    for (lo, hi), ls in zip(region, log_scale):
        if ls:
            a = lo if lo > 0 else (hi / 2 if np.isfinite(hi) else 0.5)
            b = hi if np.isfinite(hi) else max(2 * a, 2.0)
        else:
            a = lo if np.isfinite(lo) else (min(-1.0, hi - 1) if np.isfinite(hi) else -1.0)
            b = hi if np.isfinite(hi) else max(1.0, a + 1)
        start.append([a, b])
    if all(np.isfinite(v) for v in np.ravel(region)) and not any(ls and lo == 0 for (lo, _), ls in
                                                              zip(region, log_scale)):
        M = _integrate_box(log_density, region, log_scale)
        return ModelCount(float(M), False, tuple(map(tuple, region)))
    box = [list(b) for b in start]
    values = [_integrate_box(log_density, box, log_scale)]
    for _ in range(max_doublings):
        for j, ((lo, hi), ls) in enumerate(zip(region, log_scale)):
            a, b = box[j]
            if ls:
                if lo == 0 or lo < a:
                    a = max(lo, a / 2) if lo > 0 else a / 2
                if not np.isfinite(hi) or hi > b:
                    b = min(hi, 2 * b)
            else:
                w = b - a
                if lo < a:
                    a = max(lo, a - w / 2)
                if hi > b:
                    b = min(hi, b + w / 2)
            box[j] = [a, b]
        values.append(_integrate_box(log_density, box, log_scale))
        if not np.isfinite(values[-1]):
            return ModelCount(math.inf, True, tuple(map(tuple, box)))
        inc = np.diff(values[-7:])
        if len(inc) >= 6:
            ratios = inc[1:] / np.where(inc[:-1] == 0, np.nan, inc[:-1])
            # increments that stop shrinking mean the integral grows without bound
            if np.all(ratios[-5:] >= 0.9):
                return ModelCount(math.inf, True, tuple(map(tuple, box)))
            if inc[-1] <= 1e-13 * values[-1]:
                return ModelCount(float(values[-1]), False, tuple(map(tuple, box)))
    return ModelCount(float(values[-1]), False, tuple(map(tuple, box)))


def proper_decomposition(counts, gpi_priors=None):
    """Split unnormalised GPI priors into model probabilities and proper parameter priors.

    Returns ``(model_probs, parameter_priors)``; the latter is ``None`` when no
    priors are given, otherwise a list of PriorSpecs normalised by their counts.
    """
    Ms = np.array([c.M if isinstance(c, ModelCount) else float(c) for c in counts], dtype=float)
    if any(isinstance(c, ModelCount) and c.divergent for c in counts) or not np.all(np.isfinite(Ms)):
        raise NotDefinedError("a model count diverges; use unnormalised evidence ratios instead")
    if np.any(Ms < 0) or Ms.sum() <= 0:
        raise InvalidInputError("model counts must be nonnegative with a positive total")
    probs = Ms / Ms.sum()
    if gpi_priors is None:
        return probs, None
    out = []
    for g, M in zip(gpi_priors, Ms):
        base = g.to_prior_spec() if isinstance(g, GpiPrior) else g
        out.append(_rescaled_prior(base, -math.log(M)))
    return probs, out


def _rescaled_prior(prior: PriorSpec, shift: float) -> PriorSpec:
    params = dict(prior.params)
    if "log_c" in params:
        params["log_c"] = params["log_c"] + shift
    return PriorSpec(lambda th: prior.log_density(th) + shift, proper=True,
                     representation=prior.representation, grid_points=prior.grid_points,
                     log_weights=None if prior.log_weights is None else prior.log_weights + shift,
                     sample_size=prior.sample_size, name=prior.name + "/M", params=params)


# --------------------------------------------------------------------------
# Serialisation
# --------------------------------------------------------------------------

def gpi_to_csv(gpi: GpiPrior, header: str = "") -> str:
    if gpi.grid is None:
        raise NotSupportedError("only grid priors serialise to the table format")
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    buf.write("# trace: " + " ".join(repr(float(v)) for v in gpi.trace) + "\n")
    buf.write(f"# N: {gpi.N!r}\n# smoothing: {str(gpi.smoothing).lower()}\n")
    names = list(gpi.model.param_space.names)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names + ["logw", "iteration", "maxAbsS"])
    final = gpi.final_residual
    for g, lw in zip(gpi.grid, gpi.log_w):
        w.writerow([repr(float(g)), repr(float(lw)), gpi.iterations, repr(float(final))])
    return buf.getvalue()


def gpi_from_csv(text: str, model: ModelSpec) -> GpiPrior:
    trace, N = [], None
    rows = []
    for line in text.splitlines():
        if line.startswith("# trace:"):
            trace = [float(v) for v in line[len("# trace:"):].split()]
        elif line.startswith("# N:"):
            N = float(line[len("# N:"):])
        elif line.startswith("#") or not line.strip():
            continue
        else:
            rows.append(line)
    reader = csv.DictReader(rows)
    name = model.param_space.names[0]
    grid, log_w, iters = [], [], 0
    for r in reader:
        grid.append(float(r[name]))
        log_w.append(float(r["logw"]))
        iters = int(r["iteration"])
    if not grid:
        raise InvalidInputError("prior table has no rows")
    grid = np.array(grid)
    log_w = np.array(log_w)
    return GpiPrior(model=model, N=N if N is not None else 1.0, base="uniform", grid=grid, log_w=log_w,
                    log_correction=log_w.copy(), trace=trace, iterations=iters)
