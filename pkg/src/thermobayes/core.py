"""Evidence evaluation and disorder-averaged thermodynamic potentials.

The engine works on a :class:`ModelSpec` / :class:`PriorSpec` pair. Data are
``(N, D)`` float arrays, parameter points are length-``K`` float vectors
(discrete coordinates hold integer values).

Sample-size differences follow one convention throughout, with
``G(N) = -E[log Z(X^N)]``::

    F = G(N)/N
    U = G(N+1) - G(N)
    C = -N^2 [G(N+1) - 2 G(N) + G(N-1)]
    S = N G(N+1) - (N+1) G(N)
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

LOG_TAIL_CUTOFF = np.log(1e-10)
_MAX_WIDENINGS = 40


class ThermoError(Exception):
    pass


class InvalidInputError(ThermoError, ValueError):
    pass


class DivergenceError(ThermoError):
    def __init__(self, message, direction=None, count=None):
        super().__init__(message)
        self.direction = direction
        self.count = count


class NotDefinedError(ThermoError):
    pass


class NotSupportedError(ThermoError):
    pass


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousDim:
    name: str
    lower: float = -np.inf
    upper: float = np.inf
    log_scale: bool = False  # integrate in log coordinates (positive parameters)

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InvalidInputError(f"empty support for {self.name}")
        if self.log_scale and self.lower < 0:
            raise InvalidInputError(f"log-scale coordinate {self.name} needs a nonnegative support")


@dataclass(frozen=True)
class DiscreteDim:
    name: str
    spacing: float = 1.0
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        if not self.spacing > 0:
            raise InvalidInputError("lattice spacing must be positive")
        if not self.lower <= self.upper:
            raise InvalidInputError(f"empty support for {self.name}")


@dataclass(frozen=True)
class ParamSpace:
    continuous: tuple = ()
    discrete: tuple = ()

    @property
    def dim(self) -> int:
        return len(self.continuous) + len(self.discrete)

    @property
    def names(self) -> list:
        return [d.name for d in self.continuous] + [d.name for d in self.discrete]

    def contains(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,):
            return False
        nc = len(self.continuous)
        for v, d in zip(theta[:nc], self.continuous):
            if not d.lower <= v <= d.upper:
                return False
        for v, d in zip(theta[nc:], self.discrete):
            k = (v - (0.0 if np.isinf(d.lower) else d.lower)) / d.spacing
            if not (d.lower <= v <= d.upper and abs(k - round(k)) < 1e-9):
                return False
        return True


@dataclass
class ModelSpec:
    """A parametric sampling model.

    ``log_density(x, thetas)`` returns per-observation log densities with shape
    ``(G, N)`` for ``G`` parameter points; ``log_likelihood`` returns the summed
    ``(G,)`` values and defaults to summing ``log_density``.
    """

    name: str
    param_space: ParamSpace
    obs_dim: int
    log_density: Callable
    sampler: Callable  # (theta, n, rng) -> (n, obs_dim)
    log_likelihood: Optional[Callable] = None
    in_support: Optional[Callable] = None
    sufficient_stat: Optional[Callable] = None
    exact_log_evidence: Optional[Callable] = None  # (data, prior) -> float
    log_evidence_sampler: Optional[Callable] = None  # (theta0, sizes, prior, rng) -> array
    fisher: Optional[Callable] = None  # theta -> (K, K)
    regular: bool = True
    posterior_window: Optional[Callable] = None  # data -> list of (lo, hi) per continuous dim
    evidence_grid: Optional[Callable] = None  # (data, prior) -> (thetas, log_cell_weights)
    observation_quadrature: Optional[Callable] = None  # (theta0, n) -> (x_nodes, weights)
    data_support: Optional[Callable] = None  # data -> (lo, hi) per continuous dim; integrand is 0 outside
    min_size: int = 1
    params: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return self.param_space.dim

    def total_log_likelihood(self, data, thetas):
        thetas = np.atleast_2d(thetas)
        if self.log_likelihood is not None:
            return self.log_likelihood(data, thetas)
        out = np.empty(len(thetas))
        for s in range(0, len(thetas), 4096):
            out[s:s + 4096] = self.log_density(data, thetas[s:s + 4096]).sum(axis=1)
        return out


@dataclass
class PriorSpec:
    """A possibly improper prior density, closed form or tabulated on a grid."""

    log_density: Callable  # (G, K) -> (G,)
    proper: bool = False
    representation: str = "closedForm"
    grid_points: Optional[tuple] = None
    log_weights: Optional[np.ndarray] = None
    sample_size: Optional[int] = None
    name: str = ""
    params: dict = field(default_factory=dict)
    sampler: Optional[Callable] = None  # rng -> theta (proper priors only)

    def __post_init__(self):
        if self.representation not in ("closedForm", "grid"):
            raise InvalidInputError("representation must be closedForm or grid")
        if self.representation == "grid":
            if self.grid_points is None or self.log_weights is None:
                raise InvalidInputError("grid prior needs grid points and log weights")
            for axis in self.grid_points:
                if np.any(np.diff(axis) <= 0):
                    raise InvalidInputError("grid points must be strictly increasing")

    @classmethod
    def from_grid(cls, points, log_weights, *, proper=False, sample_size=None, name="grid"):
        """One-dimensional tabulated prior; off-grid values interpolate log w linearly."""
        points = np.asarray(points, dtype=float)
        log_weights = np.asarray(log_weights, dtype=float)

        def log_density(thetas):
            t = np.atleast_2d(thetas)[:, 0]
            out = np.interp(t, points, log_weights)
            out[(t < points[0]) | (t > points[-1])] = -np.inf
            return out

        return cls(log_density, proper=proper, representation="grid", grid_points=(points,),
                   log_weights=log_weights, sample_size=sample_size, name=name)


@dataclass(frozen=True)
class EvidenceEstimate:
    logZ: float
    method: str
    errorBound: float

    def __post_init__(self):
        if self.method not in ("closedForm", "quadrature", "discreteSum", "monteCarlo"):
            raise InvalidInputError(f"unknown evidence method {self.method}")
        if self.method == "closedForm" and self.errorBound != 0:
            raise InvalidInputError("closed-form evidence carries no error bound")
        if self.method != "closedForm" and not self.errorBound > 0:
            # a numerical estimate that happens to be exact still reports a positive bound
            object.__setattr__(self, "errorBound", np.finfo(float).eps * max(1.0, abs(self.logZ)))


CSV_COLUMNS = ["model", "theta0", "N", "replicates", "seed", "Fbar", "Fse", "Ubar", "Use",
               "Cbar", "Cse", "Sbar", "Sse"]


@dataclass
class ThermoReport:
    N: int
    Fbar: float
    Ubar: float
    Cbar: float
    Sbar: float
    Fse: float
    Use: float
    Cse: float
    Sse: float
    replicates: int
    seed: int
    model: str = ""
    theta0: str = ""
    method: str = "monteCarlo"
    divergent: int = 0

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def reports_to_csv(reports: Sequence[ThermoReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return buf.getvalue()


def report_from_triples(g_triples, N, *, seed, model="", theta0="", method="monteCarlo",
                        divergent=0) -> ThermoReport:
    """Build a report from per-replicate rows ``(G(N-1), G(N), G(N+1))``."""
    g = np.atleast_2d(np.asarray(g_triples, dtype=float))
    gm, g0, gp = g[:, 0], g[:, 1], g[:, 2]
    per = {
        "F": g0 / N,
        "U": gp - g0,
        "C": -N * N * (gp - 2.0 * g0 + gm),
        "S": N * gp - (N + 1) * g0,
    }
    R = len(g)
    mean = {k: float(np.mean(v)) for k, v in per.items()}
    se = {k: (float(np.std(v, ddof=1) / np.sqrt(R)) if R > 1 else 0.0) for k, v in per.items()}
    return ThermoReport(N=N, Fbar=mean["F"], Ubar=mean["U"], Cbar=mean["C"], Sbar=mean["S"],
                        Fse=se["F"], Use=se["U"], Cse=se["C"], Sse=se["S"], replicates=R,
                        seed=seed, model=model, theta0=theta0, method=method, divergent=divergent)


# --------------------------------------------------------------------------
# Data helpers
# --------------------------------------------------------------------------

def as_dataset(model: ModelSpec, data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if model.obs_dim == 1 else x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != model.obs_dim:
        raise InvalidInputError(
            f"{model.name}: samples must have dimension {model.obs_dim}, got shape {np.shape(data)}")
    if len(x) == 0:
        raise InvalidInputError("empty dataset")
    if model.in_support is not None and not np.all(model.in_support(x)):
        raise InvalidInputError(f"{model.name}: samples outside the observation support")
    return x


def replicate_rng(seed: int, replicate: int, offset: int = 0) -> np.random.Generator:
    """Independent stream for one replicate; identical inputs give identical streams."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                        spawn_key=(int(replicate), int(offset))))


def cross_entropy_hat(model: ModelSpec, theta, data) -> float:
    """-(1/N) sum_i log q(x_i | theta); +inf when any likelihood vanishes."""
    x = as_dataset(model, data)
    ll = model.total_log_likelihood(x, np.atleast_2d(np.asarray(theta, dtype=float)))[0]
    if np.isnan(ll):
        raise InvalidInputError("likelihood evaluated to NaN")
    return float(-ll / len(x))


# --------------------------------------------------------------------------
# Evidence
# --------------------------------------------------------------------------

def _trapezoid_axis(lo, hi, n, log_scale):
    u = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[[0, -1]] *= 0.5
    if log_scale:
        theta = np.exp(u)
        logw = np.log(w) + u  # dtheta = theta du
    else:
        theta = u
        logw = np.log(w)
    return theta, logw


def _log_integrand(model, prior, data, thetas):
    lp = np.asarray(prior.log_density(thetas), dtype=float)
    out = np.full(len(thetas), -np.inf)
    ok = np.isfinite(lp)
    if np.any(ok):
        out[ok] = lp[ok] + model.total_log_likelihood(data, thetas[ok])
    out[np.isnan(out)] = -np.inf
    return out


def _hard_bounds(model, prior, data):
    """Per-dimension support outside which the integrand vanishes, in natural units."""
    dims = model.param_space.continuous
    out = [[d.lower, d.upper] for d in dims]
    extra = []
    if model.data_support is not None:
        extra.append(model.data_support(data))
    if prior is not None and prior.params.get("support") is not None:
        extra.append(prior.params["support"])
    for sup in extra:
        for j, (lo, hi) in enumerate(sup):
            out[j][0] = max(out[j][0], lo)
            out[j][1] = min(out[j][1], hi)
    for (lo, hi), d in zip(out, dims):
        if not lo < hi:
            raise InvalidInputError(f"empty integration domain for {d.name}")
    return out


def _to_axis(v, log_scale):
    if not log_scale:
        return v
    return np.log(v) if v > 0 else -np.inf


def _initial_window(model, data, prior=None):
    dims = model.param_space.continuous
    hard = _hard_bounds(model, prior, data)
    if model.posterior_window is not None:
        win = list(model.posterior_window(data))
    else:
        win = [tuple(h) for h in hard]
    out = []
    for (lo, hi), (blo, bhi), d in zip(win, hard, dims):
        lo, hi = max(lo, blo), min(hi, bhi)
        if not lo < hi:
            lo, hi = blo, bhi
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise InvalidInputError(f"no finite integration window for {d.name}")
        if d.log_scale:
            lo = max(lo, 1e-300)
        out.append([_to_axis(lo, d.log_scale), _to_axis(hi, d.log_scale)])
    return out


def _romberg_log(log_t):
    """Richardson table on successive (log) trapezoid sums whose step halves each time.

    Returns the last diagonal entry and the change from the previous one.
    """
    ref = log_t[-1]
    rows = []
    for lt in log_t:
        row = [np.exp(lt - ref)]
        for j, prev in enumerate(rows[-1] if rows else []):
            f = 4.0 ** (j + 1)
            row.append(row[j] + (row[j] - prev) / (f - 1))
        rows.append(row)
    best = rows[-1][-1]
    before = rows[-2][-1] if len(rows) > 1 else rows[-1][0]
    plain = abs(log_t[-1] - log_t[-2]) if len(log_t) > 1 else np.inf
    if best <= 0 or before <= 0:
        # extrapolation overshot; fall back to the plain trapezoid sums
        return ref, plain
    extrapolated = abs(np.log(best) - np.log(before))
    if plain <= extrapolated:
        # integrand negligible at the window edges: trapezoid converges geometrically and
        # the extrapolation would only carry over error from the coarse levels
        return ref, plain
    return ref + np.log(best), extrapolated


def _quadrature(model, prior, data, tol=1e-11, n_start=33, n_max=1025):
    dims = model.param_space.continuous
    if model.param_space.discrete or not dims:
        raise NotSupportedError("quadrature needs continuous parameters only")
    if len(dims) > 3:
        raise NotSupportedError("quadrature limited to three continuous dimensions")
    win = _initial_window(model, data, prior)
    bounds = [(_to_axis(lo, d.log_scale), _to_axis(hi, d.log_scale))
              for (lo, hi), d in zip(_hard_bounds(model, prior, data), dims)]
    if len(dims) == 3:
        n_max = min(n_max, 257)

    n = n_start
    sums = []
    widenings = 0
    while True:
        axes = [_trapezoid_axis(w[0], w[1], n, d.log_scale) for w, d in zip(win, dims)]
        mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        lw = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        thetas = np.stack([m.ravel() for m in mesh], axis=1)
        logw = sum(l.ravel() for l in lw)
        f = _log_integrand(model, prior, data, thetas).reshape(mesh[0].shape)
        fmax = np.max(f)
        if not np.isfinite(fmax):
            if fmax == -np.inf:
                return EvidenceEstimate(-np.inf, "quadrature", 0.0)
            raise DivergenceError("integrand is infinite", direction=dims[0].name)
        widened = False
        for ax, d in enumerate(dims):
            for side, idx in (("lower", 0), ("upper", -1)):
                face = np.take(f, idx, axis=ax)
                at_bound = abs(win[ax][idx] - bounds[ax][idx]) < 1e-12
                if np.max(face) - fmax > LOG_TAIL_CUTOFF and not at_bound:
                    width = win[ax][1] - win[ax][0]
                    new = win[ax][idx] + (-0.5 * width if idx == 0 else 0.5 * width)
                    new = max(new, bounds[ax][0]) if idx == 0 else min(new, bounds[ax][1])
                    if not np.isfinite(new):
                        raise DivergenceError(f"evidence diverges along {d.name} ({side})",
                                              direction=f"{d.name}:{side}")
                    win[ax][idx] = new
                    widened = True
        if widened:
            widenings += 1
            if widenings > _MAX_WIDENINGS:
                bad = [d.name for d in dims]
                raise DivergenceError(f"evidence does not converge; integrand mass keeps "
                                      f"growing along {bad}", direction=",".join(bad))
            sums = []
            n = n_start
            continue
        sums.append(float(logsumexp(f.ravel() + logw)))
        if len(sums) >= 2:
            logI, err = _romberg_log(sums)
            if err < tol or 2 * n - 1 > n_max:
                if err >= tol:
                    log.warning("quadrature stopped at %d points per axis, error %.2e", n, err)
                return EvidenceEstimate(float(logI), "quadrature", float(max(err, 1e-16)))
        n = 2 * n - 1


def _discrete_sum(model, prior, data, window=None, max_points=10 ** 6):
    ps = model.param_space
    if ps.continuous or len(ps.discrete) != 1:
        raise NotSupportedError("discrete sums implemented for one lattice coordinate")
    d = ps.discrete[0]
    if window is None:
        window = model.posterior_window(data)[0] if model.posterior_window else (d.lower, d.upper)
    lo, hi = max(window[0], d.lower), min(window[1], d.upper)
    origin = 0.0 if np.isinf(d.lower) else d.lower
    klo = int(np.ceil((lo - origin) / d.spacing - 1e-9))
    khi = int(np.floor((hi - origin) / d.spacing + 1e-9))
    for _ in range(60):
        pts = origin + d.spacing * np.arange(klo, khi + 1)
        f = _log_integrand(model, prior, data, pts[:, None])
        fmax = np.max(f)
        if fmax == -np.inf:
            return EvidenceEstimate(-np.inf, "discreteSum", 0.0)
        grow = False
        width = khi - klo + 1
        if f[0] - fmax > LOG_TAIL_CUTOFF - 14 and origin + d.spacing * (klo - 1) >= d.lower:
            klo -= width
            grow = True
        if f[-1] - fmax > LOG_TAIL_CUTOFF - 14 and origin + d.spacing * (khi + 1) <= d.upper:
            khi += width
            grow = True
        if not grow:
            logS = float(logsumexp(f))
            tail = max(f[0], f[-1]) - logS
            return EvidenceEstimate(logS, "discreteSum", float(max(np.exp(tail), 1e-16)))
        if khi - klo > max_points:
            raise DivergenceError(f"lattice sum along {d.name} does not converge",
                                  direction=d.name)
    raise DivergenceError(f"lattice sum along {d.name} does not converge", direction=d.name)


def _monte_carlo(model, prior, data, n_samples=200_000, seed=0):
    """Importance sampling with a uniform proposal over the quadrature window."""
    dims = model.param_space.continuous
    win = _initial_window(model, data, prior)
    rng = np.random.default_rng(seed)
    u = np.column_stack([rng.uniform(lo, hi, n_samples) for lo, hi in win])
    logvol = sum(np.log(hi - lo) for lo, hi in win)
    thetas = u.copy()
    logjac = np.zeros(n_samples)
    for j, d in enumerate(dims):
        if d.log_scale:
            thetas[:, j] = np.exp(u[:, j])
            logjac += u[:, j]
    f = _log_integrand(model, prior, data, thetas) + logjac + logvol
    m = np.max(f)
    r = np.exp(f - m)
    mean = r.mean()
    if mean == 0:
        return EvidenceEstimate(-np.inf, "monteCarlo", np.inf)
    rel = r.std(ddof=1) / np.sqrt(n_samples) / mean
    return EvidenceEstimate(float(m + np.log(mean)), "monteCarlo", float(rel))


def log_evidence(model: ModelSpec, prior: PriorSpec, data, method: str = "auto",
                 **method_params) -> EvidenceEstimate:
    """log of the integral (or lattice sum) of prior times likelihood."""
    x = as_dataset(model, data)
    if len(x) < model.min_size:
        raise DivergenceError(f"{model.name} evidence is improper below N={model.min_size}",
                              direction="sample size")
    if method == "auto":
        if model.exact_log_evidence is not None and _prior_matches(model, prior):
            method = "closedForm"
        elif model.param_space.discrete:
            method = "discreteSum"
        else:
            method = "quadrature"
    if method == "closedForm":
        if model.exact_log_evidence is None:
            raise NotSupportedError(f"{model.name} has no closed-form evidence")
        return EvidenceEstimate(float(model.exact_log_evidence(x, prior)), "closedForm", 0.0)
    if method == "quadrature":
        if model.evidence_grid is not None:
            thetas, logw = model.evidence_grid(x, prior, **method_params)
            f = _log_integrand(model, prior, x, thetas) + logw
            logI = float(logsumexp(f))
            err = method_params.get("error_bound", 1e-12)
            return EvidenceEstimate(logI, "quadrature", err)
        return _quadrature(model, prior, x, **method_params)
    if method == "discreteSum":
        return _discrete_sum(model, prior, x, **method_params)
    if method == "monteCarlo":
        return _monte_carlo(model, prior, x, **method_params)
    raise InvalidInputError(f"unknown evidence method {method}")


def _prior_matches(model, prior):
    fam = model.params.get("prior_family")
    return fam is not None and prior.params.get("family") == fam


def _log_z(model, prior, data, method):
    return log_evidence(model, prior, data, method=method).logZ


def avg_energy_loocv(model: ModelSpec, prior: PriorSpec, data, method: str = "auto") -> float:
    """-(1/N) sum_i [log Z(x^N) - log Z(x^{-i})]."""
    x = as_dataset(model, data)
    N = len(x)
    if N < 2:
        raise InvalidInputError("leave-one-out needs N >= 2")
    full = _log_z(model, prior, x, method)
    total = 0.0
    for i in range(N):
        loo = _log_z(model, prior, np.delete(x, i, axis=0), method)
        if not np.isfinite(loo):
            raise DivergenceError(f"leave-one-out evidence diverges without sample {i}",
                                  direction="sample size")
        total += full - loo
    return float(-total / N)


def gibbs_entropy_sample(model: ModelSpec, prior: PriorSpec, data, method: str = "auto") -> float:
    """N (U - F) with U from leave-one-out and F = -log Z / N."""
    x = as_dataset(model, data)
    N = len(x)
    U = avg_energy_loocv(model, prior, x, method)
    F = -_log_z(model, prior, x, method) / N
    return float(N * (U - F))


# --------------------------------------------------------------------------
# Disorder averages
# --------------------------------------------------------------------------

def _resolve_theta0(theta0, prior, rng):
    if isinstance(theta0, str):
        if theta0 != "prior":
            raise InvalidInputError("theta0 must be a parameter vector or 'prior'")
        if prior.sampler is None or not prior.proper:
            raise InvalidInputError("drawing theta0 from the prior needs a proper, samplable prior")
        return np.atleast_1d(np.asarray(prior.sampler(rng), dtype=float))
    return np.atleast_1d(np.asarray(theta0, dtype=float))


def _grid_extension_logz(model, prior, prefix, x_nodes):
    """log Z for the prefix, the prefix plus one node, and plus an ordered node pair."""
    if model.evidence_grid is not None:
        thetas, logw = model.evidence_grid(prefix, prior)
    else:
        thetas, logw = _window_grid(model, prior, prefix)
    base = _log_integrand(model, prior, prefix, thetas) + logw
    # points this far below the peak cannot matter after one or two more samples
    keep = base > np.max(base) - 60.0
    thetas, base = thetas[keep], base[keep]
    m = np.max(base)
    w = np.exp(base - m)
    logq = model.log_density(x_nodes, thetas)  # (G, M)
    qmax = np.max(logq, axis=0)
    q = np.exp(logq - qmax)
    z0 = np.log(np.sum(w)) + m
    z1 = np.log(w @ q) + m + qmax
    z2 = np.log(q.T @ (w[:, None] * q)) + m + qmax[:, None] + qmax[None, :]
    return z0, z1, z2


def _window_grid(model, prior, data, n=65):
    dims = model.param_space.continuous
    win = _initial_window(model, data, prior)
    axes = [_trapezoid_axis(lo, hi, n, d.log_scale) for (lo, hi), d in zip(win, dims)]
    mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    lw = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), sum(l.ravel() for l in lw)


def _triple_sampler(model, prior, theta0, N, rng):
    return -np.asarray(model.log_evidence_sampler(theta0, np.array([N - 1, N, N + 1]), prior, rng),
                       dtype=float)


def _triple_prefix(model, prior, theta0, N, rng, method):
    x = as_dataset(model, model.sampler(theta0, N + 1, rng))
    return -np.array([_log_z(model, prior, x[:n], method) for n in (N - 1, N, N + 1)])


def _triple_conditional(model, prior, theta0, N, rng, n_nodes):
    x = as_dataset(model, model.sampler(theta0, N - 1, rng))
    nodes, weights = model.observation_quadrature(theta0, n_nodes)
    z0, z1, z2 = _grid_extension_logz(model, prior, x, nodes)
    return -np.array([z0, weights @ z1, weights @ z2 @ weights])


def disorder_average(model: ModelSpec, prior: PriorSpec, theta0, N: int, replicates: int,
                     seed: int, coupling: str = "auto", method: str = "auto",
                     n_nodes: int = 64, max_divergent_fraction: float = 0.01) -> ThermoReport:
    """Monte Carlo estimate of F, U, C, S at sample size N.

    ``theta0`` is a parameter vector, or ``"prior"`` to redraw it from a proper
    prior for every replicate. ``coupling`` selects how the three sample sizes
    share randomness:

    * ``"sampler"`` uses the model's exact log-evidence sampler, which couples
      sizes through common uniforms;
    * ``"conditional"`` shares an ``N-1`` prefix and integrates the trailing
      observations against ``q(.|theta0)`` by quadrature (1-D observations);
    * ``"prefix"`` evaluates evidence on nested prefixes of one dataset.
    """
    if N < 1 or (N == 1 and not prior.proper):
        # at N=1 the lower difference uses the empty dataset, whose evidence is 1 only for proper priors
        raise InvalidInputError("disorder_average needs N >= 2 (N >= 1 with a proper prior)")
    if replicates < 1:
        raise InvalidInputError("replicates must be positive")
    if coupling == "auto":
        if model.log_evidence_sampler is not None and _prior_matches(model, prior):
            coupling = "sampler"
        elif model.observation_quadrature is not None:
            coupling = "conditional"
        else:
            coupling = "prefix"
    if N - 1 < model.min_size and not (N == 1 and coupling == "sampler"):
        raise DivergenceError(f"{model.name} is improper at N-1={N - 1}", direction="sample size",
                              count=replicates)
    rows = []
    divergent = 0
    for r in range(replicates):
        rng = replicate_rng(seed, r)
        th = _resolve_theta0(theta0, prior, rng)
        try:
            if coupling == "sampler":
                g = _triple_sampler(model, prior, th, N, rng)
            elif coupling == "conditional":
                g = _triple_conditional(model, prior, th, N, rng, n_nodes)
            elif coupling == "prefix":
                g = _triple_prefix(model, prior, th, N, rng, method)
            else:
                raise InvalidInputError(f"unknown coupling {coupling}")
        except DivergenceError:
            g = np.full(3, np.nan)
        if not np.all(np.isfinite(g)):
            divergent += 1
            continue
        rows.append(g)
    if divergent > max_divergent_fraction * replicates:
        raise DivergenceError(f"{divergent} of {replicates} replicates diverged", count=divergent)
    if divergent:
        log.warning("%s: %d divergent replicates excluded", model.name, divergent)
    th_label = theta0 if isinstance(theta0, str) else " ".join(repr(float(v)) for v in np.atleast_1d(theta0))
    return report_from_triples(np.array(rows), N, seed=seed, model=model.name, theta0=th_label,
                               divergent=divergent)


# --------------------------------------------------------------------------
# Information geometry
# --------------------------------------------------------------------------

def fisher_information(model: ModelSpec, theta0, n_mc: int = 200_000, seed: int = 0,
                       step: float = 1e-3) -> np.ndarray:
    """Fisher information matrix at theta0.

    Uses the model's closed form when present, otherwise central second
    differences of a Monte Carlo cross entropy (common samples for all
    evaluations) with one Richardson step.
    """
    if not model.regular:
        raise NotDefinedError(f"Fisher information is not defined for {model.name}")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if model.fisher is not None:
        return np.asarray(model.fisher(theta0), dtype=float)
    rng = np.random.default_rng(seed)
    x = as_dataset(model, model.sampler(theta0, n_mc, rng))
    K = len(theta0)

    def H(th):
        return -float(model.log_density(x, th[None, :]).mean())

    def hess(h):
        I = np.empty((K, K))
        for i in range(K):
            for j in range(i, K):
                ei = np.zeros(K)
                ej = np.zeros(K)
                ei[i] = h * max(1.0, abs(theta0[i]))
                ej[j] = h * max(1.0, abs(theta0[j]))
                v = (H(theta0 + ei + ej) - H(theta0 + ei - ej) - H(theta0 - ei + ej)
                     + H(theta0 - ei - ej)) / (4 * ei[i] * ej[j])
                I[i, j] = I[j, i] = v
        return I

    I_h = hess(step)
    I_h2 = hess(step / 2)
    I = (4 * I_h2 - I_h) / 3
    if not np.all(np.isfinite(I)):
        raise NotDefinedError("cross entropy is not twice differentiable at theta0")
    return 0.5 * (I + I.T)


def statistical_resolution(model: ModelSpec, theta0, N) -> np.ndarray:
    """Posterior width scale N^{-1/2} sqrt([I^{-1}]_ii) per coordinate."""
    I = fisher_information(model, theta0)
    try:
        inv = np.linalg.inv(I)
    except np.linalg.LinAlgError as exc:
        raise NotDefinedError("Fisher information is singular") from exc
    d = np.diag(inv)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotDefinedError("Fisher information is singular")
    return np.sqrt(d / N)
