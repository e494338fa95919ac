"""Posterior model probabilities, AIC and the Lindley-Bartlett threshold."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.optimize import brentq
from scipy.special import logsumexp

from . import oracles, zoo
from .core import (
    DivergenceError,
    InvalidInputError,
    ModelSpec,
    NotDefinedError,
    NotSupportedError,
    PriorSpec,
    as_dataset,
    log_evidence,
    replicate_rng,
)
from .gpi import GpiPrior, count_models

PRIOR_MODES = ("gpi", "normalized", "informative")

# label -> (registry string with true parameter)
FIVE_MODELS = {
    "N": "normal-fixed:mu=5,sigma=1",
    "N(mu)": "normal-mean:sigma=1,mu0=6",
    "N(mu,sigma)": "normal-meanvar:mu0=5,sigma0=0.75",
    "Exp": "exponential:lam0=2",
    "U": "uniform:L0=10",
}

# Fixed prior supports for the informative mode (box per parameter)
INFORMATIVE_SUPPORT = {
    "normal-mean": [(0.0, 10.0)],
    "normal-meanvar": [(0.0, 10.0), (0.1, 10.0)],
    "exponential": [(0.1, 10.0)],
    "uniform": [(0.0, 10.0)],
}


def five_models():
    """Ordered list of (label, model, theta0) for the five-model experiment."""
    out = []
    for label, spec in FIVE_MODELS.items():
        model, theta0 = zoo.parse_model_id(spec)
        if theta0 is None:
            theta0 = np.zeros(0)
        out.append((label, model, theta0))
    return out


def simulate_dataset(model_id, theta0, N: int, seed: int) -> np.ndarray:
    """N iid draws from q(.|theta0); ``model_id`` is a registry string or a ModelSpec."""
    model = zoo.parse_model_id(model_id)[0] if isinstance(model_id, str) else model_id
    if N < 1:
        raise InvalidInputError("N must be positive")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if model.param_space.dim and not model.param_space.contains(theta0):
        raise InvalidInputError(f"theta0 {theta0} outside the parameter space of {model.name}")
    return as_dataset(model, model.sampler(theta0, N, replicate_rng(seed, 0)))


# --------------------------------------------------------------------------
# Evidence under the three prior conventions
# --------------------------------------------------------------------------

def _in_support(model, data):
    try:
        as_dataset(model, data)
    except InvalidInputError:
        return False
    return True


def _informative_log_evidence(model, data):
    kind = model.params["kind"]
    box = INFORMATIVE_SUPPORT[kind]
    x = as_dataset(model, data)
    N = len(x)
    if kind == "uniform":
        mx = float(x.max())
        hi = box[0][1]
        if mx >= hi:
            return -math.inf
        # (1/10) * integral_{max}^{10} L^-N dL
        return float(-math.log(hi) - math.log(N - 1) + (1 - N) * math.log(mx)
                     + math.log(-math.expm1((N - 1) * (math.log(mx) - math.log(hi)))))
    if kind == "normal-mean":
        log_c = -math.log(box[0][1] - box[0][0])
    elif kind == "normal-meanvar":
        (a, b), (s0, s1) = box
        log_c = -math.log((b - a) * (1 / s0 - 1 / s1))
    elif kind == "exponential":
        log_c = -math.log(math.log(box[0][1] / box[0][0]))
    else:
        raise NotSupportedError(kind)
    prior = zoo.shape_prior(model, log_c, support=box, name="informative")
    return log_evidence(model, prior, x, method="quadrature", tol=1e-8).logZ


def _normalized_log_evidence(model, data):
    """Evidence under a normalised objective prior; zero when the normaliser diverges."""
    kind = model.params["kind"]
    x = as_dataset(model, data)
    if kind == "uniform":
        # no Jeffreys prior exists; a flat prior on L is used instead
        density = PriorSpec(lambda th: np.zeros(len(np.atleast_2d(th))))
    else:
        density = zoo.shape_prior(model, 0.0)
    count = count_models(GpiPrior(model=model, N=max(len(x), 1), base="closedForm", log_c=0.0),
                         density=density)
    if count.divergent:
        return -math.inf
    prior = zoo.shape_prior(model, -math.log(count.M))
    return zoo.exact_log_evidence(model, x, prior)


def log_evidence_for(model: ModelSpec, data, mode: str = "gpi") -> float:
    """log Z of one model under the chosen prior convention (-inf for zero evidence)."""
    if mode not in PRIOR_MODES:
        raise InvalidInputError(f"prior mode must be one of {PRIOR_MODES}")
    if not _in_support(model, data):
        return -math.inf
    if model.params["kind"] == "normal-fixed":
        return zoo.exact_log_evidence(model, data)
    try:
        if mode == "gpi":
            return zoo.exact_log_evidence(model, data, zoo.gpi_prior(model, len(as_dataset(model, data))))
        if mode == "normalized":
            return _normalized_log_evidence(model, data)
        return _informative_log_evidence(model, data)
    except DivergenceError:
        # a divergent effective complexity gives the model zero weight
        return -math.inf


def model_posteriors(data, models, mode: str = "gpi") -> np.ndarray:
    """Z_I / sum_J Z_J over ``models`` (ModelSpecs or registry strings)."""
    specs = [zoo.parse_model_id(m)[0] if isinstance(m, str) else m for m in models]
    if not specs:
        raise InvalidInputError("need at least one model")
    logZ = np.array([log_evidence_for(m, data, mode) for m in specs])
    if not np.any(np.isfinite(logZ)):
        raise NotDefinedError("every model has zero evidence; posterior undefined")
    return np.exp(logZ - logsumexp(logZ))


@dataclass
class PosteriorMatrix:
    generators: list
    inferencers: list
    mean: np.ndarray
    stderr: np.ndarray
    replicates: int
    N: int
    seed: int
    mode: str

    COLUMNS = ("generator", "inferencer", "meanPosterior", "stderr", "replicates", "N", "seed",
               "priorMode")

    def argmax_labels(self):
        return [self.inferencers[i] for i in np.argmax(self.mean, axis=1)]

    def rows(self):
        for i, g in enumerate(self.generators):
            for j, f in enumerate(self.inferencers):
                yield {"generator": g, "inferencer": f, "meanPosterior": float(self.mean[i, j]),
                       "stderr": float(self.stderr[i, j]), "replicates": self.replicates,
                       "N": self.N, "seed": self.seed, "priorMode": self.mode}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.values()])
        return buf.getvalue()


def run_fig6(mode: str = "gpi", N: int = 20, replicates: int = 200, seed: int = 0,
             models=None) -> PosteriorMatrix:
    """Replicate-averaged posterior over model identity for data from each model."""
    if N < 2:
        raise InvalidInputError("N must be at least 2")
    models = models or five_models()
    labels = [m[0] for m in models]
    specs = [m[1] for m in models]
    mean = np.zeros((len(models), len(models)))
    sq = np.zeros_like(mean)
    for g, (_, gen, theta0) in enumerate(models):
        for r in range(replicates):
            x = gen.sampler(theta0, N, replicate_rng(seed, r, offset=g))
            post = model_posteriors(x, specs, mode)
            if abs(post.sum() - 1) > 1e-9:
                raise ArithmeticError("posterior row does not normalise")
            mean[g] += post
            sq[g] += post ** 2
    mean /= replicates
    var = np.maximum(sq / replicates - mean ** 2, 0.0)
    stderr = np.sqrt(var / max(replicates - 1, 1))
    return PosteriorMatrix(labels, labels, mean, stderr, replicates, N, seed, mode)


# --------------------------------------------------------------------------
# AIC
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AicResult:
    aic: float
    theta_hat: np.ndarray
    boundary: bool = False


def _mixture_mle(model, x):
    g = model.params["grid"]
    lo, hi = math.log(g.kmin), math.log(g.kmax)

    def nll(v):
        p = 1 / (1 + math.exp(-v[0]))
        th = np.array([[p, math.exp(v[1]), math.exp(v[2])]])
        return -float(model.log_density(x, th).sum())

    best = None
    mean = float(x.mean())
    for start in ([0.0, math.log(1 / mean) - 1, math.log(1 / mean) + 1], [1.0, lo + 1, hi - 1]):
        start[1:] = np.clip(start[1:], lo, hi)
        res = optimize.minimize(nll, start, method="L-BFGS-B",
                                bounds=[(-30, 30), (lo, hi), (lo, hi)])
        if best is None or res.fun < best.fun:
            best = res
    v = best.x
    theta = np.array([1 / (1 + math.exp(-v[0])), math.exp(v[1]), math.exp(v[2])])
    boundary = bool(abs(v[0]) > 20 or np.any(np.isclose(v[1:], [lo, lo], atol=1e-6))
                    or np.any(np.isclose(v[1:], [hi, hi], atol=1e-6))
                    or np.isclose(theta[1], theta[2], rtol=1e-4))
    return theta, float(best.fun), boundary


def aic_details(model: ModelSpec, data) -> AicResult:
    """-log q(x^N | theta_hat) + K in nats, with the maximiser."""
    x = as_dataset(model, data)
    kind = model.params["kind"]
    N = len(x)
    K = model.param_space.dim
    if kind == "normal-fixed":
        theta = np.zeros(0)
        nll = -zoo.exact_log_evidence(model, x)
        return AicResult(nll, theta)
    if kind in ("normal-mean", "normal-conj", "normal-discrete"):
        theta = x.mean(axis=0)
        if kind == "normal-discrete":
            theta = np.round(theta)
    elif kind == "normal-meanvar":
        xbar = x.mean(axis=0)
        theta = np.append(xbar, math.sqrt(np.sum((x - xbar) ** 2) / (model.params["D"] * N)))
    elif kind == "exponential":
        theta = np.array([N / float(x.sum())])
    elif kind == "uniform":
        theta = np.array([float(x.max())])
    elif kind == "poisson":
        theta = np.array([max(1.0, round(float(x.mean()) / model.params["dt"]))])
    elif kind == "mixture":
        theta, nll, boundary = _mixture_mle(model, x)
        return AicResult(nll + K, theta, boundary)
    else:
        raise NotSupportedError(kind)
    nll = -float(model.total_log_likelihood(x, theta[None, :])[0])
    return AicResult(nll + K, theta)


def aic(model: ModelSpec, data) -> float:
    return aic_details(model, data).aic


# --------------------------------------------------------------------------
# Lindley-Bartlett threshold
# --------------------------------------------------------------------------

def lindley_threshold(L: float, sigma: float, N, mode: str = "gpi", exact: bool = False) -> float:
    """Smallest |mean| (in units of sigma / sqrt(N)) at which the free-mean model wins.

    GPI mode gives sqrt(2), or with ``exact`` the finite-N value
    sqrt(2 K(N)) from the exact effective complexity. Normalised mode (flat
    prior 1/L over an interval of length L) gives sqrt(2 log M).
    """
    if L <= 0 or sigma <= 0 or N <= 0:
        raise InvalidInputError("L, sigma and N must be positive")
    if mode == "gpi":
        return math.sqrt(2 * float(oracles.effective_complexity("normal-mean", N))) if exact else math.sqrt(2)
    if mode == "normalized":
        delta = sigma / math.sqrt(N)
        log_M = math.log(L / delta) - 0.5 * math.log(2 * math.pi)
        if log_M <= 0:
            raise NotDefinedError("M <= 1: the normalised prior is narrower than the resolution")
        return math.sqrt(2 * log_M)
    raise InvalidInputError("mode must be gpi or normalized")


def lindley_crossing(L: float, sigma: float, N: int, mode: str = "gpi", step: float = 0.01,
                     seed: int = 0, scan_max: float = 8.0) -> float:
    """Brute-force crossing: scan the observed mean until the two evidences tie.

    Datasets share fixed centred residuals and differ only in their mean. The
    free-mean evidence is integrated numerically; the fixed-mean evidence is
    the likelihood. Returns the crossing in units of sigma / sqrt(N).
    """
    delta = sigma / math.sqrt(N)
    resid = np.random.default_rng(seed).standard_normal(N) * sigma
    resid -= resid.mean()
    null = zoo.normal_fixed(1, 0.0, sigma)
    alt = zoo.normal_mean(1, sigma)
    if mode == "gpi":
        prior = zoo.shape_prior(alt, zoo.gpi_log_c_for(alt, N), support=[(-math.inf, math.inf)])
    elif mode == "normalized":
        prior = zoo.shape_prior(alt, -math.log(L), support=[(-L / 2, L / 2)])
    else:
        raise InvalidInputError("mode must be gpi or normalized")

    def log_ratio(u):
        x = (resid + u * delta).reshape(-1, 1)
        return (log_evidence(alt, prior, x, method="quadrature").logZ
                - zoo.exact_log_evidence(null, x))

    grid = np.arange(0.0, scan_max + step / 2, step)
    prev = log_ratio(grid[0])
    for a, b in zip(grid[:-1], grid[1:]):
        cur = log_ratio(b)
        if prev < 0 <= cur:
            return float(brentq(log_ratio, a, b, xtol=1e-10))
        prev = cur
    raise NotDefinedError(f"no crossing below {scan_max} resolution units")
