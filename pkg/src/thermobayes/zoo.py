"""Concrete models, their priors, and exact evidence machinery.

Each factory returns a :class:`~thermobayes.core.ModelSpec`. Models whose
evidence has a closed form under a particular prior family record that family
in ``params["prior_family"]``; :func:`shape_prior`, :func:`conjugate_prior`
and friends build matching priors.

Registry strings look like ``"normal-conj:K=2,sigma=1,sigma_p=1"``; see
:func:`parse_model_id`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats
from scipy.special import logsumexp

from . import oracles
from .core import (
    ContinuousDim,
    DiscreteDim,
    DivergenceError,
    EvidenceEstimate,
    InvalidInputError,
    ModelSpec,
    NotSupportedError,
    ParamSpace,
    PriorSpec,
    as_dataset,
    replicate_rng,
)
from .special import lgamma

LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# Shared helpers
# --------------------------------------------------------------------------

def _normal_logpdf(x, mu, sigma):
    """(G, N) log densities of D-dim isotropic normals; mu (G, D), sigma (G,)."""
    D = x.shape[1]
    sq = (np.sum(x * x, axis=1)[None, :] - 2.0 * mu @ x.T + np.sum(mu * mu, axis=1)[:, None])
    sq = np.maximum(sq, 0.0)
    sig = np.asarray(sigma, dtype=float).reshape(-1, 1)
    return -0.5 * D * LOG_2PI - D * np.log(sig) - sq / (2.0 * sig * sig)


def _scatter(x):
    xbar = x.mean(axis=0)
    return xbar, float(np.sum((x - xbar) ** 2))


def _log_c(prior):
    try:
        return float(prior.params["log_c"])
    except (AttributeError, KeyError):
        raise InvalidInputError("closed-form evidence needs a prior carrying log_c") from None


def _chi2_quantile(u, dof):
    if dof <= 0:
        return np.zeros_like(u)
    return stats.chi2.ppf(u, dof)


def _draws(rng, reps):
    n = 1 if reps is None else int(reps)
    return n, rng.random(n)


def _finish(out, reps):
    return out[0] if reps is None else out


# --------------------------------------------------------------------------
# Normal models
# --------------------------------------------------------------------------

def normal_conjugate(K: int = 1, sigma: float = 1.0, mu_p=0.0, sigma_p: float = 1.0) -> ModelSpec:
    """K-dim normal with known sigma and a conjugate normal prior on the mean."""
    K = int(K)
    if K < 1 or sigma <= 0 or sigma_p <= 0:
        raise InvalidInputError("normal-conj needs K >= 1, sigma > 0, sigma_p > 0")
    mu_p = np.broadcast_to(np.asarray(mu_p, dtype=float), (K,)).copy()
    N0 = sigma ** 2 / sigma_p ** 2

    def log_density(x, thetas):
        return _normal_logpdf(x, np.atleast_2d(thetas), np.full(len(np.atleast_2d(thetas)), sigma))

    def logz(N, S, d2):
        return (-(K * N / 2) * (LOG_2PI + 2 * math.log(sigma)) - K / 2 * np.log((N + N0) / N0)
                - S / (2 * sigma ** 2) - 0.5 * (N * N0 / (N + N0)) * d2 / sigma ** 2)

    def exact(x, prior):
        xbar, S = _scatter(x)
        return float(logz(len(x), S, float(np.sum((xbar - mu_p) ** 2))))

    def evidence_sampler(theta0, sizes, prior, rng, reps=None):
        mu0 = np.broadcast_to(np.asarray(theta0, dtype=float), (K,))
        n, u = _draws(rng, reps)
        z = rng.standard_normal((n, K))
        out = np.empty((n, len(sizes)))
        for j, m in enumerate(sizes):
            if m == 0:
                out[:, j] = 0.0  # empty data: the proper prior integrates to one
                continue
            S = sigma ** 2 * _chi2_quantile(u, K * (m - 1))
            xbar = mu0 + sigma * z / math.sqrt(m)
            out[:, j] = logz(m, S, np.sum((xbar - mu_p) ** 2, axis=1))
        return _finish(out, reps)

    def window(x):
        xbar = x.mean(axis=0)
        half = 12 * sigma / math.sqrt(len(x))
        return [(v - half, v + half) for v in xbar]

    return ModelSpec(
        name=f"normal-conj:K={K},sigma={sigma:g},sigma_p={sigma_p:g}",
        param_space=ParamSpace(tuple(ContinuousDim(f"mu{i + 1}") for i in range(K))),
        obs_dim=K,
        log_density=log_density,
        sampler=lambda theta, n, rng: np.asarray(theta, float) + sigma * rng.standard_normal((n, K)),
        sufficient_stat=lambda x: np.append(*_scatter(np.atleast_2d(x))),
        exact_log_evidence=exact,
        log_evidence_sampler=evidence_sampler,
        fisher=lambda theta: np.eye(K) / sigma ** 2,
        posterior_window=window,
        params={"kind": "normal-conj", "K": K, "sigma": sigma, "mu_p": mu_p, "sigma_p": sigma_p,
                "N0": N0, "prior_family": "conjugate"},
    )


def normal_mean(D: int = 1, sigma: float = 1.0) -> ModelSpec:
    """D-dim normal with known sigma and unknown mean; prior family: constant c."""
    D = int(D)
    if D < 1 or sigma <= 0:
        raise InvalidInputError("normal-mean needs D >= 1 and sigma > 0")

    def log_density(x, thetas):
        th = np.atleast_2d(thetas)
        return _normal_logpdf(x, th, np.full(len(th), sigma))

    def logz(log_c, N, S):
        return (log_c - (D * N / 2) * (LOG_2PI + 2 * math.log(sigma))
                + D / 2 * math.log(2 * math.pi * sigma ** 2 / N) - S / (2 * sigma ** 2))

    def exact(x, prior):
        return float(logz(_log_c(prior), len(x), _scatter(x)[1]))

    def evidence_sampler(theta0, sizes, prior, rng, reps=None):
        n, u = _draws(rng, reps)
        lc = _log_c(prior)
        out = np.column_stack([logz(lc, m, sigma ** 2 * _chi2_quantile(u, D * (m - 1))) for m in sizes])
        return _finish(out, reps)

    def window(x):
        half = 12 * sigma / math.sqrt(len(x))
        return [(v - half, v + half) for v in x.mean(axis=0)]

    return ModelSpec(
        name=f"normal-mean:D={D},sigma={sigma:g}",
        param_space=ParamSpace(tuple(ContinuousDim(f"mu{i + 1}") for i in range(D))),
        obs_dim=D,
        log_density=log_density,
        sampler=lambda theta, n, rng: np.asarray(theta, float) + sigma * rng.standard_normal((n, D)),
        sufficient_stat=lambda x: np.append(*_scatter(np.atleast_2d(x))),
        exact_log_evidence=exact,
        log_evidence_sampler=evidence_sampler,
        fisher=lambda theta: np.eye(D) / sigma ** 2,
        posterior_window=window,
        params={"kind": "normal-mean", "D": D, "sigma": sigma, "prior_family": "shape"},
    )


def normal_meanvar(D: int = 1) -> ModelSpec:
    """D-dim normal with unknown mean vector and a common unknown sigma.

    Parameters are ``(mu_1, ..., mu_D, sigma)``; the prior family is
    ``c sigma^-(D+1)``.
    """
    D = int(D)
    if D < 1:
        raise InvalidInputError("normal-meanvar needs D >= 1")

    def log_density(x, thetas):
        th = np.atleast_2d(thetas)
        return _normal_logpdf(x, th[:, :D], th[:, D])

    def logz(log_c, N, S):
        if N < 2:
            raise DivergenceError("mean+variance evidence diverges at N=1", direction="sigma:lower")
        return (log_c - (D * N / 2) * LOG_2PI + D / 2 * math.log(2 * math.pi / N) - math.log(2.0)
                + lgamma(D * N / 2) - (D * N / 2) * np.log(S / 2))

    def exact(x, prior):
        return float(logz(_log_c(prior), len(x), _scatter(x)[1]))

    def evidence_sampler(theta0, sizes, prior, rng, reps=None):
        s0 = float(np.atleast_1d(theta0)[D])
        n, u = _draws(rng, reps)
        lc = _log_c(prior)
        out = np.column_stack([logz(lc, m, s0 ** 2 * _chi2_quantile(u, D * (m - 1))) for m in sizes])
        return _finish(out, reps)

    def fisher(theta):
        s = float(np.atleast_1d(theta)[D])
        return np.diag(np.append(np.full(D, 1 / s ** 2), 2 * D / s ** 2))

    def window(x):
        N = len(x)
        xbar, S = _scatter(x)
        s = math.sqrt(max(S / (D * N), 1e-300))
        half = 12 * s / math.sqrt(N)
        spread = math.exp(8 / math.sqrt(D * N))
        return [(v - half, v + half) for v in xbar] + [(s / spread, s * spread)]

    def sampler(theta, n, rng):
        th = np.asarray(theta, dtype=float)
        return th[:D] + th[D] * rng.standard_normal((n, D))

    return ModelSpec(
        name=f"normal-meanvar:D={D}",
        param_space=ParamSpace(tuple(ContinuousDim(f"mu{i + 1}") for i in range(D))
                               + (ContinuousDim("sigma", 0.0, np.inf, log_scale=True),)),
        obs_dim=D,
        log_density=log_density,
        sampler=sampler,
        sufficient_stat=lambda x: np.append(*_scatter(np.atleast_2d(x))),
        exact_log_evidence=exact,
        log_evidence_sampler=evidence_sampler,
        fisher=fisher,
        posterior_window=window,
        min_size=2,
        params={"kind": "normal-meanvar", "D": D, "prior_family": "shape"},
    )


def normal_fixed(D: int = 1, mu: float = 0.0, sigma: float = 1.0) -> ModelSpec:
    """Parameter-free normal; its evidence is the likelihood itself."""
    D = int(D)
    mu_v = np.broadcast_to(np.asarray(mu, dtype=float), (D,)).copy()

    def log_density(x, thetas):
        G = len(np.atleast_2d(thetas)) if np.size(thetas) else 1
        return np.repeat(_normal_logpdf(x, mu_v[None, :], [sigma]), G, axis=0)

    def loglik(x):
        return float(_normal_logpdf(x, mu_v[None, :], [sigma]).sum())

    def evidence_sampler(theta0, sizes, prior, rng, reps=None):
        n, u = _draws(rng, reps)
        out = np.column_stack([-(D * m / 2) * (LOG_2PI + 2 * math.log(sigma))
                               - 0.5 * _chi2_quantile(u, D * m) for m in sizes])
        return _finish(out, reps)

    return ModelSpec(
        name=f"normal-fixed:D={D},mu={float(mu_v[0]):g},sigma={sigma:g}",
        param_space=ParamSpace(),
        obs_dim=D,
        log_density=log_density,
        sampler=lambda theta, n, rng: mu_v + sigma * rng.standard_normal((n, D)),
        exact_log_evidence=lambda x, prior: loglik(x),
        log_evidence_sampler=evidence_sampler,
        fisher=lambda theta: np.zeros((0, 0)),
        params={"kind": "normal-fixed", "D": D, "mu": mu_v, "sigma": sigma, "prior_family": "none"},
    )


def normal_discrete(D: int = 1, sigma: float = 1.0) -> ModelSpec:
    """Normal with known sigma whose mean is restricted to the integer lattice."""
    D = int(D)
    if D < 1 or sigma <= 0:
        raise InvalidInputError("normal-discrete needs D >= 1 and sigma > 0")

    def log_density(x, thetas):
        th = np.atleast_2d(thetas)
        return _normal_logpdf(x, th, np.full(len(th), sigma))

    def window(x):
        half = 12 * sigma / math.sqrt(len(x)) + 2
        return [(math.floor(v - half), math.ceil(v + half)) for v in x.mean(axis=0)]

    return ModelSpec(
        name=f"normal-discrete:D={D},sigma={sigma:g}",
        param_space=ParamSpace(discrete=tuple(DiscreteDim(f"mu{i + 1}", 1.0) for i in range(D))),
        obs_dim=D,
        log_density=log_density,
        sampler=lambda theta, n, rng: np.asarray(theta, float) + sigma * rng.standard_normal((n, D)),
        sufficient_stat=lambda x: np.atleast_2d(x).mean(axis=0),
        fisher=lambda theta: np.eye(D) / sigma ** 2,
        posterior_window=window,
        params={"kind": "normal-discrete", "D": D, "sigma": sigma, "prior_family": "lattice"},
    )


# --------------------------------------------------------------------------
# Exponential and uniform-support models
# --------------------------------------------------------------------------

def exponential() -> ModelSpec:
    """Exponential with unknown rate; prior family c / lambda."""

    def log_density(x, thetas):
        lam = np.atleast_2d(thetas)[:, :1]
        return np.log(lam) - lam * x[:, 0][None, :]

    def loglik(x, thetas):
        lam = np.atleast_2d(thetas)[:, 0]
        return len(x) * np.log(lam) - lam * float(x.sum())

    def exact(x, prior):
        return float(_log_c(prior) + lgamma(len(x)) - len(x) * math.log(float(x.sum())))

    def evidence_sampler(theta0, sizes, prior, rng, reps=None):
        lam0 = float(np.atleast_1d(theta0)[0])
        n, u = _draws(rng, reps)
        lc = _log_c(prior)
        out = np.column_stack([lc + lgamma(m) - m * np.log(stats.gamma.ppf(u, m) / lam0) for m in sizes])
        return _finish(out, reps)

    def window(x):
        N = len(x)
        lam_hat = N / float(x.sum())
        f = math.exp(10 / math.sqrt(N))
        return [(lam_hat / f, lam_hat * f)]

    return ModelSpec(
        name="exponential",
        param_space=ParamSpace((ContinuousDim("lambda", 0.0, np.inf, log_scale=True),)),
        obs_dim=1,
        log_density=log_density,
        log_likelihood=loglik,
        sampler=lambda theta, n, rng: rng.exponential(1.0 / float(np.atleast_1d(theta)[0]), (n, 1)),
        in_support=lambda x: np.all(x > 0, axis=1),
        sufficient_stat=lambda x: np.array([np.sum(x)]),
        exact_log_evidence=exact,
        log_evidence_sampler=evidence_sampler,
        fisher=lambda theta: np.array([[1.0 / float(np.atleast_1d(theta)[0]) ** 2]]),
        posterior_window=window,
        params={"kind": "exponential", "prior_family": "shape"},
    )


def uniform_support() -> ModelSpec:
    """Uniform on [0, L] with unknown end point L; prior family c / L. Not regular."""

    def log_density(x, thetas):
        L = np.atleast_2d(thetas)[:, :1]
        xs = x[:, 0][None, :]
        out = np.broadcast_to(-np.log(L), (L.shape[0], xs.shape[1])).copy()
        out[(xs > L) | (xs < 0)] = -np.inf
        return out

    def loglik(x, thetas):
        L = np.atleast_2d(thetas)[:, 0]
        out = -len(x) * np.log(L)
        out[L < float(x.max())] = -np.inf
        return out

    def exact(x, prior):
        return float(_log_c(prior) - len(x) * math.log(float(x.max())) - math.log(len(x)))

    def evidence_sampler(theta0, sizes, prior, rng, reps=None):
        L0 = float(np.atleast_1d(theta0)[0])
        n, u = _draws(rng, reps)
        lc = _log_c(prior)
        # max of m uniforms is L0 u^(1/m), so -m log(max) = -m log L0 - log u for every m
        out = np.column_stack([lc - m * math.log(L0) - np.log(u) - math.log(m) for m in sizes])
        return _finish(out, reps)

    def window(x):
        mx = float(x.max())
        return [(mx, mx * math.exp(40.0 / len(x)))]

    return ModelSpec(
        name="uniform",
        param_space=ParamSpace((ContinuousDim("L", 0.0, np.inf, log_scale=True),)),
        obs_dim=1,
        log_density=log_density,
        log_likelihood=loglik,
        sampler=lambda theta, n, rng: rng.uniform(0.0, float(np.atleast_1d(theta)[0]), (n, 1)),
        in_support=lambda x: np.all(x >= 0, axis=1),
        sufficient_stat=lambda x: np.array([np.max(x)]),
        exact_log_evidence=exact,
        log_evidence_sampler=evidence_sampler,
        regular=False,
        posterior_window=window,
        data_support=lambda x: [(float(np.max(x)), np.inf)],
        params={"kind": "uniform", "prior_family": "shape"},
    )


# --------------------------------------------------------------------------
# Poisson stoichiometry
# --------------------------------------------------------------------------

def poisson_stoich(t: float = 10.0, b: float = 0.0, dt: float = 1.0, m_max: float = np.inf) -> ModelSpec:
    """Photon counts from m identical unit-rate emitters.

    One observation is the count in an interval of length ``dt``; N
    observations span duration ``t = N dt``. The stoichiometry m lives on
    {1, 2, ...}. Time is measured in units of the per-emitter rate, so the
    dimensionless duration is t itself. ``t`` is the default duration used by
    the statistic routes and the CLI.
    """
    if t <= 0 or b < 0 or dt <= 0:
        raise InvalidInputError("poisson needs t > 0, b >= 0, dt > 0")

    def log_density(x, thetas):
        m = np.atleast_2d(thetas)[:, :1]
        k = x[:, 0][None, :]
        return k * np.log(m * dt) - m * dt - lgamma(k + 1.0)

    def window(x):
        rate = float(x.sum()) / (len(x) * dt)
        half = 15 * math.sqrt(max(rate, 1.0) / (len(x) * dt)) + 5
        return [(max(1.0, math.floor(rate - half)), math.ceil(rate + half))]

    return ModelSpec(
        name=f"poisson:t={t:g},b={b:g}",
        param_space=ParamSpace(discrete=(DiscreteDim("m", 1.0, 1.0, m_max),)),
        obs_dim=1,
        log_density=log_density,
        sampler=lambda theta, n, rng: rng.poisson(float(np.atleast_1d(theta)[0]) * dt, (n, 1)).astype(float),
        in_support=lambda x: np.all((x >= 0) & (x == np.round(x)), axis=1),
        sufficient_stat=lambda x: np.array([np.sum(x)]),
        fisher=lambda theta: np.array([[dt / float(np.atleast_1d(theta)[0])]]),
        posterior_window=window,
        params={"kind": "poisson", "t": t, "b": b, "dt": dt, "prior_family": "lattice"},
    )


@functools.lru_cache(maxsize=None)
def _eulerian_row(k: int) -> tuple:
    """Eulerian numbers A(k, j), j = 0..k-1, as exact integers."""
    row = [1]
    for n in range(2, k + 1):
        new = [0] * n
        for j in range(n):
            a = (j + 1) * row[j] if j < len(row) else 0
            c = (n - j) * row[j - 1] if j >= 1 else 0
            new[j] = a + c
        row = new
    return tuple(row)


def _log_eulerian(k: int) -> np.ndarray:
    return np.array([math.log(a) for a in _eulerian_row(k)])


def _log1mexp(s):
    """log(1 - e^-s) for s > 0."""
    return math.log(-math.expm1(-s)) if s < 0.6931 else math.log1p(-math.exp(-s))


def _poisson_direct(k, t, s):
    # terms k log(m t) - m s - log k!, concave in m with peak at k/s
    peak = max(1.0, k / s)
    width = math.sqrt(k + 1.0) / s + 1.0 / s
    lo = max(1, int(peak - 40 * width))
    hi = int(peak + 40 * width) + 2
    total = -np.inf
    while True:
        m = np.arange(lo, hi + 1, dtype=float)
        terms = k * np.log(m * t) - m * s
        total = np.logaddexp(total, logsumexp(terms))
        if terms[-1] < total - 46 or terms[-1] < terms[-2] - 1e3:
            break
        lo, hi = hi + 1, hi + 2 * (hi - lo + 1)
    return float(total - lgamma(k + 1.0))


def _poisson_recursion(k, t, s):
    # sum_m m^k x^m = x A_k(x) / (1-x)^(k+1), A_k the Eulerian polynomial
    if k == 0:
        return -s - _log1mexp(s)
    la = _log_eulerian(k)
    logA = logsumexp(la - s * np.arange(k))
    return float(k * math.log(t) - lgamma(k + 1.0) - s + logA - (k + 1) * _log1mexp(s))


def _resummed_bracket_mp(k, s):
    def bracket(dps):
        with mpmath.workdps(dps):
            a = 1 + mpmath.mpf(s) / (2j * mpmath.pi)
            val = mpmath.mpf(s) ** (k + 1) * (2j * mpmath.pi) ** (-(k + 1)) * mpmath.zeta(k + 1, a)
            return 1 + 2 * mpmath.re(val)

    dps = 30
    for _ in range(12):
        b1, b2 = bracket(dps), bracket(dps + 25)
        if b2 != 0 and abs(b1 - b2) <= 1e-14 * abs(b2):
            return float(mpmath.log(b2))
        lost = -float(mpmath.log10(abs(b2))) if b2 != 0 else dps
        dps = max(2 * dps, int(lost) + 40)
    raise ArithmeticError("resummed series did not stabilise")


def _poisson_resummed(k, t, s):
    if k == 0:
        # the m=0 jump contributes the Poisson-summation midpoint value 1/2
        return -math.log(math.expm1(s))
    lead = k * math.log(t) - (k + 1) * math.log(s)
    if k / t ** 2 > 0.1:
        return lead + math.log(_resummed_bracket_float(k, s))
    return lead + _resummed_bracket_mp(k, s)


_EM_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)


def _resummed_bracket_float(k, s):
    """1 + 2 Re sum_{nu>=1} (1 + 2 pi i nu / s)^-(k+1), explicit to V then Euler-Maclaurin."""
    V = max(32, 2 * k)
    nu = np.arange(1, V)
    head = np.sum((1 + 2j * np.pi * nu / s) ** (-(k + 1)))

    def g(v, r):
        # r-th derivative in nu of (1 + 2 pi i v / s)^-(k+1)
        coef = math.prod(range(k + 1, k + 1 + r)) if r else 1
        return (-1) ** r * coef * (2j * np.pi / s) ** r * (1 + 2j * np.pi * v / s) ** (-(k + 1 + r))

    integral = (1 + 2j * np.pi * V / s) ** (-k) * s / (2j * np.pi * k)
    tail = integral + 0.5 * g(V, 0)
    fact = 1.0
    for j, b in enumerate(_EM_BERNOULLI, start=1):
        fact *= (2 * j - 1) * (2 * j)
        tail -= b / fact * g(V, 2 * j - 1)
    return 1.0 + 2.0 * (head + tail).real


POISSON_MODES = ("directSum", "resummed", "recursion", "auto")


def log_poisson_statistic_partition(k: int, t: float, b: float = 0.0, mode: str = "auto") -> float:
    """log z(k; t) = log sum_{m>=1} e^{-m t} (m t)^k / k! e^{-b m}.

    ``auto`` takes the recursion for k <= 50, the resummed series when
    k / t^2 > 0.1, and the direct sum otherwise. Outside k / t^2 > 0.1 the
    resummed series is evaluated with extended precision.
    """
    k = int(k)
    if k < 0 or t <= 0 or b < 0:
        raise InvalidInputError("need k >= 0, t > 0, b >= 0")
    s = b + t
    if mode == "auto":
        mode = "recursion" if k <= 50 else ("resummed" if k / t ** 2 > 0.1 else "directSum")
    if mode == "directSum":
        return _poisson_direct(k, t, s)
    if mode == "recursion":
        return _poisson_recursion(k, t, s)
    if mode == "resummed":
        return _poisson_resummed(k, t, s)
    raise InvalidInputError(f"mode must be one of {POISSON_MODES}")


def poisson_statistic_partition(k: int, t: float, b: float = 0.0, mode: str = "auto") -> float:
    return math.exp(log_poisson_statistic_partition(k, t, b, mode))


def _poisson_statistic_G(m0_values, t, log_z_fn):
    """-E log z(k;t) - H_k for each true m0 (the N-linear entropy part removed)."""
    m0_values = np.asarray(m0_values, dtype=float)
    lam = m0_values * t
    lo = max(0, int(np.min(lam) - 15 * math.sqrt(np.min(lam)) - 15))
    hi = int(np.max(lam) + 15 * math.sqrt(np.max(lam)) + 15)
    k = np.arange(lo, hi + 1, dtype=float)
    lz = log_z_fn(k, t)
    lp = k[None, :] * np.log(lam)[:, None] - lam[:, None] - lgamma(k + 1.0)[None, :]
    p = np.exp(lp)
    with np.errstate(invalid="ignore"):
        plp = np.where(p > 0, p * lp, 0.0)
    return -p @ lz + plp.sum(axis=1)


def _grid_log_z(m_grid, log_w):
    m_grid = np.asarray(m_grid, dtype=float)

    def fn(k, t):
        k = np.asarray(k, dtype=float)
        terms = (k[:, None] * np.log(m_grid[None, :] * t) - m_grid[None, :] * t
                 + log_w[None, :] - lgamma(k + 1.0)[:, None])
        return logsumexp(terms, axis=1)

    return fn


def _lattice_log_z(b):
    cache = {}

    def fn(k, t):
        out = np.empty(len(k))
        for i, kk in enumerate(k):
            key = (int(kk), float(t))
            if key not in cache:
                cache[key] = log_poisson_statistic_partition(int(kk), t, b)
            out[i] = cache[key]
        return out

    return fn


# --------------------------------------------------------------------------
# Integer-mean normal: theta-function statistic partition
# --------------------------------------------------------------------------

THETA_MODES = ("direct", "resummed", "auto")


def log_theta_statistic_partition(tstat, N, mode: str = "auto", sigma: float = 1.0):
    """log z(t; N) = log sum_m (n/2pi)^(1/2) exp(-n (t - m)^2 / 2), n = N / sigma^2.

    ``direct`` sums lattice terms in log space; ``resummed`` uses the Jacobi
    triple product of the reciprocal-space series (nome exp(-2 pi^2 / n));
    ``auto`` uses ``direct`` above n = 100.
    """
    if N <= 0:
        raise InvalidInputError("N must be positive")
    n = N / sigma ** 2
    t = np.asarray(tstat, dtype=float)
    if mode == "auto":
        mode = "direct" if n > 100 else "resummed"
    if mode == "direct":
        half = int(math.ceil(math.sqrt(2 * 60 / n))) + 2
        frac = t - np.round(t)
        m = np.arange(-half, half + 1, dtype=float)
        out = 0.5 * math.log(n / (2 * math.pi)) + logsumexp(-n * (frac[..., None] - m) ** 2 / 2, axis=-1)
    elif mode == "resummed":
        a = 2 * math.pi ** 2 / n
        mmax = int(40.0 / (2 * a)) + 2
        m = np.arange(1, mmax + 1, dtype=float)
        euler = np.sum(np.log(-np.expm1(-2 * a * m)))
        one_minus_q = -np.expm1(-a * (2 * m - 1))
        q = np.exp(-a * (2 * m - 1))
        c2 = np.cos(math.pi * t)[..., None] ** 2
        out = euler + np.sum(np.log(one_minus_q ** 2 + 4 * q * c2), axis=-1)
    else:
        raise InvalidInputError(f"mode must be one of {THETA_MODES}")
    return float(out) if np.ndim(out) == 0 else out


def theta_statistic_partition(tstat, N, mode: str = "auto", sigma: float = 1.0):
    return np.exp(log_theta_statistic_partition(tstat, N, mode, sigma))


def _periodic_nodes(n):
    return int(64 + 16 * math.ceil(math.sqrt(n)))


def discrete_mean_expected_log_z(N, sigma: float = 1.0, mu0: float = 0.0) -> float:
    """E[log z(t; N)] for one coordinate, t ~ N(mu0, sigma^2/N), unit lattice weights.

    The law of t modulo 1 is the wrapped normal z(u - mu0), so the average is a
    one-period integral of z log z, done by the periodic trapezoid rule.
    """
    n = N / sigma ** 2
    M = _periodic_nodes(n)
    u = (np.arange(M) + 0.5) / M
    lz = log_theta_statistic_partition(u, N, "auto", sigma)
    dens = theta_statistic_partition(u - mu0, N, "auto", sigma)
    return float(np.mean(dens * lz))


def _discrete_normal_grid_log_z(m_grid, log_w, sigma):
    m_grid = np.asarray(m_grid, dtype=float)

    def fn(t, N):
        n = N / sigma ** 2
        terms = (0.5 * math.log(n / (2 * math.pi)) - n * (t[..., None] - m_grid) ** 2 / 2 + log_w)
        return logsumexp(terms, axis=-1)

    return fn


def _discrete_normal_G(mu0_values, N, sigma, log_z_fn=None):
    """Per coordinate: -E log z - H_t + N H0 is G; returns -E log z - H_t."""
    n = N / sigma ** 2
    Ht = 0.5 * (LOG_2PI + 1 - math.log(n))
    out = np.empty(len(mu0_values))
    for i, mu0 in enumerate(mu0_values):
        if log_z_fn is None:
            elz = discrete_mean_expected_log_z(N, sigma, mu0)
        else:
            u = np.linspace(-12, 12, 2401)
            w = np.exp(-u * u / 2) / math.sqrt(2 * math.pi) * (u[1] - u[0])
            elz = float(np.dot(w, log_z_fn(mu0 + u / math.sqrt(n), N)))
        out[i] = -elz - Ht
    return out


# --------------------------------------------------------------------------
# Statistic-route thermodynamics (integer-mean normal, Poisson)
# --------------------------------------------------------------------------

def _stencil(fn, N, h):
    vals = {j: fn(N + j * h) for j in (-2, -1, 0, 1, 2)}
    d1 = (-vals[2] + 8 * vals[1] - 8 * vals[-1] + vals[-2]) / (12 * h)
    d2 = (-vals[2] + 16 * vals[1] - 30 * vals[0] + 16 * vals[-1] - vals[-2]) / (12 * h * h)
    return vals[0], d1, d2


def _statistic_G_fn(model, theta0_values, prior):
    """Function N -> array of statistic-route G values (linear N H0 part removed)."""
    kind = model.params["kind"]
    if kind == "poisson":
        dt = model.params["dt"]
        if prior is None or prior.representation != "grid":
            b = model.params["b"] if prior is None else prior.params.get("b", 0.0)
            lz = _lattice_log_z(b)
        else:
            lz = _grid_log_z(prior.grid_points[0], prior.log_weights)
        return lambda N: _poisson_statistic_G(theta0_values, N * dt, lz)
    if kind == "normal-discrete":
        D, sigma = model.params["D"], model.params["sigma"]
        if prior is None or prior.representation != "grid":
            lz = None
        else:
            lz = _discrete_normal_grid_log_z(prior.grid_points[0], prior.log_weights, sigma)
        return lambda N: D * _discrete_normal_G(theta0_values, N, sigma, lz)
    raise NotSupportedError(f"{model.name} has no sufficient-statistic route")


def _entropy_H0(model, theta0):
    if model.params["kind"] == "normal-discrete":
        return oracles.normal_entropy(model.params["D"], model.params["sigma"])
    return 0.0


def statistic_thermo_many(model, theta0_values, N, prior=None):
    """F, U, C, S arrays over many true parameters via the statistic route.

    Uses continuous sample-size derivatives (the statistic route accepts real
    N). For the Poisson model the per-trial entropy H0, which grows without
    bound as the trial length shrinks, is omitted from F and U; C and S do not
    depend on it.
    """
    theta0_values = np.atleast_1d(np.asarray(theta0_values, dtype=float))
    fn = _statistic_G_fn(model, theta0_values, prior)
    h = 0.02 * N
    G, d1, d2 = _stencil(fn, float(N), h)
    H0 = _entropy_H0(model, theta0_values[0])
    return G / N + H0, d1 + H0, -N * N * d2, N * d1 - G


def statistic_thermo(model, theta0, N, prior=None) -> oracles.AnalyticThermo:
    th = np.atleast_1d(np.asarray(theta0, dtype=float))
    if model.params["kind"] == "normal-discrete" and not np.allclose(th, th[0]):
        # coordinates factorise; sum the one-dimensional pieces
        parts = [statistic_thermo(normal_discrete(1, model.params["sigma"]), [v], N, prior) for v in th]
        return oracles.AnalyticThermo(N, *[float(sum(getattr(p, f) for p in parts))
                                           for f in ("Fbar", "Ubar", "Cbar", "Sbar")])
    F, U, C, S = statistic_thermo_many(model, th[:1], N, prior)
    return oracles.AnalyticThermo(N, float(F[0]), float(U[0]), float(C[0]), float(S[0]))


def sufficient_free_energy(model, theta0, N, prior=None) -> float:
    """F = -(1/N) E log z(t; N) + H0 - H_t / N via the sufficient statistic."""
    th = np.atleast_1d(np.asarray(theta0, dtype=float))
    fn = _statistic_G_fn(model, th[:1], prior)
    if model.params["kind"] == "normal-discrete" and not np.allclose(th, th[0]):
        return float(sum(sufficient_free_energy(normal_discrete(1, model.params["sigma"]), [v], N, prior)
                         for v in th))
    return float(fn(float(N))[0] / N + _entropy_H0(model, th[0]))


def poisson_posterior(k: int, t: float, m_values, b: float = 0.0) -> np.ndarray:
    """Posterior over stoichiometries given count k in duration t, prior e^{-b m}."""
    m = np.asarray(m_values, dtype=float)
    lp = k * np.log(m * t) - m * (t + b) - lgamma(k + 1.0)
    return np.exp(lp - log_poisson_statistic_partition(k, t, b))


# --------------------------------------------------------------------------
# Two-component exponential mixture
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureGrid:
    """Integration grid for the mixture evidence: Gauss-Legendre in p1 and a
    log-spaced trapezoid in (k1, k2) over the ordered wedge k1 <= k2."""

    kmin: float = 0.1
    kmax: float = 100.0
    n_k: int = 201
    n_p: int = 52

    def nodes(self, symmetric: bool = True):
        xp, wp = leggauss(self.n_p)
        p = 0.5 * (xp + 1)
        wp = 0.5 * wp
        u = np.linspace(math.log(self.kmin), math.log(self.kmax), self.n_k)
        wu = np.full(self.n_k, u[1] - u[0])
        wu[[0, -1]] *= 0.5
        k = np.exp(u)
        lk = np.log(wu) + u  # dk = k du
        i, j = np.triu_indices(self.n_k) if symmetric else np.indices((self.n_k, self.n_k)).reshape(2, -1)
        pair_lw = lk[i] + lk[j]
        if symmetric:
            pair_lw = pair_lw + np.where(i == j, math.log(0.5), 0.0) + math.log(2.0)
        P = np.repeat(p, len(i))
        thetas = np.column_stack([P, np.tile(k[i], self.n_p), np.tile(k[j], self.n_p)])
        logw = np.repeat(np.log(wp), len(i)) + np.tile(pair_lw, self.n_p)
        return thetas, logw


def _mixture_log_density(x, thetas):
    th = np.atleast_2d(thetas)
    p, k1, k2 = th[:, :1], th[:, 1:2], th[:, 2:3]
    xs = x[:, 0][None, :]
    with np.errstate(divide="ignore"):
        a = np.log(p) + np.log(k1) - k1 * xs
        b = np.log1p(-p) + np.log(k2) - k2 * xs
    return np.logaddexp(a, b)


def _tiled_pairs(th):
    """Length of the repeating (k1, k2) block when thetas are p-major tiles, else 0."""
    n = int(np.argmax(th[:, 0] != th[0, 0])) or len(th)
    if len(th) % n:
        return 0
    blocks = th.reshape(-1, n, 3)
    if np.array_equal(blocks[:, :, 1:], np.broadcast_to(blocks[:1, :, 1:], blocks[:, :, 1:].shape)) \
            and np.all(blocks[:, :, 0] == blocks[:, :1, 0]):
        return n
    return 0


def _mixture_log_likelihood(x, thetas):
    """Total log likelihood per theta; exponentials are shared across p values."""
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = _tiled_pairs(th)
    if n:
        rates = th[:n, 1:3]
    else:
        rates, pair = np.unique(th[:, 1:3], axis=0, return_inverse=True)
        pair = pair.reshape(-1)
    xs = x[:, 0][None, :]
    la = np.log(rates[:, :1]) - rates[:, :1] * xs
    lb = np.log(rates[:, 1:2]) - rates[:, 1:2] * xs
    top = np.maximum(la, lb)
    ea, eb = np.exp(la - top), np.exp(lb - top)
    shift = top.sum(axis=1)
    out = np.empty(len(th))
    p = th[:, 0]
    with np.errstate(divide="ignore"):
        if n:
            diff = ea - eb
            for s in range(0, len(th), n):
                out[s:s + n] = np.log(eb + p[s] * diff).sum(axis=1) + shift
            return out
        for s in range(0, len(th), 4096):
            sl = slice(s, s + 4096)
            idx = pair[sl]
            pp = p[sl, None]
            out[sl] = np.log(pp * ea[idx] + (1 - pp) * eb[idx]).sum(axis=1) + shift[idx]
    return out


def exp_mixture(kmin: float = 0.1, kmax: float = 100.0, n_k: int = 201, n_p: int = 52) -> ModelSpec:
    """q(x) = p k1 e^{-k1 x} + (1 - p) k2 e^{-k2 x}; parameters (p, k1, k2).

    The improper flat prior needs a declared window for k; evidence values
    depend on it, learning capacities much less so.
    """
    grid = MixtureGrid(kmin, kmax, n_k, n_p)
    cache = {}

    def evidence_grid(data, prior, **_):
        if "nodes" not in cache:
            cache["nodes"] = grid.nodes()
        return cache["nodes"]

    def sampler(theta, n, rng):
        p, k1, k2 = np.asarray(theta, dtype=float)
        first = rng.random(n) < p
        rate = np.where(first, k1, k2)
        return (rng.exponential(1.0, n) / rate).reshape(-1, 1)

    def observation_quadrature(theta0, n):
        # Gauss-Legendre in log x: the predictive density has structure on every
        # scale from 1/kmax to 1/kmin, which Laguerre nodes resolve poorly
        th = np.asarray(theta0, dtype=float)
        rates = [k for weight, k in ((th[0], th[1]), (1 - th[0], th[2])) if weight > 0]
        lo, hi = math.log(1e-12 / max(rates)), math.log(60.0 / min(rates))
        u, w = leggauss(n)
        v = 0.5 * (hi - lo) * u + 0.5 * (hi + lo)
        x = np.exp(v).reshape(-1, 1)
        dens = np.exp(_mixture_log_density(x, th[None, :])[0])
        w = 0.5 * (hi - lo) * w * dens * x[:, 0]
        return x, w / w.sum()

    return ModelSpec(
        name=f"mixture:kmin={kmin:g},kmax={kmax:g},n_k={n_k}",
        param_space=ParamSpace((ContinuousDim("p1", 0.0, 1.0),
                                ContinuousDim("k1", kmin, kmax, log_scale=True),
                                ContinuousDim("k2", kmin, kmax, log_scale=True))),
        obs_dim=1,
        log_density=_mixture_log_density,
        log_likelihood=_mixture_log_likelihood,
        sampler=sampler,
        in_support=lambda x: np.all(x > 0, axis=1),
        evidence_grid=evidence_grid,
        observation_quadrature=observation_quadrature,
        regular=False,
        params={"kind": "mixture", "grid": grid, "prior_family": "window"},
    )


MIXTURE_POINTS = {"S": (1.0, 1.0, 10.0), "R": (0.5, 1.0, 10.0)}


def mixture_log_evidence(data, grid: MixtureGrid = MixtureGrid(), symmetric: bool = True,
                         estimate_error: bool = True) -> EvidenceEstimate:
    """log Z of the two-component mixture under the flat prior on the grid window.

    The error bound compares against the grid with the k-spacing doubled.
    """
    x = np.asarray(data, dtype=float).reshape(-1, 1)
    if np.any(x <= 0):
        raise InvalidInputError("mixture data must be positive")

    def evaluate(g):
        thetas, logw = g.nodes(symmetric)
        ll = _mixture_log_likelihood(x, thetas)
        return float(logsumexp(ll + logw))

    n_p = max(grid.n_p, len(x) // 2 + 2)
    g = MixtureGrid(grid.kmin, grid.kmax, grid.n_k, n_p)
    logZ = evaluate(g)
    err = 0.0
    if estimate_error:
        coarse = MixtureGrid(grid.kmin, grid.kmax, (grid.n_k + 1) // 2, n_p)
        err = abs(logZ - evaluate(coarse))
    return EvidenceEstimate(logZ, "quadrature", err)


# --------------------------------------------------------------------------
# Priors
# --------------------------------------------------------------------------

def conjugate_prior(model: ModelSpec) -> PriorSpec:
    p = model.params
    if p["kind"] != "normal-conj":
        raise NotSupportedError("conjugate prior only for normal-conj")
    mu_p, sp, K = p["mu_p"], p["sigma_p"], p["K"]

    def log_density(thetas):
        th = np.atleast_2d(thetas)
        return (-0.5 * K * (LOG_2PI + 2 * math.log(sp))
                - np.sum((th - mu_p) ** 2, axis=1) / (2 * sp * sp))

    return PriorSpec(log_density, proper=True, name="conjugate",
                     params={"family": "conjugate", "mu_p": mu_p, "sigma_p": sp},
                     sampler=lambda rng: mu_p + sp * rng.standard_normal(K))


def shape_prior(model: ModelSpec, log_c: float, sample_size=None, name: str = "shape",
                support=None) -> PriorSpec:
    """c times the symmetry-fixed shape: 1 (flat mean), sigma^-(D+1), 1/lambda, 1/L.

    ``support`` optionally truncates the prior to a box (list of (lo, hi)).
    Closed-form evidence applies only to the untruncated prior.
    """
    kind = model.params["kind"]
    if kind == "normal-mean":
        def shape(th):
            return np.zeros(len(th))
    elif kind == "normal-meanvar":
        D = model.params["D"]

        def shape(th):
            return -(D + 1) * np.log(th[:, D])
    elif kind in ("exponential", "uniform"):
        def shape(th):
            return -np.log(th[:, 0])
    else:
        raise NotSupportedError(f"no symmetry-fixed prior shape for {kind}")

    def log_density(thetas):
        th = np.atleast_2d(np.asarray(thetas, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = log_c + shape(th)
        if support is not None:
            for j, (lo, hi) in enumerate(support):
                out[(th[:, j] < lo) | (th[:, j] > hi)] = -np.inf
        return out

    family = "shape" if support is None else "shape-truncated"
    return PriorSpec(log_density, proper=False, sample_size=sample_size, name=name,
                     params={"family": family, "log_c": float(log_c), "support": support})


def gpi_log_c_for(model: ModelSpec, N) -> float:
    kind = model.params["kind"]
    if kind == "normal-mean":
        return float(oracles.gpi_log_c(kind, N, model.params["D"], model.params["sigma"]))
    if kind == "normal-meanvar":
        if N < 2:
            raise DivergenceError("GPI normalisation diverges below N=2", direction="sample size")
        return float(oracles.gpi_log_c(kind, N, model.params["D"]))
    if kind in ("exponential", "uniform"):
        return float(oracles.gpi_log_c(kind, N))
    raise NotSupportedError(f"no closed-form GPI normalisation for {kind}")


def gpi_prior(model: ModelSpec, N) -> PriorSpec:
    """Exact GPI prior at sample size N for the symmetric closed-form models."""
    if model.params["kind"] == "normal-fixed":
        return null_prior()
    return shape_prior(model, gpi_log_c_for(model, N), sample_size=N, name=f"gpi(N={N})")


def null_prior() -> PriorSpec:
    """Prior over an empty parameter space."""
    return PriorSpec(lambda th: np.zeros(len(np.atleast_2d(th))), proper=True, name="none",
                     params={"family": "none"})


def lattice_prior(model: ModelSpec, b: float = 0.0) -> PriorSpec:
    """exp(-b m) weights on the lattice (unit weights when b = 0)."""
    def log_density(thetas):
        th = np.atleast_2d(thetas)
        return -b * th[:, 0] if b else np.zeros(len(th))

    return PriorSpec(log_density, proper=False, name=f"lattice(b={b:g})",
                     params={"family": "lattice", "b": b})


def window_prior(model: ModelSpec) -> PriorSpec:
    """Flat prior inside the mixture model's k-window."""
    g = model.params["grid"]

    def log_density(thetas):
        th = np.atleast_2d(thetas)
        inside = ((th[:, 0] >= 0) & (th[:, 0] <= 1) & (th[:, 1] >= g.kmin) & (th[:, 1] <= g.kmax)
                  & (th[:, 2] >= g.kmin) & (th[:, 2] <= g.kmax))
        return np.where(inside, 0.0, -np.inf)

    return PriorSpec(log_density, proper=False, name="window", params={"family": "window"})


def default_prior(model: ModelSpec, N=None) -> PriorSpec:
    kind = model.params["kind"]
    if kind == "normal-conj":
        return conjugate_prior(model)
    if kind in ("normal-mean", "normal-meanvar", "exponential", "uniform"):
        if N is None:
            raise InvalidInputError(f"{kind} default prior is the N-dependent GPI prior; pass N")
        return gpi_prior(model, N)
    if kind == "normal-fixed":
        return null_prior()
    if kind in ("normal-discrete", "poisson"):
        return lattice_prior(model, model.params.get("b", 0.0))
    if kind == "mixture":
        return window_prior(model)
    raise NotSupportedError(kind)


# --------------------------------------------------------------------------
# Zoo-level operations
# --------------------------------------------------------------------------

def exact_log_evidence(model: ModelSpec, data, prior: PriorSpec = None) -> float:
    """Closed-form log Z; the prior defaults to the exact GPI prior at N = len(data)."""
    if model.exact_log_evidence is None:
        raise NotSupportedError(f"{model.name} has no closed-form evidence")
    x = as_dataset(model, data)
    if prior is None:
        prior = default_prior(model, len(x))
    if len(x) < model.min_size:
        raise DivergenceError(f"{model.name} evidence diverges at N={len(x)}", direction="sample size")
    return float(model.exact_log_evidence(x, prior))


def sample_log_evidence(model: ModelSpec, theta0, N: int, seed: int, prior: PriorSpec = None,
                        reps=None):
    """Draw log Z(X^N) from its exact distribution without materialising data.

    ``reps`` draws are returned as an array (one stream per seed); the default
    returns a single float.
    """
    if model.log_evidence_sampler is None:
        raise NotSupportedError(f"{model.name} has no evidence-distribution sampler")
    if prior is None:
        prior = default_prior(model, N)
    rng = replicate_rng(seed, 0)
    out = model.log_evidence_sampler(np.atleast_1d(np.asarray(theta0, dtype=float)),
                                     np.array([N]), prior, rng, reps=reps)
    return float(out[0]) if reps is None else np.asarray(out)[:, 0]


# --------------------------------------------------------------------------
# Registry
# --------------------------------------------------------------------------

_THETA_KEYS = {
    "normal-conj": ("mu0",),
    "normal-mean": ("mu0",),
    "normal-discrete": ("mu0",),
    "normal-meanvar": ("mu0", "sigma0"),
    "exponential": ("lam0",),
    "uniform": ("L0",),
    "poisson": ("m0",),
    "mixture": ("p0", "k10", "k20"),
}

_FACTORIES = {
    "normal-conj": (normal_conjugate, {"K": int, "sigma": float, "mu_p": float, "sigma_p": float}),
    "normal-mean": (normal_mean, {"D": int, "sigma": float}),
    "normal-discrete": (normal_discrete, {"D": int, "sigma": float}),
    "normal-meanvar": (normal_meanvar, {"D": int}),
    "normal-fixed": (normal_fixed, {"D": int, "mu": float, "sigma": float}),
    "exponential": (exponential, {}),
    "uniform": (uniform_support, {}),
    "poisson": (poisson_stoich, {"t": float, "b": float, "dt": float}),
    "mixture": (exp_mixture, {"kmin": float, "kmax": float, "n_k": int, "n_p": int}),
}

MODEL_IDS = tuple(_FACTORIES)


def parse_model_id(spec: str):
    """Parse ``"name:key=value,..."`` into ``(model, theta0 or None)``.

    True-parameter keys (``mu0``, ``sigma0``, ``lam0``, ``L0``, ``m0``, ``p0``,
    ``k10``, ``k20``, or ``point=S|R`` for the mixture) set theta0.
    """
    name, _, rest = spec.strip().partition(":")
    if name not in _FACTORIES:
        raise InvalidInputError(f"unknown model '{name}'; known: {', '.join(MODEL_IDS)}")
    factory, types = _FACTORIES[name]
    kwargs, theta = {}, {}
    point = None
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise InvalidInputError(f"malformed parameter '{item}' in '{spec}'")
        if key in types:
            try:
                kwargs[key] = types[key](float(val)) if types[key] is int else types[key](val)
            except ValueError:
                raise InvalidInputError(f"bad value for {key}: {val}") from None
        elif key in _THETA_KEYS.get(name, ()):
            theta[key] = float(val)
        elif name == "mixture" and key == "point":
            if val not in MIXTURE_POINTS:
                raise InvalidInputError("mixture point must be S or R")
            point = MIXTURE_POINTS[val]
        else:
            raise InvalidInputError(f"unknown parameter '{key}' for model {name}")
    model = factory(**kwargs)
    theta0 = None
    if point is not None:
        theta0 = np.array(point)
    elif theta:
        keys = _THETA_KEYS[name]
        if set(keys) - set(theta):
            raise InvalidInputError(f"{name} needs all of {keys} to set the true parameter")
        vals = [theta[k] for k in keys]
        if name in ("normal-conj", "normal-mean", "normal-discrete"):
            dim = model.obs_dim
            theta0 = np.full(dim, vals[0])
        elif name == "normal-meanvar":
            theta0 = np.append(np.full(model.params["D"], vals[0]), vals[1])
        else:
            theta0 = np.array(vals)
    return model, theta0
