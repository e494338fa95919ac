"""Closed-form thermodynamic potentials used as ground truth.

Every formula is written out by hand from its derivation; the only numerical
dependencies are the special functions in :mod:`thermobayes.special`.

Sample sizes may be real-valued here. Two derivative conventions exist:

``"discrete"``
    the central/forward sample-size differences used by :mod:`thermobayes.core`,
    so Monte Carlo estimates can be compared without bias;
``"continuous"``
    ``C = -N^2 d^2G/dN^2``, ``U = dG/dN``, ``S = N dG/dN - G``, the smooth
    curves one plots against real N.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .special import digamma, digamma_diff, lgamma, lgamma_diff, tetragamma, trigamma

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class AnalyticThermo:
    N: float
    Fbar: float
    Ubar: float
    Cbar: float
    Sbar: float
    Keff: float = np.nan


# --------------------------------------------------------------------------
# Table of closed forms for the large-N regular/singular columns
# --------------------------------------------------------------------------

def table2_thermo(kind: str, N: float, **p) -> tuple:
    """(F, U, C, S) for ``free-particle`` (K, E0, beta0; N is the inverse
    temperature), ``normal-prior`` (K, H0, N0) or ``singular`` (gamma, H0)."""
    if kind == "free-particle":
        K, E0, b0 = p["K"], p["E0"], p["beta0"]
        return (E0 + K / (2 * N) * np.log(N / b0), E0 + K / (2 * N), K / 2,
                K / 2 * (1 - np.log(N / b0)))
    if kind == "normal-prior":
        K, H0, N0 = p["K"], p["H0"], p["N0"]
        return (H0 + K / (2 * N) * np.log(N / N0), H0 + K / (2 * N), K / 2,
                K / 2 * (1 - np.log(N / N0)))
    if kind == "singular":
        g, H0 = p["gamma"], p["H0"]
        return H0 + g / (2 * N) * np.log(N), H0 + g / (2 * N), g / 2, -g / 2 * np.log(N)
    raise ValueError(f"unknown column {kind}")


def conjugate_learning_capacity(K, N, N0):
    return K / (2.0 * (1.0 + N0 / N) ** 2)


# --------------------------------------------------------------------------
# Expected log evidence, GPI normalisation and effective complexity
# --------------------------------------------------------------------------

def normal_entropy(D, sigma):
    return 0.5 * D * (LOG_2PI + 2 * np.log(sigma) + 1)


def entropy(kind: str, **p) -> float:
    if kind in ("normal-conj", "normal-mean", "normal-discrete"):
        return normal_entropy(p.get("K", p.get("D", 1)), p.get("sigma", 1.0))
    if kind == "normal-meanvar":
        return normal_entropy(p.get("D", 1), p.get("sigma", 1.0))
    if kind == "exponential":
        return 1.0 - np.log(p.get("lam", 1.0))
    if kind == "uniform":
        return np.log(p.get("L0", 1.0))
    raise ValueError(f"no entropy for {kind}")


def mean_log_evidence(kind: str, N, log_c=0.0, **p):
    """E[log Z(X^N)] under X ~ q(.|theta0) for a prior with constant ``log_c``.

    ``normal-conj`` takes K, N0, sigma and optionally ``delta2`` (squared
    distance of the true mean from the prior mean in units of sigma^2); without
    it the true mean is averaged over the prior.
    """
    N = np.asarray(N, dtype=float)
    if kind == "normal-conj":
        K, N0, sigma = p["K"], p["N0"], p.get("sigma", 1.0)
        d2 = p.get("delta2")
        spread = K / N0 if d2 is None else d2
        return (-(K * N / 2) * (LOG_2PI + 2 * np.log(sigma)) - K * (N - 1) / 2
                - K / 2 * np.log((N + N0) / N0) - 0.5 * (N * N0 / (N + N0)) * (spread + K / N))
    if kind == "normal-mean":
        D, sigma = p.get("D", 1), p.get("sigma", 1.0)
        return log_c - (D * N / 2) * (LOG_2PI + 2 * np.log(sigma)) \
            + D / 2 * np.log(2 * np.pi * sigma ** 2 / N) - D * (N - 1) / 2
    if kind == "normal-meanvar":
        D, sigma = p.get("D", 1), p.get("sigma", 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = D * (N - 1) / 2
            psi = np.where(a > 0, digamma(np.where(a > 0, a, 1.0)), -np.inf)
            return (log_c - (D * N / 2) * (LOG_2PI + 2 * np.log(sigma)) + D / 2 * np.log(2 * np.pi / N)
                    - np.log(2.0) + lgamma(D * N / 2) - (D * N / 2) * psi)
    if kind == "exponential":
        lam = p.get("lam", 1.0)
        return log_c + lgamma(N) - N * digamma(N) + N * np.log(lam)
    if kind == "uniform":
        L0 = p.get("L0", 1.0)
        return log_c - N * np.log(L0) - np.log(N) + 1.0
    raise ValueError(f"no expected log evidence for {kind}")


def effective_complexity(kind: str, N, D: int = 1):
    """Exponent K_eff(N) in w = rho exp(-K_eff); for ``uniform`` the log-c based
    analogue 1 + N log(1 + 1/N)."""
    N = np.asarray(N, dtype=float)
    if kind == "normal-mean":
        return D / 2 * (1 + N * np.log1p(1 / N))
    if kind == "normal-meanvar":
        a = D * (N - 1) / 2
        ok = a > 0
        aa = np.where(ok, a, 1.0)
        # (N+1) lgamma(DN/2) - N lgamma(D(N+1)/2) = lgamma(DN/2) - N [lgamma(DN/2 + D/2) - lgamma(DN/2)]
        out = (0.5 * np.log(N / (2 * np.pi)) - 0.5 * np.log(2.0) + D * N / 2 * np.log1p(1 / N)
               + lgamma(D * N / 2) - N * lgamma_diff(D * N / 2, D / 2)
               + D * (N + 1) * N / 2 * digamma_diff(aa, D / 2))
        return np.where(ok, out, np.inf) if np.ndim(out) else (float(out) if ok else np.inf)
    if kind == "exponential":
        # psi(N+1) - psi(N) = 1/N and lgamma(N+1) = lgamma(N) + log N
        return 0.5 * np.log(N / (2 * np.pi)) - N * np.log(N) + lgamma(N) + N + 1
    if kind == "uniform":
        return 1 + N * np.log1p(1 / N)
    raise ValueError(f"no effective complexity for {kind}")


def gpi_log_c(kind: str, N, D: int = 1, sigma: float = 1.0):
    """log of the constant c in the symmetry-fixed GPI prior at sample size N.

    Shapes: c (flat mean, known sigma), c sigma^-(D+1), c/lambda, c/L.
    """
    N = np.asarray(N, dtype=float)
    K = effective_complexity(kind, N, D)
    if kind == "normal-mean":
        return D / 2 * np.log(N / (2 * np.pi * sigma ** 2)) - K
    if kind == "normal-meanvar":
        return (D + 1) / 2 * np.log(N / (2 * np.pi)) + 0.5 * np.log(2.0) - K
    if kind == "exponential":
        return 0.5 * np.log(N / (2 * np.pi)) - K
    if kind == "uniform":
        return np.log(N) - N * np.log1p(1 / N) - 1
    raise ValueError(f"no closed-form GPI prior for {kind}")


# --------------------------------------------------------------------------
# Learning capacities in closed form
# --------------------------------------------------------------------------

def meanvar_learning_capacity(D, N, form: str = "expanded"):
    """Continuous-N capacity of the normal model with unknown mean and variance.

    ``form="expanded"`` groups terms as the second derivative of the expected
    log evidence; ``form="bracketed"`` is the factored D/2 [1 - ...] grouping.
    Both are the same function; N <= 1 returns +inf.
    """
    N = np.asarray(N, dtype=float)
    a = D * (N - 1) / 2
    if np.any(a <= 0):
        out = np.full(N.shape, np.inf)
        ok = a > 0
        if np.any(ok):
            out[ok] = meanvar_learning_capacity(D, N[ok], form)
        return out if out.ndim else float(out)
    h = D / 2
    if form == "expanded":
        return h + N ** 2 * h ** 2 * trigamma(D * N / 2) - 2 * N ** 2 * h ** 2 * trigamma(a) \
            - N ** 3 * h ** 3 * tetragamma(a)
    if form == "bracketed":
        return h * (1 - D * N ** 2 * trigamma(a) + D * N ** 2 / 2 * trigamma(D * N / 2)
                    - D ** 2 * N ** 3 / 4 * tetragamma(a))
    raise ValueError("form must be 'expanded' or 'bracketed'")


def exponential_learning_capacity(N):
    N = np.asarray(N, dtype=float)
    return -N ** 2 * (trigamma(N) + N * tetragamma(N))


def continuous_learning_capacity(kind: str, N, **p):
    if kind == "normal-conj":
        if p.get("delta2") is None:
            return conjugate_learning_capacity(p["K"], N, p["N0"])
        K, N0, d2 = p["K"], p["N0"], p["delta2"]
        return K / 2 * N ** 2 / (N + N0) ** 2 + (d2 * N0 - K) * N0 * N ** 2 / (N + N0) ** 3
    if kind == "normal-mean":
        return p.get("D", 1) / 2 + 0 * np.asarray(N, dtype=float)
    if kind == "normal-meanvar":
        return meanvar_learning_capacity(p.get("D", 1), N)
    if kind == "exponential":
        return exponential_learning_capacity(N)
    if kind == "uniform":
        return 1.0 + 0 * np.asarray(N, dtype=float)
    raise ValueError(f"no closed-form capacity for {kind}")


# --------------------------------------------------------------------------
# Thermodynamic quadruple from an expected-log-evidence function
# --------------------------------------------------------------------------

def _second_derivative(f, x, h):
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)


def _first_derivative(f, x, h):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def thermo_from_G(G, N, derivative: str = "discrete", linear_part: float = 0.0) -> AnalyticThermo:
    """Potentials from G(n) = -E log Z(n).

    ``linear_part`` is a known slope a with G(n) = a n + smooth(n); removing it
    before numerical differentiation keeps round-off small.
    """
    if derivative == "discrete":
        gm, g0, gp = G(N - 1), G(N), G(N + 1)
        return AnalyticThermo(N, g0 / N, gp - g0, -N * N * (gp - 2 * g0 + gm), N * gp - (N + 1) * g0)
    if derivative == "continuous":
        def smooth(n):
            return G(n) - linear_part * n
        h = 1e-2 * N if N > 0.2 else 2e-3
        g0 = G(N)
        d1 = _first_derivative(smooth, N, h) + linear_part
        d2 = _second_derivative(smooth, N, h)
        return AnalyticThermo(N, g0 / N, d1, -N * N * d2, N * d1 - g0)
    raise ValueError("derivative must be 'discrete' or 'continuous'")


def analytic_thermo(kind: str, N, derivative: str = "discrete", log_c=None, **p) -> AnalyticThermo:
    """F, U, C, S (and K_eff when defined) for a zoo model with a fixed prior.

    ``log_c`` defaults to the GPI normalisation at sample size N, in which case
    S vanishes identically under the discrete convention.
    """
    gpi_kinds = ("normal-mean", "normal-meanvar", "exponential", "uniform")
    D = p.get("D", 1)
    if log_c is None and kind in gpi_kinds:
        log_c = float(gpi_log_c(kind, N, D, p.get("sigma", 1.0) if kind == "normal-mean" else 1.0))
    lc = 0.0 if log_c is None else log_c

    def G(n):
        return -mean_log_evidence(kind, n, lc, **p)

    th = thermo_from_G(G, N, derivative, linear_part=entropy(kind, **p))
    if derivative == "continuous" and kind in ("normal-conj", "normal-mean", "normal-meanvar",
                                               "exponential", "uniform"):
        th = AnalyticThermo(N, th.Fbar, th.Ubar, float(continuous_learning_capacity(kind, N, **p)),
                            th.Sbar)
    keff = float(effective_complexity(kind, N, D)) if kind in gpi_kinds else np.nan
    return AnalyticThermo(th.N, float(th.Fbar), float(th.Ubar), float(th.Cbar), float(th.Sbar), keff)


# --------------------------------------------------------------------------
# Discrete-mean normal: averaged log of the Jacobi theta function
# --------------------------------------------------------------------------

def _nome(n):
    return np.exp(-2 * np.pi ** 2 / n)


def euler_term(n, branch: str = "series"):
    """sum_{m>=1} log(1 - r^{2m}) with nome r = exp(-2 pi^2 / n)."""
    if branch == "series":
        k = np.arange(1, max(64, int(40 * n / (4 * np.pi ** 2)) + 64))
        q = np.exp(-4 * np.pi ** 2 * k / n)
        return float(-np.sum(q / (k * -np.expm1(-4 * np.pi ** 2 * k / n))))
    if branch == "asymptotic":
        m = np.arange(1, 40)
        return float(-n / 24 + np.pi ** 2 / (6 * n) + 0.5 * np.log(n / (2 * np.pi))
                     + np.sum(np.log1p(-np.exp(-n * m))))
    raise ValueError("branch must be 'series' or 'asymptotic'")


def _direct_space_tail(n):
    """E log(1 + sum_{m != 0} exp(n m t - n m^2/2)) for t ~ N(0, 1/n)."""
    rn = np.sqrt(n)
    ms = np.array([m for m in range(-6, 7) if m != 0], dtype=float)

    def integrand(u):
        expo = rn * ms * u - n * ms ** 2 / 2
        top = np.max(expo)
        if top > 0:
            val = top + np.log(np.exp(-top) + np.sum(np.exp(expo - top)))
        else:
            val = np.log1p(np.sum(np.exp(expo)))
        return val * np.exp(-u * u / 2) / np.sqrt(2 * np.pi)

    pts = sorted({-rn / 2, 0.0, rn / 2})
    lim = max(12.0, rn * 1.5)
    total = 0.0
    edges = [-lim] + pts + [lim]
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, a, b, epsabs=1e-17, epsrel=1e-13, limit=200)[0]
    return total


def cross_term(n, branch: str = "series"):
    """E_t sum_{m>=1} log(1 + r^{2m-1} e^{-2 pi i t}), t ~ N(0, 1/n)."""
    if branch == "series":
        kmax = int(np.sqrt(n * 45 / (2 * np.pi ** 2))) + 16
        k = np.arange(1, kmax)
        a = 2 * np.pi ** 2 / n
        # (-1)^k / k * r^{k^2+k} / (r^{2k} - 1), with r^{2k}-1 = expm1(-2ka)
        return float(np.sum((-1.0) ** k / k * np.exp(-a * (k * k + k)) / np.expm1(-2 * a * k)))
    if branch == "asymptotic":
        m = np.arange(1, 40)
        eta_tail = np.sum(np.log1p(-np.exp(-n * m)))
        return float(n / 48 - 0.25 - np.pi ** 2 / (12 * n) + 0.5 * _direct_space_tail(n) - 0.5 * eta_tail)
    raise ValueError("branch must be 'series' or 'asymptotic'")


def discrete_mean_free_energy_series(N, branch: str = "auto", sigma: float = 1.0):
    """E[log z(t; N)] for one coordinate of the integer-mean normal model.

    ``branch`` is ``"series"`` (nome expansion, any N), ``"asymptotic"`` (closed
    large-N form plus its exponentially small remainders) or ``"auto"``, which
    uses the asymptotic branch above n = N / sigma^2 = 100.
    """
    n = N / sigma ** 2
    if branch == "auto":
        branch = "asymptotic" if n > 100 else "series"
    return euler_term(n, branch) + 2 * cross_term(n, branch)


def discrete_mean_thermo(D: int, N, sigma: float = 1.0, derivative: str = "continuous",
                         branch: str = "auto") -> AnalyticThermo:
    """Potentials of the integer-mean normal model with unit-weight lattice prior,
    from the sufficient-statistic decomposition (D coordinates factorise)."""
    H0 = 0.5 * (LOG_2PI + 2 * np.log(sigma) + 1)

    def G(n):
        Ht = 0.5 * (LOG_2PI + 2 * np.log(sigma) - np.log(n) + 1)
        return D * (-discrete_mean_free_energy_series(n, branch, sigma) + n * H0 - Ht)

    th = thermo_from_G(G, N, derivative, linear_part=D * H0)
    return AnalyticThermo(th.N, float(th.Fbar), float(th.Ubar), float(th.Cbar), float(th.Sbar))


# --------------------------------------------------------------------------
# Sweep output
# --------------------------------------------------------------------------

SWEEP_COLUMNS = ["kind", "N", "Fbar", "Ubar", "Cbar", "Sbar", "Keff"]


def oracle_sweep_csv(kind: str, Ns, derivative: str = "continuous", **p) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for N in Ns:
        if kind == "normal-discrete":
            th = discrete_mean_thermo(p.get("D", 1), N, p.get("sigma", 1.0), derivative)
        else:
            th = analytic_thermo(kind, N, derivative, **p)
        w.writerow([kind, repr(float(N)), repr(th.Fbar), repr(th.Ubar), repr(th.Cbar),
                    repr(th.Sbar), repr(th.Keff)])
    return buf.getvalue()
