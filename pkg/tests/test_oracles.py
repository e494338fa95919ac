import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermobayes import oracles, zoo


# --- large-N closed forms -------------------------------------------------

@pytest.mark.parametrize("N", [0.5, 3.0, 100.0, 1e5])
@pytest.mark.parametrize("K", [1, 2, 5])
def test_free_particle_matches_normal_prior(K, N):
    fp = oracles.table2_thermo("free-particle", N, K=K, E0=0.3, beta0=2.0)
    nm = oracles.table2_thermo("normal-prior", N, K=K, H0=0.3, N0=2.0)
    np.testing.assert_allclose(fp, nm, rtol=1e-12, atol=1e-12)
    assert nm[2] == K / 2


def test_singular_column_leading_capacity():
    F, U, C, S = oracles.table2_thermo("singular", 50.0, gamma=1.2, H0=0.0)
    assert C == pytest.approx(0.6)
    assert S == pytest.approx(-0.6 * math.log(50.0))


@pytest.mark.parametrize("N, N0, want", [(1e9, 1.0, 0.5), (3.0, 3.0, 1 / 8), (1e-6, 1.0, 0.0)])
def test_conjugate_capacity_limits(N, N0, want):
    assert oracles.conjugate_learning_capacity(1, N, N0) == pytest.approx(want, abs=1e-5)


# --- mean + variance ------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.floats(1.05, 1e4))
def test_meanvar_groupings_agree(D, N):
    a = oracles.meanvar_learning_capacity(D, N, "expanded")
    b = oracles.meanvar_learning_capacity(D, N, "bracketed")
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_meanvar_limits():
    assert oracles.meanvar_learning_capacity(1, 1.001) > 1e3
    assert abs(oracles.meanvar_learning_capacity(1, 1e6) - 1) < 1e-3
    assert oracles.meanvar_learning_capacity(1, 1.0) == math.inf
    assert math.isinf(oracles.effective_complexity("normal-meanvar", 1.0))


# --- effective complexity and GPI normalisation ----------------------------

@pytest.mark.parametrize("D", [1, 2, 3])
def test_flat_mean_complexity_tends_to_dimension(D):
    assert oracles.effective_complexity("normal-mean", 1e8, D) == pytest.approx(D, abs=1e-7)


def test_exponential_complexity_large_N():
    assert abs(oracles.effective_complexity("exponential", 1e6) - 1) < 1e-4


@pytest.mark.parametrize("N", [1.0, 2.0, 17.0, 1e4])
def test_uniform_log_c(N):
    want = math.log(N) - N * math.log(1 + 1 / N) - 1
    assert oracles.gpi_log_c("uniform", N) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("kind, p", [("normal-mean", {"D": 2, "sigma": 1.7}),
                                     ("normal-meanvar", {"D": 1, "sigma": 0.4}),
                                     ("normal-meanvar", {"D": 3, "sigma": 2.0}),
                                     ("exponential", {"lam": 3.0}),
                                     ("uniform", {"L0": 0.2})])
@pytest.mark.parametrize("N", [3, 10, 250])
def test_gpi_normalisation_zeroes_entropy(kind, p, N):
    th = oracles.analytic_thermo(kind, N, "discrete", **p)
    assert abs(th.Sbar) < 1e-8 * max(1.0, N)


# --- internal consistency of the oracle layer ------------------------------

@pytest.mark.parametrize("kind, p", [("normal-conj", {"K": 2, "N0": 1.5, "sigma": 1.0}),
                                     ("normal-mean", {"D": 1, "sigma": 1.0}),
                                     ("normal-meanvar", {"D": 2, "sigma": 1.0}),
                                     ("exponential", {"lam": 0.5}),
                                     ("uniform", {"L0": 4.0})])
@pytest.mark.parametrize("N", [3, 12, 80])
def test_capacity_is_second_difference_of_free_energy(kind, p, N):
    F = {n: oracles.analytic_thermo(kind, n, "discrete", log_c=0.0, **p).Fbar for n in (N - 1, N, N + 1)}
    C = oracles.analytic_thermo(kind, N, "discrete", log_c=0.0, **p).Cbar
    second = (N + 1) * F[N + 1] - 2 * N * F[N] + (N - 1) * F[N - 1]
    assert C == pytest.approx(-N * N * second, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("N", [2, 10, 1000])
def test_uniform_discrete_capacity(N):
    th = oracles.analytic_thermo("uniform", N, "discrete", L0=1.0)
    assert th.Cbar == pytest.approx(-N * N * math.log(1 - N ** -2.0), rel=1e-9)


def test_continuous_derivatives_reproduce_closed_capacities():
    for N in (5.0, 40.0):
        th = oracles.thermo_from_G(lambda n: -oracles.mean_log_evidence("exponential", n), N,
                                   "continuous", linear_part=1.0)
        assert th.Cbar == pytest.approx(oracles.exponential_learning_capacity(N), rel=1e-6)


# --- integer-mean normal series --------------------------------------------

@pytest.mark.parametrize("n", [110, 120, 200])
def test_theta_branches_overlap(n):
    a = oracles.discrete_mean_free_energy_series(n, "series")
    b = oracles.discrete_mean_free_energy_series(n, "asymptotic")
    assert abs(a - b) < 1e-8


def test_cross_term_leading_asymptotic():
    n = 300.0
    lead = n / 48 - 0.25 - math.pi ** 2 / (12 * n)
    assert oracles.cross_term(n, "series") == pytest.approx(lead, abs=1e-6)


def test_discrete_mean_freezes_out_at_large_N():
    assert oracles.discrete_mean_thermo(1, 5000.0).Cbar < 1e-6
    assert oracles.discrete_mean_thermo(1, 0.05).Cbar == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize("N", [0.5, 3.0, 30.0, 400.0])
def test_series_route_matches_statistic_route(N):
    a = oracles.discrete_mean_thermo(1, N).Cbar
    b = zoo.statistic_thermo(zoo.normal_discrete(1, 1.0), [0.0], N).Cbar
    assert a == pytest.approx(b, abs=1e-5)


def test_sweep_csv_columns():
    text = oracles.oracle_sweep_csv("exponential", [5, 10], lam=1.0)
    lines = text.splitlines()
    assert lines[0] == ",".join(oracles.SWEEP_COLUMNS)
    assert len(lines) == 3 and lines[1].startswith("exponential,5.0,")
