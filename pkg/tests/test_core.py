import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermobayes import core, zoo
from thermobayes.core import (ContinuousDim, DiscreteDim, DivergenceError, EvidenceEstimate,
                              InvalidInputError, NotDefinedError, ParamSpace, PriorSpec)

LOG_2PI = math.log(2 * math.pi)


# --- domain types -----------------------------------------------------------

def test_param_space_validation():
    with pytest.raises(InvalidInputError):
        ContinuousDim("a", 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        DiscreteDim("m", spacing=0.0)
    space = ParamSpace(continuous=(ContinuousDim("mu"),), discrete=(DiscreteDim("m", 1.0, 1.0),))
    assert space.dim == 2 and space.names == ["mu", "m"]
    assert space.contains([0.3, 4.0])
    assert not space.contains([0.3, 4.5])
    assert not space.contains([0.3])


def test_grid_prior_needs_increasing_points():
    with pytest.raises(InvalidInputError):
        PriorSpec.from_grid([0.0, 1.0, 1.0], [0.0, 0.0, 0.0])


@pytest.mark.parametrize("method, bound, ok", [("closedForm", 0.0, True), ("closedForm", 1e-3, False),
                                               ("quadrature", 1e-6, True), ("bogus", 0.0, False)])
def test_evidence_estimate_invariants(method, bound, ok):
    if ok:
        assert EvidenceEstimate(1.0, method, bound).errorBound == bound
    else:
        with pytest.raises(InvalidInputError):
            EvidenceEstimate(1.0, method, bound)


def test_numerical_estimate_always_has_positive_bound():
    assert EvidenceEstimate(-3.0, "quadrature", 0.0).errorBound > 0


# --- cross entropy ----------------------------------------------------------

def test_cross_entropy_examples():
    assert core.cross_entropy_hat(zoo.normal_fixed(1, 0.0, 1.0), np.zeros(0), [0.0]) == \
        pytest.approx(0.5 * LOG_2PI)
    assert core.cross_entropy_hat(zoo.uniform_support(), [2.0], [1.0, 1.0]) == pytest.approx(math.log(2))
    assert core.cross_entropy_hat(zoo.uniform_support(), [0.5], [1.0]) == math.inf


def test_cross_entropy_exponential_direct_sum():
    model = zoo.exponential()
    x = model.sampler(np.array([2.0]), 100, np.random.default_rng(7))
    direct = -sum(math.log(2.0) - 2.0 * float(v) for v in x.ravel()) / 100
    assert core.cross_entropy_hat(model, [2.0], x) == pytest.approx(direct, abs=1e-12)


def test_dimension_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        core.cross_entropy_hat(zoo.normal_mean(2), [0.0, 0.0], np.zeros((3, 3)))


# --- evidence ---------------------------------------------------------------

def test_conjugate_single_point_evidence():
    model = zoo.normal_conjugate(1, 1.0, 0.0, 1.0)
    z = core.log_evidence(model, zoo.conjugate_prior(model), [0.0])
    assert z.method == "closedForm" and z.errorBound == 0
    assert z.logZ == pytest.approx(-0.5 * LOG_2PI - 0.5 * math.log(2), abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2), st.integers(1, 12), st.floats(0.3, 3.0), st.integers(0, 10_000))
def test_conjugate_quadrature_matches_closed_form(K, N, sigma_p, seed):
    model = zoo.normal_conjugate(K, 1.0, 0.5, sigma_p)
    prior = zoo.conjugate_prior(model)
    x = model.sampler(np.full(K, 0.2), N, np.random.default_rng(seed))
    exact = core.log_evidence(model, prior, x).logZ
    quad = core.log_evidence(model, prior, x, method="quadrature").logZ
    assert quad == pytest.approx(exact, abs=1e-8)


@pytest.mark.parametrize("spec, N", [("normal-mean:D=1,mu0=1", 6), ("normal-meanvar:mu0=0,sigma0=2", 5),
                                     ("exponential:lam0=3", 8), ("uniform:L0=2", 7)])
def test_closed_form_matches_quadrature_under_gpi(spec, N):
    model, theta0 = zoo.parse_model_id(spec)
    prior = zoo.gpi_prior(model, N)
    x = model.sampler(theta0, N, np.random.default_rng(3))
    exact = core.log_evidence(model, prior, x, method="closedForm").logZ
    quad = core.log_evidence(model, prior, x, method="quadrature").logZ
    assert quad == pytest.approx(exact, abs=1e-7)


def test_sequential_decomposition_of_evidence():
    model = zoo.normal_conjugate(1, 1.0, 0.0, 2.0)
    prior = zoo.conjugate_prior(model)
    x = model.sampler(np.array([0.7]), 9, np.random.default_rng(1))
    full = core.log_evidence(model, prior, x).logZ
    head = core.log_evidence(model, prior, x[:-1]).logZ
    # posterior predictive of the last point given the first eight
    n, s2p = 8, 4.0
    post_var = 1 / (1 / s2p + n)
    post_mean = post_var * x[:-1].sum()
    pred_var = 1 + post_var
    log_pred = -0.5 * math.log(2 * math.pi * pred_var) - (x[-1, 0] - post_mean) ** 2 / (2 * pred_var)
    assert full == pytest.approx(head + log_pred, abs=1e-10)


def test_empty_dataset_rejected():
    model = zoo.exponential()
    with pytest.raises(InvalidInputError):
        core.log_evidence(model, zoo.gpi_prior(model, 3), np.zeros((0, 1)))


def test_meanvar_single_point_evidence_diverges():
    model = zoo.normal_meanvar(1)
    with pytest.raises(DivergenceError):
        core.log_evidence(model, zoo.shape_prior(model, 0.0), [1.0])


def test_reparametrised_exponential_keeps_evidence():
    base = zoo.exponential()
    N = 12
    prior = zoo.gpi_prior(base, N)
    x = base.sampler(np.array([1.5]), N, np.random.default_rng(5))

    def log_density(data, u):
        return base.log_density(data, np.exp(np.atleast_2d(u)))

    log_model = dataclasses.replace(
        base, name="exponential-log-rate",
        param_space=ParamSpace(continuous=(ContinuousDim("log_lam"),)),
        log_density=log_density, log_likelihood=None, exact_log_evidence=None,
        evidence_grid=None, fisher=None,
        posterior_window=lambda d: [(math.log(len(d) / d.sum()) - 3, math.log(len(d) / d.sum()) + 3)],
        data_support=None, params={"kind": "exponential-log"})
    # density of log(lambda) picks up the Jacobian lambda
    log_prior = PriorSpec(lambda u: prior.log_density(np.exp(np.atleast_2d(u))) + np.atleast_2d(u)[:, 0])
    a = core.log_evidence(base, prior, x, method="closedForm").logZ
    b = core.log_evidence(log_model, log_prior, x, method="quadrature").logZ
    assert b == pytest.approx(a, abs=1e-7)


def test_mixture_quadrature_against_importance_sampling():
    model = zoo.exp_mixture(n_k=81)
    prior = zoo.window_prior(model)
    x = model.sampler(np.array(zoo.MIXTURE_POINTS["R"]), 100, np.random.default_rng(9))
    quad = zoo.mixture_log_evidence(x, model.params["grid"], estimate_error=True)
    mc = core.log_evidence(model, prior, x, method="monteCarlo", n_samples=200_000, seed=4)
    joint = 3 * (quad.errorBound + mc.errorBound)
    assert abs(quad.logZ - mc.logZ) <= joint + 0.02


# --- leave-one-out and Gibbs entropy ---------------------------------------

def test_loocv_two_points_matches_predictive():
    model = zoo.normal_conjugate(1, 1.0, 0.0, 1.0)
    prior = zoo.conjugate_prior(model)
    a, b = 0.4, -1.3

    def log_pred(target, other):
        # posterior after one observation with N0 = 1: mean other/2, variance 1/2
        return -0.5 * math.log(2 * math.pi * 1.5) - (target - other / 2) ** 2 / 3.0

    want = -(log_pred(a, b) + log_pred(b, a)) / 2
    assert core.avg_energy_loocv(model, prior, [a, b]) == pytest.approx(want, abs=1e-12)


def test_parameter_free_model_potentials():
    model = zoo.normal_fixed(1, 0.0, 1.0)
    x = np.array([[0.3], [-1.2], [2.0]])
    U = core.avg_energy_loocv(model, zoo.null_prior(), x)
    assert U == pytest.approx(core.cross_entropy_hat(model, np.zeros(0), x), abs=1e-12)
    assert core.gibbs_entropy_sample(model, zoo.null_prior(), x) == pytest.approx(0.0, abs=1e-12)


def test_uniform_loocv_symmetry():
    model = zoo.uniform_support()
    prior = zoo.gpi_prior(model, 3)
    x = np.array([[1.0], [2.0], [3.0]])
    z = [core.log_evidence(model, prior, np.delete(x, i, axis=0)).logZ for i in range(3)]
    assert z[0] == z[1]
    assert z[2] != z[0]


def test_loocv_divergence_is_signalled():
    model = zoo.normal_meanvar(1)
    with pytest.raises(DivergenceError):
        core.avg_energy_loocv(model, zoo.shape_prior(model, 0.0), [0.1, 0.7])


def test_loocv_matches_difference_of_averages():
    model = zoo.normal_conjugate(1, 1.0, 0.0, 1.0)
    prior = zoo.conjugate_prior(model)
    N, R = 6, 3000
    u = np.empty(R)
    for r in range(R):
        rng = core.replicate_rng(17, r)
        theta = prior.sampler(rng)
        u[r] = core.avg_energy_loocv(model, prior, model.sampler(theta, N, rng))
    from thermobayes import oracles
    G = lambda n: -oracles.mean_log_evidence("normal-conj", n, K=1, N0=1.0)
    assert abs(u.mean() - (G(N) - G(N - 1))) < 3 * u.std(ddof=1) / math.sqrt(R)


# --- disorder averages ------------------------------------------------------

def test_report_identity_chain():
    g = np.random.default_rng(0).normal(size=(50, 3)) + np.array([1.0, 2.0, 3.1])
    rep = core.report_from_triples(g, 7, seed=0)
    assert rep.Sbar == pytest.approx(7 * (rep.Ubar - rep.Fbar), abs=1e-9)
    Gm = g.mean(axis=0)
    assert rep.Sbar == pytest.approx(7 * Gm[2] - 8 * Gm[1], abs=1e-9)


def test_conjugate_capacity_example():
    model = zoo.normal_conjugate(2, 1.0, 0.0, 1.0)
    rep = core.disorder_average(model, zoo.conjugate_prior(model), "prior", 50, 4000, seed=5)
    assert abs(rep.Cbar - 1 / (1 + 1 / 50) ** 2) < 3 * rep.Cse


@pytest.mark.parametrize("N", [2, 7, 40])
def test_uniform_capacity(N):
    model = zoo.uniform_support()
    rep = core.disorder_average(model, zoo.gpi_prior(model, N), [1.0], N, 4000, seed=8)
    # under quantile coupling every replicate gives the exact value, so only round-off remains
    assert abs(rep.Cbar - (-N * N * math.log(1 - N ** -2.0))) < 3 * rep.Cse + 1e-9


@pytest.mark.parametrize("coupling", ["sampler", "prefix"])
def test_couplings_agree_on_exponential(coupling):
    model = zoo.exponential()
    rep = core.disorder_average(model, zoo.gpi_prior(model, 10), [1.0], 10, 1500, seed=2,
                                coupling=coupling)
    assert abs(rep.Sbar) < 3 * rep.Sse


def test_disorder_average_is_deterministic():
    model = zoo.exponential()
    prior = zoo.gpi_prior(model, 5)
    a = core.disorder_average(model, prior, [2.0], 5, 200, seed=99)
    b = core.disorder_average(model, prior, [2.0], 5, 200, seed=99)
    assert a == b
    assert core.reports_to_csv([a]) == core.reports_to_csv([b])


def test_disorder_average_input_errors():
    model = zoo.exponential()
    prior = zoo.gpi_prior(model, 5)
    with pytest.raises(InvalidInputError):
        core.disorder_average(model, prior, [1.0], 1, 10, seed=0)
    with pytest.raises(InvalidInputError):
        core.disorder_average(model, prior, [1.0], 5, 0, seed=0)
    with pytest.raises(InvalidInputError):
        core.disorder_average(model, prior, "prior", 5, 10, seed=0)


def test_meanvar_at_two_reports_divergence():
    model = zoo.normal_meanvar(1)
    with pytest.raises(DivergenceError):
        core.disorder_average(model, zoo.shape_prior(model, 0.0), [0.0, 1.0], 2, 10, seed=0)


def test_replicate_streams_are_independent_and_reproducible():
    a = core.replicate_rng(1, 0).random(4)
    assert np.array_equal(a, core.replicate_rng(1, 0).random(4))
    assert not np.array_equal(a, core.replicate_rng(1, 1).random(4))
    assert not np.array_equal(a, core.replicate_rng(1, 0, offset=1).random(4))


# --- information geometry --------------------------------------------------

@pytest.mark.parametrize("D", [1, 3])
def test_fisher_determinants(D):
    I = core.fisher_information(zoo.normal_mean(D, 2.0), np.zeros(D))
    assert np.linalg.det(I) == pytest.approx(2.0 ** (-2 * D))
    I = core.fisher_information(zoo.exponential(), [4.0])
    assert np.linalg.det(I) == pytest.approx(4.0 ** -2)


def test_meanvar_fisher_determinant_one_dimension():
    I = core.fisher_information(zoo.normal_meanvar(1), [0.0, 1.5])
    assert np.linalg.det(I) == pytest.approx(2 * 1.5 ** -4)


def test_monte_carlo_fisher_matches_closed_form():
    model = dataclasses.replace(zoo.exponential(), fisher=None)
    I = core.fisher_information(model, [2.0], n_mc=50_000)
    assert I[0, 0] == pytest.approx(0.25, rel=1e-3)


def test_fisher_undefined_for_uniform():
    with pytest.raises(NotDefinedError):
        core.fisher_information(zoo.uniform_support(), [1.0])


def test_statistical_resolution():
    d = core.statistical_resolution(zoo.normal_mean(1, 3.0), [0.0], 25)
    assert d[0] == pytest.approx(3.0 / 5)
    d4 = core.statistical_resolution(zoo.normal_mean(1, 3.0), [0.0], 100)
    assert d4[0] == pytest.approx(d[0] / 2)
