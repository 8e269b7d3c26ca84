import math

import numpy as np
import pytest

from truncexp.diagnostics import (concentration_check_correlation, concentration_check_gradient,
                                  correlation_epsilon, correlation_sample_size,
                                  empirical_correlation, finite_sample_n, gradient_epsilon,
                                  gradient_sample_size, kl_uniform_vs_shifted,
                                  kl_uniform_vs_shifted_batch, lambda_min_plugin,
                                  population_correlation, projection_cost_sweep,
                                  projection_op_count, sandwich_covariance)
from truncexp.errors import AssumptionViolation, TruncExpError
from truncexp.loss import LossContext, hessian, population_loss_batch
from truncexp.optimizer import fit
from truncexp.parameter_space import ConstraintSpec
from truncexp.sampling import grid_exact_sampler
from truncexp.statistics import StatisticFamily, SupportDomain

ZERO = np.zeros((1, 1, 1))
ONE = np.ones((1, 1, 1))


# -- correlation -------------------------------------------------------------

def test_single_sample_is_rank_one(bench):
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(2), 2)
    ctx = LossContext.build(fam, [[0.3, 0.8]])
    H = empirical_correlation(ctx).H
    v = ctx.phibar[:, 0]
    np.testing.assert_allclose(H, np.outer(v, v), atol=1e-15)
    assert np.linalg.matrix_rank(H) == 1


def test_correlation_equals_hessian_at_zero(rng):
    fam = StatisticFamily.trigonometric(SupportDomain.box([(-1, 1), (0, 2)]), 1, shape=(2, 3, 1))
    ctx = LossContext.build(fam, fam.domain.sample_uniform(rng, 300))
    est = empirical_correlation(ctx)
    np.testing.assert_allclose(est.H, hessian(ctx, np.zeros(fam.shape)), atol=1e-12)
    np.testing.assert_allclose(est.H, est.H.T, atol=1e-12)
    assert np.linalg.eigvalsh(est.H)[0] >= -1e-10


def test_empirical_lambda_min_uniform(bench):
    S = grid_exact_sampler(bench, None, ZERO, 256, 100_000, 17)
    lam = empirical_correlation(LossContext.build(bench, S)).lambda_min
    se = math.sqrt((1 / 80 - 1 / 144) / S.n)  # sd of (x - 1/2)^2 under the uniform
    assert abs(lam - 1 / 12) <= 3 * se


def test_population_lambda_min_uniform(bench):
    est = population_correlation(bench)
    assert est.lambda_min == pytest.approx(1 / 12, rel=1e-10)
    assert est.source == "quadrature" and est.positive_definite


def test_constant_statistic_flagged():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 1, include_constant=True)
    est = population_correlation(fam)
    assert abs(est.lambda_min) < 1e-12 and not est.positive_definite


def test_fit_refuses_non_minimal_family():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 2, include_constant=True)
    ctx = LossContext.build(fam, fam.domain.sample_uniform(np.random.default_rng(0), 100))
    with pytest.raises(AssumptionViolation, match="identifiable"):
        fit(ctx, ConstraintSpec((("l11", 1.0),)))


def test_duplicate_statistics_rejected():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 1)
    with pytest.raises(TruncExpError, match="injective"):
        StatisticFamily(fam.kind, fam.domain, fam.degree, fam.frequencies, (1, 2, 1),
                        fam.terms, np.zeros((1, 2, 1), dtype=int))


def test_empirical_lambda_min_converges(bench):
    pop = population_correlation(bench, None, ONE).lambda_min
    gaps = []
    for n in (1_000, 10_000, 100_000):
        lams = [empirical_correlation(LossContext.build(
            bench, grid_exact_sampler(bench, None, ONE, 256, n, 100 * n + s))).lambda_min
            for s in range(20)]
        gaps.append(np.median(np.abs(np.array(lams) - pop)))
    assert gaps[0] > gaps[1] > gaps[2]


def test_lambda_plugin_floor(bench):
    ctx = LossContext.build(bench, [[0.5]])
    assert lambda_min_plugin(ctx) == 1e-6


# -- KL and population loss --------------------------------------------------

def test_kl_zero_at_truth(bench):
    assert kl_uniform_vs_shifted(bench, None, ONE, ONE) <= 1e-12


def test_kl_positive_elsewhere():
    fam = StatisticFamily.polynomial(SupportDomain.box([(-1, 1), (0, 1)]), 2)
    truth = np.array([0.5, -0.3, 0.2, 0.0, -0.4]).reshape(fam.shape)
    rng = np.random.default_rng(2)
    for _ in range(10):
        other = truth + 0.2 * rng.standard_normal(fam.shape)
        assert kl_uniform_vs_shifted(fam, None, truth, other) > 0


def test_kl_closed_form(bench):
    # Delta = 1 - t: KL = log((e^D - 1) / D) - D / 2
    t = -0.5
    D = 1 - t
    expected = math.log(math.expm1(D) / D) - D / 2
    assert kl_uniform_vs_shifted(bench, None, ONE, np.full((1, 1, 1), t)) == \
        pytest.approx(expected, rel=1e-10)


def test_kl_and_population_loss_share_argmin(bench):
    grid = np.round(np.arange(-3, 3.0005, 0.01), 10)
    thetas = grid.reshape(-1, 1, 1, 1)
    kl = kl_uniform_vs_shifted_batch(bench, None, ONE, thetas)
    pl = population_loss_batch(bench, ONE, thetas)
    assert abs(grid[np.argmin(kl)] - grid[np.argmin(pl)]) <= 0.01
    assert abs(grid[np.argmin(kl)] - 1.0) <= 0.01


def test_kl_is_log_loss_plus_constant(bench):
    thetas = np.linspace(-2, 2, 9).reshape(-1, 1, 1, 1)
    kl = kl_uniform_vs_shifted_batch(bench, None, ONE, thetas)
    logl = np.log(population_loss_batch(bench, ONE, thetas))
    diff = kl - logl
    np.testing.assert_allclose(diff, diff[0], atol=1e-10)


def test_kl_batch_matches_scalar(bench):
    thetas = np.linspace(-1, 2, 5).reshape(-1, 1, 1, 1)
    batch = kl_uniform_vs_shifted_batch(bench, None, ONE, thetas)
    single = [kl_uniform_vs_shifted(bench, None, ONE, t) for t in thetas]
    np.testing.assert_allclose(batch, single, rtol=1e-10, atol=1e-14)


# -- sandwich covariance -----------------------------------------------------

def test_sandwich_uniform_benchmark(bench):
    sw = sandwich_covariance(bench, None, ZERO)
    assert sw.sigma.item() == pytest.approx(12.0, rel=1e-10)


def test_sandwich_at_zero_is_inverse_covariance():
    fam = StatisticFamily.polynomial(SupportDomain.box([(-1, 1), (0, 1)]), 2)
    sw = sandwich_covariance(fam, None, np.zeros(fam.shape))
    H = population_correlation(fam).H
    np.testing.assert_allclose(sw.A, H, atol=1e-12)
    np.testing.assert_allclose(sw.B, H, atol=1e-12)
    np.testing.assert_allclose(sw.sigma, np.linalg.inv(H), rtol=1e-8)


def test_sandwich_psd_away_from_zero():
    fam = StatisticFamily.mixed(SupportDomain.box([(-1, 1), (0, 2)]), 2, 1, shape=(1, 11, 1))
    theta = np.random.default_rng(3).uniform(-0.2, 0.2, fam.shape)
    sw = sandwich_covariance(fam, None, theta)
    np.testing.assert_allclose(sw.sigma, sw.sigma.T, atol=1e-8 * np.abs(sw.sigma).max())
    assert np.linalg.eigvalsh(sw.A)[0] >= -1e-10
    assert np.linalg.eigvalsh(sw.sigma)[0] >= -1e-8 * np.abs(sw.sigma).max()
    assert np.isfinite(sw.condition_number)


def test_sandwich_singular_refused():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 1, include_constant=True)
    with pytest.raises(AssumptionViolation):
        sandwich_covariance(fam, None, np.zeros(fam.shape))


# -- finite-sample bounds ----------------------------------------------------

def test_finite_sample_example():
    b = finite_sample_n((1, 1, 1), 0.5, 0.1, 1 / 12, 1.0, [1.0], [1.0])
    b1 = 8 * 144 * math.log(40)
    b2 = 2**9 * 4 * math.exp(4) * 144 / 0.0625 * math.log(40)
    assert b.correlation_branch == pytest.approx(b1)
    assert b.gradient_branch == pytest.approx(b2)
    assert b.n == math.ceil(b2) and b2 > b1
    assert b.epsilon == pytest.approx(0.25 / 12 / (16 * math.e))


def test_finite_sample_scalings():
    base = finite_sample_n((1, 2, 1), 0.5, 0.1, 0.05, 1.0, [1.0], [0.5])
    half = finite_sample_n((1, 2, 1), 0.25, 0.1, 0.05, 1.0, [1.0], [0.5])
    assert half.gradient_branch == pytest.approx(16 * base.gradient_branch)
    wide = finite_sample_n((2, 2, 1), 0.5, 0.1, 0.05, 1.0, [1.0], [0.5])
    assert wide.correlation_branch >= 4 * base.correlation_branch
    assert wide.gradient_branch >= 4 * base.gradient_branch


def test_finite_sample_rejects_bad_input():
    for args in ((1.5, 0.1, 0.1), (0.5, 0.0, 0.1), (0.5, 0.1, 0.0)):
        with pytest.raises(ValueError):
            finite_sample_n((1, 1, 1), *args, 1.0, [1.0], [1.0])


def test_hoeffding_epsilons_scale_with_root_n():
    assert correlation_epsilon(400, 0.05, 1.0, (1, 2, 1)) == \
        pytest.approx(2 * correlation_epsilon(1600, 0.05, 1.0, (1, 2, 1)))
    assert gradient_epsilon(400, 0.05, 1.0, 0.7, (1, 2, 1)) == \
        pytest.approx(2 * gradient_epsilon(1600, 0.05, 1.0, 0.7, (1, 2, 1)))


def test_sample_sizes_invert_epsilons():
    n = correlation_sample_size(0.02, 0.05, 0.5, (1, 3, 1))
    assert correlation_epsilon(n, 0.05, 0.5, (1, 3, 1)) < 0.02
    assert correlation_epsilon(n - 1, 0.05, 0.5, (1, 3, 1)) >= 0.02 * (1 - 1e-9)
    n = gradient_sample_size(0.02, 0.05, 0.5, 1.0, (1, 3, 1))
    assert gradient_epsilon(n, 0.05, 0.5, 1.0, (1, 3, 1)) < 0.02


# -- concentration -----------------------------------------------------------

def test_correlation_concentration_uniform(bench):
    rep = concentration_check_correlation(bench, None, ZERO, n=10_000, trials=40, seed=4)
    assert np.mean(rep.deviations < 0.05) >= 0.95
    assert rep.violation_fraction <= rep.violation_limit()
    assert rep.to_dict()["schema_version"] == "1.0"


def test_gradient_concentration_mean_zero(bench):
    rep = concentration_check_gradient(bench, None, ONE, n=5_000, trials=60, seed=5)
    assert np.all(np.abs(rep.mean) <= 3 * rep.standard_error)
    assert rep.violation_fraction <= rep.violation_limit()


def test_concentration_reproducible(bench):
    a = concentration_check_correlation(bench, None, ONE, n=500, trials=5, seed=9)
    b = concentration_check_correlation(bench, None, ONE, n=500, trials=5, seed=9)
    np.testing.assert_array_equal(a.deviations, b.deviations)


# -- projection cost ---------------------------------------------------------

def test_projection_op_model_growth():
    assert projection_op_count("nuclear", 128, 128) / projection_op_count("nuclear", 64, 64) == 8
    ratio = projection_op_count("l11", 256, 256) / projection_op_count("l11", 128, 128)
    assert 4 <= ratio <= 5


def test_projection_cost_report():
    rep = projection_cost_sweep("l11", [(8, 8), (16, 16)], repeats=3)
    assert len(rep.seconds) == 2 and all(s > 0 for s in rep.seconds)
    assert rep.to_dict()["sizes"] == [[8, 8], [16, 16]]
