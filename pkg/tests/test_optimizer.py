import numpy as np
import pytest

from truncexp.errors import AssumptionViolation, NumericalError, TruncExpError
from truncexp.loss import LossContext, loss
from truncexp.optimizer import FitConfig, fit, iteration_budget, step_size
from truncexp.parameter_space import ConstraintSpec, project_constraint_set
from truncexp.sampling import grid_exact_sampler
from truncexp.statistics import StatisticFamily, SupportDomain, problem_constants


def test_step_size_examples():
    assert step_size((2, 2, 1), 1.0, [1.0], [0.0]) == pytest.approx(0.25)
    assert step_size((1, 1, 1), 2.0, [1.0], [0.0]) == pytest.approx(0.25)
    a = step_size((1, 3, 1), 0.7, [1.2], [0.4])
    assert step_size((1, 3, 1), 1.4, [1.2], [0.4]) == pytest.approx(a / 4)


def test_iteration_budget_examples():
    assert iteration_budget(0.01, (1, 1, 1), 1.0, [1.0], [0.0]) == 200
    assert iteration_budget(0.005, (1, 1, 1), 1.0, [1.0], [0.0]) == 400
    assert iteration_budget(0.1, (2, 2, 1), 1.0, [1.0], [0.0]) == 320


def test_iteration_budget_with_known_norm():
    assert iteration_budget(0.01, (1, 1, 1), 1.0, [1.0], [0.0], theta_norm_bound=0.5) == 50


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(epsilon=0)
    with pytest.raises(ValueError):
        FitConfig(max_iters=0)
    with pytest.raises(ValueError):
        FitConfig(step_size=-1.0)


@pytest.fixture(scope="module")
def bench_ctx():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 1)
    S = grid_exact_sampler(fam, None, np.ones((1, 1, 1)), 256, 100_000, 42)
    return LossContext.build(fam, S)


@pytest.fixture(scope="module")
def uniform_ctx():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 1)
    S = grid_exact_sampler(fam, None, np.zeros((1, 1, 1)), 256, 100_000, 43)
    return LossContext.build(fam, S)


SPEC_15 = ConstraintSpec((("l11", 1.5),))


def test_recovers_uniform_truth(uniform_ctx):
    res = fit(uniform_ctx, ConstraintSpec((("l11", 1.0),)), FitConfig(bounds="interval"))
    assert abs(res.theta.item()) <= 0.05


def test_recovers_benchmark_truth(bench_ctx):
    res = fit(bench_ctx, SPEC_15, FitConfig(bounds="interval"))
    assert abs(res.theta.item() - 1.0) <= 0.05
    assert res.certificate.stop_reason == "plateau"
    assert res.certificate.epsilon_certified


def test_closed_form_constants_reach_same_estimate():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 1)
    ctx = LossContext.build(fam, grid_exact_sampler(fam, None, np.ones((1, 1, 1)), 256, 2000, 7))
    a = fit(ctx, SPEC_15, FitConfig(bounds="interval", stop_tol=1e-12)).theta.item()
    b = fit(ctx, SPEC_15, FitConfig(bounds="closed_form", stop_tol=1e-12)).theta.item()
    assert a == pytest.approx(b, abs=1e-6)


def test_monotone_descent_and_feasible_iterates(rng):
    fam = StatisticFamily.mixed(SupportDomain.box([(-1, 1), (0, 2)]), 2, 1, shape=(1, 11, 1))
    spec = ConstraintSpec((("l11", 1.0),))
    truth = project_constraint_set(rng.standard_normal(fam.shape), spec)
    S = grid_exact_sampler(fam, None, truth, 128, 5000, 1)
    seen = []
    res = fit(LossContext.build(fam, S), spec, FitConfig(max_iters=500, bounds="interval"),
              callback=lambda t, th: seen.append(spec.contains(th)))
    assert all(seen) and len(seen) == res.iterations
    assert np.all(np.diff(res.loss_history) <= 1e-12)


def test_two_slice_fit_stays_feasible(rng):
    fam = StatisticFamily.polynomial(SupportDomain.ball([0, 0], 1.0), 2, layout="outer",
                                     n_slices=2)
    spec = ConstraintSpec((("l11", 0.8), ("nuclear", 1.0)))
    X = fam.domain.sample_uniform(rng, 2000)
    feasible = []
    res = fit(LossContext.build(fam, X), spec, FitConfig(max_iters=300),
              callback=lambda t, th: feasible.append(spec.contains(th)))
    assert all(feasible)
    assert np.all(np.diff(res.loss_history) <= 1e-12)
    # symmetric statistics keep every iterate symmetric
    np.testing.assert_allclose(res.theta, res.theta.transpose(1, 0, 2), atol=1e-12)


def test_fit_is_deterministic(bench_ctx):
    cfg = FitConfig(max_iters=200, bounds="interval")
    a, b = fit(bench_ctx, SPEC_15, cfg), fit(bench_ctx, SPEC_15, cfg)
    np.testing.assert_array_equal(a.loss_history, b.loss_history)
    ta = np.array([[p.iteration, p.loss, p.grad_map_norm] for p in a.trace])
    tb = np.array([[p.iteration, p.loss, p.grad_map_norm] for p in b.trace])
    np.testing.assert_array_equal(ta, tb)


def test_budget_run_is_epsilon_optimal(rng):
    fam = StatisticFamily.polynomial(SupportDomain.box([(-1, 1)]), 2)
    spec = ConstraintSpec((("l11", 1.0),))
    S = grid_exact_sampler(fam, None, np.array([0.4, -0.3]).reshape(1, 2, 1), 256, 500, 3)
    ctx = LossContext.build(fam, S)
    c = problem_constants(fam, spec)
    eps = 2 * 2 * c.phi_max**2 * np.exp(c.inner_bound(spec.radii)) * 2 / 300
    res = fit(ctx, spec, FitConfig(epsilon=eps, stop_tol=0.0))
    assert res.iterations == res.certificate.tau and res.certificate.budget_met
    ref = fit(ctx, spec, FitConfig(max_iters=50 * res.iterations))
    assert res.loss - ref.loss <= eps


def test_trace_stride_and_last_point(bench_ctx):
    res = fit(bench_ctx, SPEC_15, FitConfig(max_iters=25, trace_stride=10, bounds="interval"))
    assert [p.iteration for p in res.trace] == [0, 10, 20, 25]
    assert res.certificate.stop_reason == "max_iters" and not res.certificate.budget_met


def test_result_document(bench_ctx):
    doc = fit(bench_ctx, SPEC_15, FitConfig(max_iters=5, bounds="interval")).to_dict()
    assert doc["shape"] == [1, 1, 1]
    assert doc["certificate"]["tau_conservative"] is True


def test_step_override_voids_guarantee(bench_ctx):
    res = fit(bench_ctx, SPEC_15, FitConfig(max_iters=5, step_size=100.0, bounds="interval"))
    assert not res.certificate.guarantee_applies
    assert not res.certificate.epsilon_certified


def test_identifiability_gate():
    fam = StatisticFamily.polynomial(SupportDomain.unit_box(1), 2, include_constant=True)
    ctx = LossContext.build(fam, np.linspace(0, 1, 50)[:, None])
    with pytest.raises(AssumptionViolation):
        fit(ctx, ConstraintSpec((("l11", 1.0),)))


def test_spec_length_mismatch(bench_ctx):
    with pytest.raises(TruncExpError):
        fit(bench_ctx, ConstraintSpec((("l11", 1.0), ("l11", 1.0))))


@pytest.mark.filterwarnings("ignore")
def test_non_finite_loss_reported(bench_ctx):
    ctx = LossContext(bench_ctx.family, bench_ctx.table, None, np.array([[1000.0, -2000.0]]))
    with pytest.raises(NumericalError):
        fit(ctx, SPEC_15, FitConfig(max_iters=3, check_identifiability=False))


def test_simplex_projection_survives_huge_entries():
    P = project_constraint_set(np.full((1, 1, 1), 6.8e305), SPEC_15)
    assert SPEC_15.contains(P)


def test_loss_decreases_from_zero(bench_ctx):
    res = fit(bench_ctx, SPEC_15, FitConfig(max_iters=50, bounds="interval"))
    assert res.loss < loss(bench_ctx, np.zeros((1, 1, 1)))
