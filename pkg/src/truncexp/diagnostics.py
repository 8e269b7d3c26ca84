"""Correlation tensors, KL and sandwich-covariance oracles, sample-size bounds
and Monte Carlo concentration checks.

Every report type has a ``to_dict`` that produces a JSON-ready document
carrying ``schema_version``.
"""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import parameter_space as ps
from . import quadrature
from .errors import AssumptionViolation
from .loss import LossContext, gradient, require_quadrature_dim, tilted_expectation
from .sampling import grid_exact_sampler, partition_function
from .statistics import centering_constants, phi_max_bound, problem_constants

SCHEMA_VERSION = "1.0"
LAMBDA_TOL = 1e-10
COND_LIMIT = 1e10


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class _Report:
    def to_dict(self):
        d = _jsonable(asdict(self))
        d["schema_version"] = SCHEMA_VERSION
        return d


# -- correlation -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CorrelationEstimate(_Report):
    """Correlation matrix of vec(phi_bar) with its smallest eigenvalue.

    ``source`` is ``"empirical"`` or ``"quadrature"``.
    """

    H: np.ndarray
    n: int
    lambda_min: float
    source: str

    @property
    def positive_definite(self):
        """False when the smallest eigenvalue is numerically zero (minimality fails)."""
        scale = max(1.0, float(np.max(np.abs(self.H)))) if self.H.size else 1.0
        return self.lambda_min > LAMBDA_TOL * scale


def _estimate(H, n, source):
    H = 0.5 * (H + H.T)
    lam = float(np.linalg.eigvalsh(H)[0]) if H.size else 0.0
    return CorrelationEstimate(H, n, lam, source)


def empirical_correlation(ctx):
    """``(1/n) sum_t vec(phi_bar_t) vec(phi_bar_t)^T``."""
    return _estimate(ctx.phibar @ ctx.phibar.T / ctx.n, ctx.n, "empirical")


def population_correlation(family, domain=None, theta_star=None, nodes=(128, 96)):
    """``E[vec(phi_bar) vec(phi_bar)^T]`` under f(.; Theta*) by quadrature."""
    domain = domain or family.domain
    theta_star = np.zeros(family.shape) if theta_star is None else theta_star
    fn = lambda X, pb: pb[:, :, None] * pb[:, None, :]  # noqa: E731
    H, _ = tilted_expectation(family, theta_star, fn, domain, nodes=nodes,
                              what="population correlation")
    return _estimate(H, 0, "quadrature")


def lambda_min_plugin(ctx, floor=1e-6):
    """Empirical lambda_min clipped below at ``floor``."""
    return max(empirical_correlation(ctx).lambda_min, floor)


# -- KL and population loss --------------------------------------------------

def kl_uniform_vs_shifted(family, domain=None, theta_star=None, theta=None):
    """``KL(U || f(.; Theta* - Theta))`` by quadrature.

    With raw statistics this is
    ``log Z(Delta) - log vol - <<Delta, E_U[Phi]>>`` for ``Delta = Theta* - Theta``.
    Round-off below zero is clipped.
    """
    domain = domain or family.domain
    require_quadrature_dim(domain)
    delta = np.asarray(theta_star, float) - np.asarray(theta, float)
    means = centering_constants(family, domain).means
    Z = partition_function(family, domain, delta)
    value = math.log(Z) - math.log(domain.volume) - float(np.sum(delta * means))
    return max(value, 0.0)


def kl_uniform_vs_shifted_batch(family, domain=None, theta_star=None, thetas=None,
                                nodes=(128, 96), rtol=1e-7):
    """:func:`kl_uniform_vs_shifted` for a stack of parameters ``(m, k1, k2, k3)``."""
    domain = domain or family.domain
    require_quadrature_dim(domain)
    T = np.asarray(thetas, dtype=float).reshape(-1, family.size)
    D = np.asarray(theta_star, float).reshape(1, -1) - T
    means = centering_constants(family, domain).means.reshape(-1)

    def fn(X):
        return np.exp(family.raw(X).reshape(len(X), -1) @ D.T)

    Z, _ = quadrature.integrate_checked(fn, domain, nodes, rtol=rtol, scale=0.0,
                                        what="partition function", entrywise=True)
    value = np.log(Z) - math.log(domain.volume) - D @ means
    return np.maximum(value, 0.0)


# -- sandwich covariance -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class SandwichCovariance(_Report):
    """Asymptotic covariance ``B^-1 A B^-1`` of vec(Theta_hat) under f(.; Theta*)."""

    A: np.ndarray
    B: np.ndarray
    sigma: np.ndarray
    condition_number: float


def sandwich_covariance(family, domain=None, theta_star=None, nodes=(128, 96)):
    """A is the covariance of ``phi_bar exp(-<<Theta*, phi_bar>>)``; B is its
    cross-covariance with ``phi_bar``.

    Raises
    ------
    AssumptionViolation
        When B is singular or its condition number exceeds 1e10.
    """
    domain = domain or family.domain
    theta_star = np.zeros(family.shape) if theta_star is None else np.asarray(theta_star, float)
    tv = theta_star.reshape(-1)

    def moments(X, pb):
        psi = pb * np.exp(-(pb @ tv))[:, None]
        return np.concatenate([pb, psi, (psi[:, :, None] * psi[:, None, :]).reshape(len(X), -1),
                               (pb[:, :, None] * psi[:, None, :]).reshape(len(X), -1)], axis=1)

    K = family.size
    m, _ = tilted_expectation(family, theta_star, moments, domain, nodes=nodes,
                              what="sandwich moments")
    e_pb, e_psi = m[:K], m[K:2 * K]
    A = m[2 * K:2 * K + K * K].reshape(K, K) - np.outer(e_psi, e_psi)
    B = m[2 * K + K * K:].reshape(K, K) - np.outer(e_pb, e_psi)
    A, B = 0.5 * (A + A.T), 0.5 * (B + B.T)
    cond = float(np.linalg.cond(B))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise AssumptionViolation(
            f"B(Theta*) must be invertible for asymptotic normality; condition number {cond:.3e}")
    BinvA = np.linalg.solve(B, A)
    sigma = np.linalg.solve(B, BinvA.T)
    return SandwichCovariance(A, B, 0.5 * (sigma + sigma.T), cond)


# -- sample-size bounds ------------------------------------------------------

@dataclass(frozen=True)
class FiniteSampleBound(_Report):
    n: int
    correlation_branch: float
    gradient_branch: float
    epsilon: float


def finite_sample_n(shape, alpha, delta, lambda_min, phi_max, r, d, g=None):
    """Sample size guaranteeing ``||Theta_hat - Theta*||_T <= alpha`` w.p. 1 - delta.

    Also returns the companion optimization accuracy
    ``epsilon = alpha^2 lambda_min / (8 (1 + r^T d) exp(r^T d))``.
    """
    if not (0 < alpha < 1 and 0 < delta < 1):
        raise ValueError("alpha and delta must lie in (0, 1)")
    if not (lambda_min > 0 and phi_max > 0):
        raise ValueError("lambda_min and phi_max must be positive")
    k1, k2, k3 = shape
    K = k1 * k2 * k3
    r = np.atleast_1d(np.asarray(r, float))
    g = np.ones_like(r) if g is None else np.atleast_1d(np.asarray(g, float))
    rd = float(np.dot(r, d))
    rg = float(np.dot(r, g))
    b1 = 8 * phi_max**4 * K**2 / lambda_min**2 * math.log(4 * K**2 / delta)
    b2 = (2**9 * phi_max**2 * k1**2 * k2**2 * rg**2 * (1 + rd) ** 2 * math.exp(4 * rd)
          / (alpha**4 * lambda_min**2) * math.log(4 * K / delta))
    eps = alpha**2 * lambda_min / (8 * (1 + rd) * math.exp(rd))
    return FiniteSampleBound(int(math.ceil(max(b1, b2))), b1, b2, eps)


def rsc_constant(lambda_min, r, d):
    """``lambda_min exp(-r^T d) / (4 (1 + r^T d))``, the restricted strong convexity modulus."""
    rd = float(np.dot(r, d))
    return lambda_min * math.exp(-rd) / (4 * (1 + rd))


def rsc_sample_size(shape, delta, lambda_min, phi_max):
    """n above which the restricted strong convexity bound holds w.p. 1 - delta."""
    K = int(np.prod(shape))
    return int(math.floor(8 * phi_max**4 * K**2 / lambda_min**2
                          * math.log(2 * K**2 / delta))) + 1


def correlation_epsilon(n, delta, phi_max, shape):
    """Entrywise deviation of the empirical correlation guaranteed at n samples."""
    K = int(np.prod(shape))
    return math.sqrt(2 * phi_max**4 * math.log(2 * K**2 / delta) / n)


def correlation_sample_size(epsilon, delta, phi_max, shape):
    K = int(np.prod(shape))
    return int(math.floor(2 * phi_max**4 / epsilon**2 * math.log(2 * K**2 / delta))) + 1


def gradient_epsilon(n, delta, phi_max, rd, shape):
    """Max-norm bound on the gradient at Theta* guaranteed at n samples."""
    K = int(np.prod(shape))
    return math.sqrt(2 * phi_max**2 * math.exp(2 * rd) * math.log(2 * K / delta) / n)


def gradient_sample_size(epsilon, delta, phi_max, rd, shape):
    K = int(np.prod(shape))
    return int(math.floor(2 * phi_max**2 * math.exp(2 * rd) / epsilon**2
                          * math.log(2 * K / delta))) + 1


# -- concentration checks ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConcentrationReport(_Report):
    """Outcome of a Monte Carlo check against a Hoeffding-type bound."""

    kind: str
    n: int
    trials: int
    delta: float
    epsilon: float
    deviations: np.ndarray = field(repr=False)
    violation_fraction: float
    mean: np.ndarray = None
    standard_error: np.ndarray = None

    @property
    def max_deviation(self):
        return float(np.max(self.deviations))

    def violation_limit(self, z=3.0):
        """``delta`` plus z binomial standard errors."""
        return self.delta + z * math.sqrt(self.delta * (1 - self.delta) / self.trials)


def _trial_seeds(seed, trials):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]


def concentration_check_correlation(family, domain=None, theta_star=None, n=10_000, trials=200,
                                    delta=0.05, phi_max=None, seed=0, resolution=256):
    """Max entrywise ``|H_hat - H|`` over independent grid-sampled sets.

    The deviation threshold solves the Hoeffding sample-size condition for
    epsilon at the given n and delta. ``phi_max`` defaults to the
    closed-form bound of the family.
    """
    domain = domain or family.domain
    theta_star = np.zeros(family.shape) if theta_star is None else np.asarray(theta_star, float)
    phi_max = phi_max if phi_max is not None else phi_max_bound(family, domain)
    H = population_correlation(family, domain, theta_star).H
    table = centering_constants(family, domain)
    eps = correlation_epsilon(n, delta, phi_max, family.shape)
    dev = np.empty(trials)
    for i, s in enumerate(_trial_seeds(seed, trials)):
        S = grid_exact_sampler(family, domain, theta_star, resolution, n, s)
        ctx = LossContext.build(family, S, table)
        dev[i] = np.max(np.abs(empirical_correlation(ctx).H - H))
    return ConcentrationReport("correlation", n, trials, delta, eps, dev,
                               float(np.mean(dev > eps)))


def concentration_check_gradient(family, domain=None, theta_star=None, n=10_000, trials=200,
                                 spec=None, delta=0.05, constants=None, seed=0, resolution=256):
    """Distribution of ``||grad L_n(Theta*)||_max`` over independent sample sets.

    ``spec`` supplies the radii r and, unless ``constants`` is given, the
    dual-norm bounds d used in the threshold.
    """
    domain = domain or family.domain
    theta_star = np.zeros(family.shape) if theta_star is None else np.asarray(theta_star, float)
    if spec is None:
        spec = ps.ConstraintSpec(tuple(("l11", max(1.0, ps.slice_norm(theta_star[:, :, i], "l11")))
                                       for i in range(family.shape[2])))
    constants = constants or problem_constants(family, spec, domain)
    rd = constants.inner_bound(spec.radii)
    eps = gradient_epsilon(n, delta, constants.phi_max, rd, family.shape)
    table = centering_constants(family, domain)
    dev = np.empty(trials)
    grads = np.empty((trials, family.size))
    for i, s in enumerate(_trial_seeds(seed, trials)):
        S = grid_exact_sampler(family, domain, theta_star, resolution, n, s)
        g = gradient(LossContext.build(family, S, table), theta_star).reshape(-1)
        grads[i] = g
        dev[i] = np.max(np.abs(g))
    mean = grads.mean(axis=0)
    se = grads.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.full_like(mean, np.inf)
    return ConcentrationReport("gradient", n, trials, delta, eps, dev,
                               float(np.mean(dev > eps)), mean, se)


# -- projection cost ---------------------------------------------------------

@dataclass(frozen=True)
class ProjectionCost(_Report):
    """Median projection time and modelled operation count per size."""

    norm: str
    sizes: tuple
    seconds: tuple
    op_counts: tuple

    def growth(self):
        """Ratios last/first of measured time and of the operation model."""
        return self.seconds[-1] / self.seconds[0], self.op_counts[-1] / self.op_counts[0]


def projection_op_count(norm, k1, k2):
    """Operation model: sort-based simplex projection for L11, thin SVD for nuclear."""
    m = k1 * k2
    if norm == "l11":
        return m * math.log2(max(m, 2)) + 4 * m
    lo, hi = min(k1, k2), max(k1, k2)
    return 4 * hi * lo**2 + 8 * lo**3 + 2 * m * lo


def projection_cost_sweep(norm, sizes, repeats=7, seed=0):
    """Time the slice projection on random ``k1 x k2`` matrices.

    ``sizes`` is a sequence of ``(k1, k2)``. Each point reports the median of
    ``repeats`` runs; the radius is a tenth of the matrix norm so the
    projection is never the identity.
    """
    rng = np.random.default_rng(seed)
    proj = ps.project_l11_ball if norm == "l11" else ps.project_nuclear_ball
    secs, ops = [], []
    for k1, k2 in sizes:
        M = rng.standard_normal((k1, k2))
        r = 0.1 * ps.slice_norm(M, norm)
        proj(M, r)
        runs = []
        for _ in range(repeats):
            t = time.perf_counter()
            proj(M, r)
            runs.append(time.perf_counter() - t)
        secs.append(float(np.median(runs)))
        ops.append(float(projection_op_count(norm, k1, k2)))
    return ProjectionCost(norm, tuple(tuple(s) for s in sizes), tuple(secs), tuple(ops))
