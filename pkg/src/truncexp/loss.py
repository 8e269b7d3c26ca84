"""The exponential loss, its derivatives, and quadrature population oracles.

For samples x_1..x_n the loss is

    L_n(Theta) = (1/n) sum_t exp(-<<Theta, phi_bar(x_t)>>)

The per-sample inner products are computed once per call and shared by the
loss value and the gradient. Sample-axis reductions use numpy's pairwise
summation, so results do not depend on BLAS threading.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import CapacityError, FeasibilityWarning, NumericalError
from .parameter_space import check_parameter
from .statistics import centered, centering_constants

HESSIAN_MAX_DIM = 4096
POPULATION_NODES = (128, 96)
POPULATION_RTOL = 1e-7


@dataclass(frozen=True, eq=False)
class LossContext:
    """Samples together with their cached centered statistics.

    ``phibar`` has shape ``(K, n)`` with ``K = k1*k2*k3`` (C-order
    vectorization of the tensor), one column per sample.
    """

    family: object
    table: object
    samples: np.ndarray
    phibar: np.ndarray
    inner_bound: float = None

    @classmethod
    def build(cls, family, samples, table=None, inner_bound=None):
        X = np.asarray(getattr(samples, "data", samples), dtype=float)
        X = family.check_domain(X)
        table = table if table is not None else centering_constants(family)
        phibar = np.ascontiguousarray(centered(family, table, X).reshape(len(X), -1).T)
        phibar.setflags(write=False)
        return cls(family, table, X, phibar, inner_bound)

    @property
    def shape(self):
        return self.family.shape

    @property
    def n(self):
        return self.phibar.shape[1]

    @property
    def domain(self):
        return self.family.domain

    def with_inner_bound(self, bound):
        return LossContext(self.family, self.table, self.samples, self.phibar, bound)


def inner_products(ctx, theta):
    """``<<Theta, phi_bar(x_t)>>`` for every sample, shape ``(n,)``."""
    theta = check_parameter(theta, ctx.shape)
    s = theta.reshape(-1) @ ctx.phibar
    if ctx.inner_bound is not None and s.size:
        worst = float(np.max(np.abs(s)))
        if worst > ctx.inner_bound + 1e-6:
            warnings.warn(
                f"|<<Theta, phi_bar>>| reached {worst:.4g} > r^T d = {ctx.inner_bound:.4g}; "
                "Theta is probably infeasible",
                FeasibilityWarning,
                stacklevel=3,
            )
    return s


def _weights(ctx, theta):
    w = np.exp(-inner_products(ctx, theta))
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite exp(-<<Theta, phi_bar>>) encountered")
    return w


def loss(ctx, theta):
    """Empirical exponential loss; always strictly positive."""
    return float(np.sum(_weights(ctx, theta)) / ctx.n)


def loss_and_gradient(ctx, theta):
    w = _weights(ctx, theta)
    value = float(np.sum(w) / ctx.n)
    grad = -np.sum(ctx.phibar * w, axis=1) / ctx.n
    return value, grad.reshape(ctx.shape)


def gradient(ctx, theta):
    """Entry (u,v,w): ``-(1/n) sum_t phi_bar_uvw(x_t) exp(-<<Theta, phi_bar(x_t)>>)``."""
    return loss_and_gradient(ctx, theta)[1]


def hessian(ctx, theta):
    """Hessian over vec(Theta), shape ``(K, K)``; PSD by construction."""
    K = ctx.phibar.shape[0]
    if K > HESSIAN_MAX_DIM:
        raise CapacityError(f"Hessian dimension {K} exceeds the {HESSIAN_MAX_DIM} guard")
    w = _weights(ctx, theta)
    H = (ctx.phibar * w) @ ctx.phibar.T / ctx.n
    return 0.5 * (H + H.T)


def smoothness_constant(shape, phi_max, r, d):
    """``k1 k2 k3 phi_max^2 exp(r^T d)``, a bound on the largest Hessian eigenvalue."""
    return float(np.prod(shape) * phi_max**2 * np.exp(np.dot(r, d)))


def taylor_residual(ctx, theta_star, delta):
    """First-order Taylor residual of the loss at ``theta_star`` in direction ``delta``.

    Computed per sample as ``e_t (exp(-a_t) - 1 + a_t)`` with
    ``e_t = exp(-<<Theta*, phi_bar_t>>)`` and ``a_t = <<Delta, phi_bar_t>>``;
    this form is nonnegative term by term and avoids the cancellation of
    subtracting two nearly equal losses.
    """
    e = _weights(ctx, theta_star)
    a = inner_products(ctx, delta)
    return float(np.sum(e * (np.expm1(-a) + a)) / ctx.n)


# -- population oracles ---------------------------------------------------

def require_quadrature_dim(domain, max_dim=3):
    if domain.dim > max_dim:
        raise CapacityError(f"quadrature oracles support p <= {max_dim}, got p={domain.dim}")


def tilted_integral(family, theta, fn, domain=None, table=None, nodes=POPULATION_NODES,
                    rtol=POPULATION_RTOL, scale=0.0, what="integral", entrywise=False):
    """``int fn(x, phi_bar) exp(<<theta, phi_bar(x)>>) dx`` with a two-rule check.

    ``fn`` receives the points ``(N, p)`` and the flattened centered
    statistics ``(N, K)`` and returns an ``(N, ...)`` array. Returns
    ``(value, error_estimate)``.
    """
    domain = domain or family.domain
    require_quadrature_dim(domain)
    table = table if table is not None else centering_constants(family, domain)
    tv = np.asarray(theta, dtype=float).reshape(-1)

    def integrand(X):
        pb = centered(family, table, X).reshape(len(X), -1)
        dens = np.exp(pb @ tv)
        out = np.asarray(fn(X, pb), dtype=float)
        return out * dens.reshape((-1,) + (1,) * (out.ndim - 1))

    return quadrature.integrate_checked(integrand, domain, nodes, rtol=rtol, scale=scale,
                                        what=what, entrywise=entrywise)


def tilted_expectation(family, theta_star, fn, domain=None, table=None, nodes=POPULATION_NODES,
                       rtol=POPULATION_RTOL, what="expectation", entrywise=False):
    """Expectation of ``fn`` under the truncated density f(.; theta_star)."""
    domain = domain or family.domain
    table = table if table is not None else centering_constants(family, domain)
    ones = lambda X, pb: np.ones(len(X))  # noqa: E731
    Z, _ = tilted_integral(family, theta_star, ones, domain, table, nodes, rtol,
                           what="partition function")
    num, err = tilted_integral(family, theta_star, fn, domain, table, nodes, rtol,
                               scale=0.0 if entrywise else float(Z), what=what,
                               entrywise=entrywise)
    return num / Z, err / Z


def population_loss(family, theta_star, theta, domain=None, table=None, nodes=POPULATION_NODES):
    """``E_{f(.;Theta*)}[exp(-<<Theta, phi_bar(x)>>)]`` by quadrature."""
    tv = np.asarray(theta, dtype=float).reshape(-1)
    fn = lambda X, pb: np.exp(-(pb @ tv))  # noqa: E731
    value, _ = tilted_expectation(family, theta_star, fn, domain, table, nodes,
                                  what="population loss")
    return float(value)


def population_loss_batch(family, theta_star, thetas, domain=None, table=None,
                          nodes=POPULATION_NODES):
    """:func:`population_loss` for a stack of parameters ``(m, k1, k2, k3)``.

    One quadrature pass serves every query; each value is checked relative
    to itself.
    """
    T = np.asarray(thetas, dtype=float).reshape(-1, family.size)
    fn = lambda X, pb: np.exp(-(pb @ T.T))  # noqa: E731
    value, _ = tilted_expectation(family, theta_star, fn, domain, table, nodes,
                                  what="population loss", entrywise=True)
    return value


def population_gradient(family, theta_star, theta, domain=None, table=None,
                        nodes=POPULATION_NODES):
    """Gradient of the population loss, shape ``family.shape``."""
    tv = np.asarray(theta, dtype=float).reshape(-1)
    fn = lambda X, pb: -pb * np.exp(-(pb @ tv))[:, None]  # noqa: E731
    value, _ = tilted_expectation(family, theta_star, fn, domain, table, nodes,
                                  what="population gradient")
    return value.reshape(family.shape)
