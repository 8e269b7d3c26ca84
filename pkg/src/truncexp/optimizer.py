"""Projected gradient descent with the smoothness-derived step and budget."""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolation, NumericalError, TruncExpError
from .loss import loss_and_gradient, smoothness_constant
from .parameter_space import project_constraint_set, tensor_norm
from .statistics import problem_constants


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    ``epsilon`` is the optimality-gap target that sets the iteration budget;
    ``max_iters`` and ``step_size`` override the budget and the 1/L step.
    The run also stops once the gradient-mapping norm stays below
    ``stop_tol`` for ``stop_patience`` consecutive iterations. ``bounds``
    selects how phi_max and d are derived when they are not passed to
    :func:`fit` (``"closed_form"`` or ``"interval"``).
    """

    epsilon: float = 1e-6
    max_iters: int = None
    step_size: float = None
    trace_stride: int = 1
    stop_tol: float = 1e-10
    stop_patience: int = 5
    bounds: str = "closed_form"
    check_identifiability: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.trace_stride < 1:
            raise ValueError("trace_stride must be >= 1")


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    loss: float
    grad_map_norm: float


@dataclass(frozen=True)
class Certificate:
    """How the run ended and what it guarantees.

    ``budget_met`` means the iteration budget tau was executed in full,
    which certifies an epsilon-optimal iterate when the step is at most
    1/L. ``gap_bound`` is an a-posteriori bound
    ``||G|| * diam(feasible set)`` on the final optimality gap, where G is
    the last gradient mapping.
    """

    budget_met: bool
    tau: int
    tau_conservative: bool
    stop_reason: str
    gap_bound: float
    epsilon: float
    guarantee_applies: bool
    smoothness: float
    step_size: float

    @property
    def epsilon_certified(self):
        return self.guarantee_applies and (self.budget_met or self.gap_bound <= self.epsilon)


@dataclass(frozen=True, eq=False)
class FitResult:
    theta: np.ndarray
    loss: float
    iterations: int
    trace: tuple
    certificate: Certificate
    timings: dict
    loss_history: np.ndarray = field(repr=False)

    def to_dict(self):
        c = self.certificate
        return {
            "theta": self.theta.tolist(),
            "shape": list(self.theta.shape),
            "loss": self.loss,
            "iterations": self.iterations,
            "trace": [[p.iteration, p.loss, p.grad_map_norm] for p in self.trace],
            "certificate": {
                "budget_met": c.budget_met,
                "tau": c.tau,
                "tau_conservative": c.tau_conservative,
                "stop_reason": c.stop_reason,
                "gap_bound": c.gap_bound,
                "epsilon": c.epsilon,
                "epsilon_certified": c.epsilon_certified,
                "guarantee_applies": c.guarantee_applies,
                "smoothness": c.smoothness,
                "step_size": c.step_size,
            },
            "timings": dict(self.timings),
        }


def step_size(shape, phi_max, r, d):
    """Reciprocal of the smoothness constant."""
    return 1.0 / smoothness_constant(shape, phi_max, r, d)


def iteration_budget(epsilon, shape, phi_max, r, d, theta_norm_bound=None):
    """Iterations that guarantee an epsilon-optimal iterate.

    ``2 L ||Theta_hat||_T^2 / epsilon`` with L the smoothness constant. When
    ``theta_norm_bound`` is unknown, ``||Theta_hat||_T^2`` is replaced by
    ``k1 k2 k3 max_i r_i^2``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if theta_norm_bound is None:
        norm_sq = float(np.prod(shape)) * float(np.max(r)) ** 2
    else:
        norm_sq = float(theta_norm_bound) ** 2
    value = 2.0 * smoothness_constant(shape, phi_max, r, d) / epsilon * norm_sq
    # guard against 200.00000000000003 style round-up
    return max(1, int(math.ceil(value * (1.0 - 1e-12))))


def fit(ctx, spec, cfg=None, constants=None, callback=None):
    """Minimize the empirical loss over the constraint set from Theta = 0.

    Parameters
    ----------
    ctx : LossContext
    spec : ConstraintSpec
    cfg : FitConfig, optional
    constants : ProblemConstants, optional
        phi_max and d; derived from the family with ``cfg.bounds`` if omitted.
    callback : callable, optional
        Called as ``callback(t, theta)`` after every iteration.

    Returns
    -------
    FitResult
    """
    cfg = cfg or FitConfig()
    t_start = time.perf_counter()
    if len(spec) != ctx.shape[2]:
        raise TruncExpError(f"{len(spec)} slice constraints for k3={ctx.shape[2]}")
    if cfg.check_identifiability:
        minimal, ratio = ctx.family.check_minimality()
        if not minimal:
            raise AssumptionViolation(
                "statistics are not minimal on the support (autocorrelation has a zero "
                f"eigenvalue, singular-value ratio {ratio:.2e}); parameters are not identifiable")
    if constants is None:
        constants = problem_constants(ctx.family, spec, method=cfg.bounds)
    r, d = spec.radii, np.asarray(constants.d)
    L = smoothness_constant(ctx.shape, constants.phi_max, r, d)
    eta = cfg.step_size if cfg.step_size is not None else 1.0 / L
    tau = iteration_budget(cfg.epsilon, ctx.shape, constants.phi_max, r, d)
    limit = cfg.max_iters if cfg.max_iters is not None else tau
    ctx = ctx.with_inner_bound(float(np.dot(r, d)))

    theta = np.zeros(ctx.shape)
    value, grad = loss_and_gradient(ctx, theta)
    history = [value]
    trace = [TracePoint(0, value, float("nan"))]
    streak, reason, gm = 0, "budget" if limit >= tau else "max_iters", float("inf")
    t_loop = time.perf_counter()
    it = 0
    for it in range(1, limit + 1):
        new = project_constraint_set(theta - eta * grad, spec)
        gm = tensor_norm(theta - new) / eta
        value, grad = loss_and_gradient(ctx, new)
        if not math.isfinite(value):
            raise NumericalError(f"non-finite loss at iteration {it}")
        theta = new
        history.append(value)
        if callback is not None:
            callback(it, theta)
        if it % cfg.trace_stride == 0:
            trace.append(TracePoint(it, value, gm))
        streak = streak + 1 if gm < cfg.stop_tol else 0
        if streak >= cfg.stop_patience:
            reason = "plateau"
            break
    if trace[-1].iteration != it:
        trace.append(TracePoint(it, value, gm))
    if not spec.contains(theta):
        raise TruncExpError("final iterate is infeasible; projection is broken")
    diam = 2.0 * math.sqrt(float(np.sum(r**2)))
    cert = Certificate(
        budget_met=it >= tau,
        tau=tau,
        tau_conservative=True,
        stop_reason=reason,
        gap_bound=gm * diam,
        epsilon=cfg.epsilon,
        guarantee_applies=eta <= 1.0 / L * (1 + 1e-12),
        smoothness=L,
        step_size=eta,
    )
    t_end = time.perf_counter()
    return FitResult(
        theta=theta,
        loss=value,
        iterations=it,
        trace=tuple(trace),
        certificate=cert,
        timings={"setup_s": t_loop - t_start, "loop_s": t_end - t_loop},
        loss_history=np.asarray(history),
    )
