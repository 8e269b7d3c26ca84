"""Learning truncated exponential families with an exponential loss.

The natural parameter Theta of a density proportional to
exp(<<Theta, Phi(x)>>) on a bounded support is estimated by minimizing
(1/n) sum_t exp(-<<Theta, phi_bar(x_t)>>) with projected gradient descent
over a product of L1,1 / nuclear-norm balls.
"""

from .errors import (AccuracyError, AssumptionViolation, CapacityError, DomainError,
                     FeasibilityWarning, InvalidRadiusError, NumericalError, SchemaError,
                     TruncExpError, TuningWarning, UnsupportedConfigurationError)
from .loss import (LossContext, gradient, hessian, loss, population_gradient, population_loss,
                   smoothness_constant, taylor_residual)
from .optimizer import FitConfig, FitResult, fit, iteration_budget, step_size
from .parameter_space import (ConstraintSpec, SliceConstraint, project_constraint_set,
                              project_l11_ball, project_nuclear_ball)
from .sampling import (SampleSet, grid_exact_sampler, log_unnormalized_density,
                       metropolis_sampler, partition_function)
from .statistics import (CenteringTable, StatisticFamily, SupportDomain, centering_constants,
                         dual_norm_bound, evaluate_centered, evaluate_raw, phi_max_bound,
                         problem_constants)

__version__ = "0.1.0"
