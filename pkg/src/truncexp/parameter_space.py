"""Slice norms, constraint sets and Euclidean projections onto them.

Parameters are plain ``numpy`` arrays of shape ``(k1, k2, k3)``; slice
``i`` is ``theta[:, :, i]``.

The feasible set is a product of per-slice balls. Because the squared
tensor norm is the sum of squared Frobenius norms of the slices, the
tensor-norm projection onto the product set is obtained by projecting every
slice onto its own ball independently.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRadiusError, NumericalError, TruncExpError

NORMS = ("l11", "nuclear")
FEASIBILITY_SLACK = 1e-9


@dataclass(frozen=True)
class SliceConstraint:
    norm: str
    radius: float

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if not self.radius > 0:
            raise InvalidRadiusError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class ConstraintSpec:
    """Per-slice norm kinds and radii defining the feasible set."""

    slices: tuple

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(
            s if isinstance(s, SliceConstraint) else SliceConstraint(*s) for s in self.slices))

    @classmethod
    def from_list(cls, items):
        """From the JSON form ``[{"norm": "l11", "radius": 1.5}, ...]``."""
        return cls(tuple(SliceConstraint(it["norm"], float(it["radius"])) for it in items))

    def to_list(self):
        return [{"norm": s.norm, "radius": s.radius} for s in self.slices]

    def __len__(self):
        return len(self.slices)

    def __iter__(self):
        return iter(self.slices)

    @property
    def radii(self):
        return np.array([s.radius for s in self.slices])

    @property
    def g(self):
        """Norm-domination factors; 1 for every supported norm."""
        return np.ones(len(self.slices))

    def slice_norms(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.array([slice_norm(theta[:, :, i], s.norm) for i, s in enumerate(self.slices)])

    def contains(self, theta, slack=FEASIBILITY_SLACK):
        return bool(np.all(self.slice_norms(theta) <= self.radii + slack))


def slice_norm(M, kind):
    """Entrywise L1,1 norm or nuclear norm of a matrix."""
    M = np.asarray(M, dtype=float)
    if kind == "l11":
        return float(np.abs(M).sum())
    if kind == "nuclear":
        return float(np.linalg.svd(M, compute_uv=False).sum())
    raise ValueError(f"unknown norm {kind!r}")


def dual_norm(M, kind):
    """Dual of :func:`slice_norm`: max norm for L1,1, spectral norm for nuclear."""
    M = np.asarray(M, dtype=float)
    if kind == "l11":
        return float(np.abs(M).max()) if M.size else 0.0
    if kind == "nuclear":
        return float(np.linalg.svd(M, compute_uv=False).max()) if M.size else 0.0
    raise ValueError(f"unknown norm {kind!r}")


def tensor_norm(theta):
    """Square root of the sum of squared entries."""
    return float(np.sqrt(np.sum(np.square(theta))))


def project_simplex(v, s=1.0):
    """Euclidean projection of a nonnegative vector onto ``{w >= 0, sum w = s}``.

    Sort-based threshold search, O(m log m).
    """
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u)
    hits = np.nonzero(u * np.arange(1, len(u) + 1) > (cssv - s))[0]
    # empty only when s is lost to rounding against huge entries
    rho = hits[-1] if hits.size else 0
    tau = (cssv[rho] - s) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def project_l1_vector(v, r):
    """Projection onto the L1 ball of radius r (identity inside the ball)."""
    if not r > 0:
        raise InvalidRadiusError(f"radius must be positive, got {r}")
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= r:
        return v.copy()
    return np.sign(v) * project_simplex(a, r)


def project_l11_ball(M, r):
    """Frobenius projection onto ``{N : ||N||_{1,1} <= r}``."""
    M = np.asarray(M, dtype=float)
    return project_l1_vector(M.ravel(), r).reshape(M.shape)


def _svd_fixed_signs(M):
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(M) if np.all(np.isfinite(M)) else np.inf
        raise NumericalError(f"SVD failed (condition number {cond:.3e}): {exc}") from exc
    # make the largest-magnitude entry of every left singular vector positive
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, s, Vt * signs[:, None]


def project_nuclear_ball(M, r):
    """Frobenius projection onto ``{N : ||N||_* <= r}`` via the SVD."""
    if not r > 0:
        raise InvalidRadiusError(f"radius must be positive, got {r}")
    M = np.asarray(M, dtype=float)
    U, s, Vt = _svd_fixed_signs(M)
    if s.sum() <= r:
        return M.copy()
    return (U * project_l1_vector(s, r)) @ Vt


_PROJECTORS = {"l11": project_l11_ball, "nuclear": project_nuclear_ball}


def project_constraint_set(theta, spec):
    """Tensor-norm projection onto the product of slice balls."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 3 or theta.shape[2] != len(spec):
        raise TruncExpError(f"parameter shape {theta.shape} does not match {len(spec)} slices")
    out = np.empty_like(theta)
    for i, s in enumerate(spec):
        out[:, :, i] = _PROJECTORS[s.norm](theta[:, :, i], s.radius)
    return out


def check_parameter(theta, shape):
    """Validate a parameter tensor: given shape, all entries finite."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != tuple(shape):
        theta = theta.reshape(shape) if theta.size == int(np.prod(shape)) else theta
    if theta.shape != tuple(shape):
        raise TruncExpError(f"parameter shape {theta.shape} != expected {tuple(shape)}")
    if not np.all(np.isfinite(theta)):
        raise NumericalError("parameter tensor has non-finite entries")
    return theta


# -- norm domination -----------------------------------------------------

def matrix_norm(M, kind, p=1.0, q=1.0):
    """Entrywise L_{p,q}, Schatten-p or operator-p norm.

    Operator norms are supported for p in {1, 2, inf}, the cases with a
    closed form.
    """
    M = np.asarray(M, dtype=float)
    if kind == "lpq":
        cols = np.sum(np.abs(M) ** p, axis=0) ** (1.0 / p)
        return float(np.sum(cols**q) ** (1.0 / q))
    if kind == "schatten":
        s = np.linalg.svd(M, compute_uv=False)
        return float(np.max(s)) if np.isinf(p) else float(np.sum(s**p) ** (1.0 / p))
    if kind == "operator":
        if p == 1:
            return float(np.abs(M).sum(axis=0).max())
        if p == 2:
            return float(np.linalg.svd(M, compute_uv=False).max())
        if np.isinf(p):
            return float(np.abs(M).sum(axis=1).max())
        raise ValueError("operator-p norm is implemented for p in {1, 2, inf}")
    raise ValueError(f"unknown norm family {kind!r}")


@dataclass(frozen=True)
class NormDominationReport:
    kind: str
    p: float
    q: float
    trials: int
    max_ratio: float
    violations: int

    @property
    def ok(self):
        return self.violations == 0


def norm_domination_ratio(M, kind, p=1.0, q=1.0):
    """``R(M) / (k1 k2 ||M||_max)``; at most 1 when g = 1 holds."""
    M = np.asarray(M, dtype=float)
    denom = M.shape[0] * M.shape[1] * np.abs(M).max()
    return matrix_norm(M, kind, p, q) / denom if denom > 0 else 0.0


def check_norm_domination(kind, trials, p=1.0, q=1.0, shape=None, seed=0, slack=1e-12):
    """Check ``R(M) <= k1 k2 ||M||_max`` on random matrices.

    Shapes are drawn at random (up to 8 x 8) unless ``shape`` is fixed, and
    entries mix Gaussian, uniform and rank-one draws so that both dense and
    structured matrices are covered.
    """
    if p < 1 or q < 1:
        raise ValueError("norm domination is stated for p, q >= 1")
    rng = np.random.default_rng(seed)
    worst, violations = 0.0, 0
    for t in range(trials):
        k1, k2 = shape if shape is not None else rng.integers(1, 9, size=2)
        style = t % 3
        if style == 0:
            M = rng.standard_normal((k1, k2))
        elif style == 1:
            M = rng.uniform(-1, 1, (k1, k2))
        else:
            M = np.outer(rng.standard_normal(k1), rng.standard_normal(k2))
        ratio = norm_domination_ratio(M, kind, p, q)
        worst = max(worst, ratio)
        violations += ratio > 1.0 + slack
    return NormDominationReport(kind, float(p), float(q), trials, worst, int(violations))
