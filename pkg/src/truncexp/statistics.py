"""Natural statistic families, their centering, and boundedness constants.

A family maps a point x in the support to a tensor Phi(x) of shape
``(k1, k2, k3)``. Every tensor position holds one *term*: a monomial
``prod_i x_i**e_i`` or a harmonic ``sin(w.x)`` / ``cos(w.x)``. Centered
statistics subtract the mean of each term under the uniform distribution
on the support.

Term layout
-----------
``graded``
    Exponent vectors in graded lexicographic order (total degree ascending,
    then lexicographically descending, so ``x1`` precedes ``x2``), followed
    by trigonometric terms for mixed families. Terms fill each slice in
    row-major order; with ``shared_slices`` every slice repeats the same
    terms, otherwise slices are filled one after the other.
``outer``
    Degree-2 polynomial statistics arranged as ``xt xt^T`` with
    ``xt = (1, x1, ..., xp)``. This is the layout for which a spectral-norm
    bound on the centered slice is available.
"""

from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product
from math import gamma, pi

import numpy as np

from . import quadrature
from .errors import (
    DomainError,
    TruncExpError,
    UnsupportedConfigurationError,
)

DOMAIN_SLACK = 1e-12
CENTERING_NODES = 64


@dataclass(frozen=True, eq=False)
class SupportDomain:
    """A box ``prod [a_i, b_i]`` or a Euclidean ball ``B(center, radius)``."""

    kind: str
    lower: np.ndarray = None
    upper: np.ndarray = None
    center: np.ndarray = None
    radius: float = None

    def __post_init__(self):
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=float).ravel()
            hi = np.asarray(self.upper, dtype=float).ravel()
            if lo.shape != hi.shape or lo.size == 0:
                raise ValueError("box bounds must be non-empty and of equal length")
            if not np.all(lo < hi):
                raise ValueError("box requires a_i < b_i for every coordinate")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "ball":
            c = np.asarray(self.center, dtype=float).ravel()
            if c.size == 0:
                raise ValueError("ball center must be non-empty")
            if not (self.radius is not None and self.radius > 0):
                raise ValueError("ball radius must be positive")
            object.__setattr__(self, "center", c)
            object.__setattr__(self, "radius", float(self.radius))
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def box(cls, bounds):
        """Box from a list of ``(a_i, b_i)`` pairs."""
        bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        return cls("box", lower=bounds[:, 0], upper=bounds[:, 1])

    @classmethod
    def unit_box(cls, dim, b=1.0):
        return cls.box([(0.0, b)] * dim)

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=center, radius=radius)

    @property
    def dim(self):
        return len(self.lower) if self.kind == "box" else len(self.center)

    @property
    def volume(self):
        if self.kind == "box":
            return float(np.prod(self.upper - self.lower))
        p = self.dim
        return pi ** (p / 2) / gamma(p / 2 + 1) * self.radius**p

    def bounding_box(self):
        if self.kind == "box":
            return self.lower, self.upper
        return self.center - self.radius, self.center + self.radius

    def contains(self, X, slack=DOMAIN_SLACK):
        """Row-wise membership test for an ``(N, p)`` array (or a single point)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            return np.zeros(X.shape[0], dtype=bool)
        if self.kind == "box":
            return np.all((X >= self.lower - slack) & (X <= self.upper + slack), axis=1)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius + slack

    def sample_uniform(self, rng, n):
        if self.kind == "box":
            return rng.uniform(self.lower, self.upper, size=(n, self.dim))
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + g * rad[:, None]

    def max_abs_coordinate(self):
        """Largest |x_i| over the domain (a valid bound for balls too)."""
        if self.kind == "box":
            return float(np.max(np.maximum(np.abs(self.lower), np.abs(self.upper))))
        return float(np.max(np.abs(self.center)) + self.radius)

    def to_dict(self):
        if self.kind == "box":
            return {"kind": "box", "bounds": np.column_stack([self.lower, self.upper]).tolist()}
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "box":
            return cls.box(d["bounds"])
        return cls.ball(d["center"], d["radius"])

    def __eq__(self, other):
        return isinstance(other, SupportDomain) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


@dataclass(frozen=True)
class Term:
    """One scalar statistic: ``poly`` (powers), or ``sin``/``cos`` (frequencies)."""

    kind: str
    powers: tuple

    @property
    def degree(self):
        return sum(self.powers)

    @property
    def is_constant(self):
        return self.kind == "poly" and self.degree == 0

    def label(self):
        if self.kind == "poly":
            parts = [f"x{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(self.powers) if e]
            return "*".join(parts) or "1"
        arg = "+".join((f"{w}*" if w > 1 else "") + f"x{i + 1}" for i, w in enumerate(self.powers) if w)
        return f"{self.kind}({arg})"

    def __call__(self, X):
        X = np.atleast_2d(X)
        if self.kind == "poly":
            out = np.ones(X.shape[0])
            for i, e in enumerate(self.powers):
                if e:
                    out = out * X[:, i] ** e
            return out
        arg = X @ np.asarray(self.powers, dtype=float)
        return np.sin(arg) if self.kind == "sin" else np.cos(arg)

    def uniform_mean_on_box(self, lower, upper):
        """Closed-form mean over a box under the uniform distribution."""
        if self.kind == "poly":
            out = 1.0
            for e, a, b in zip(self.powers, lower, upper):
                out *= (b ** (e + 1) - a ** (e + 1)) / ((e + 1) * (b - a))
            return float(out)
        z = 1.0 + 0.0j
        for w, a, b in zip(self.powers, lower, upper):
            if w:
                z *= (np.exp(1j * w * b) - np.exp(1j * w * a)) / (1j * w * (b - a))
        return float(z.imag if self.kind == "sin" else z.real)

    def range_on_box(self, lower, upper):
        """Exact range ``(min, max)`` of the term over a box."""
        if self.kind == "poly":
            lo, hi = 1.0, 1.0
            for e, a, b in zip(self.powers, lower, upper):
                if e == 0:
                    continue
                ends = (a**e, b**e)
                f_lo, f_hi = min(ends), max(ends)
                if e % 2 == 0 and a < 0 < b:
                    f_lo = 0.0
                prods = (lo * f_lo, lo * f_hi, hi * f_lo, hi * f_hi)
                lo, hi = min(prods), max(prods)
            return lo, hi
        w = np.asarray(self.powers, dtype=float)
        t_lo, t_hi = float(w @ lower), float(w @ upper)
        return _trig_range(self.kind, t_lo, t_hi)


def _trig_range(kind, t_lo, t_hi):
    f = np.sin if kind == "sin" else np.cos
    if t_hi - t_lo >= 2 * pi:
        return -1.0, 1.0
    vals = [f(t_lo), f(t_hi)]
    # critical points of sin at pi/2 + k*pi, of cos at k*pi
    offset = pi / 2 if kind == "sin" else 0.0
    k = np.ceil((t_lo - offset) / pi)
    while offset + k * pi <= t_hi:
        vals.append(f(offset + k * pi))
        k += 1
    return float(min(vals)), float(max(vals))


def graded_exponents(dim, degree, include_constant=False):
    """Exponent vectors of total degree <= ``degree`` in graded lex order."""
    out = []
    for deg in range(0 if include_constant else 1, degree + 1):
        level = []
        for combo in combinations_with_replacement(range(dim), deg):
            e = [0] * dim
            for i in combo:
                e[i] += 1
            level.append(tuple(e))
        out.extend(sorted(level, reverse=True))
    return out


def frequency_vectors(dim, frequencies):
    """Non-zero frequency vectors in ``{0..l}^p``, graded then lex-descending."""
    vecs = [v for v in product(range(frequencies + 1), repeat=dim) if any(v)]
    return sorted(vecs, key=lambda v: (sum(v), tuple(-x for x in v)))


@dataclass(frozen=True, eq=False)
class StatisticFamily:
    """Natural statistic tensor Phi on a support domain.

    Use the :meth:`polynomial`, :meth:`trigonometric`, :meth:`mixed` or
    :meth:`from_dict` constructors rather than building one by hand.
    """

    kind: str
    domain: SupportDomain
    degree: int
    frequencies: int
    shape: tuple
    terms: tuple
    index: np.ndarray = field(repr=False)
    layout: str = "graded"
    shared_slices: bool = False
    include_constant: bool = False

    def __post_init__(self):
        idx = np.asarray(self.index, dtype=int)
        if idx.shape != tuple(self.shape) or len(self.shape) != 3:
            raise TruncExpError(f"term index map shape {idx.shape} != family shape {self.shape}")
        if self.shape[2] not in (1, 2):
            raise ValueError("only k3 in {1, 2} is supported")
        for sl in range(self.shape[2]):
            block = idx[:, :, sl]
            if self.layout == "outer":
                # symmetric by construction: injective up to transposition
                if not np.array_equal(block, block.T):
                    raise TruncExpError("outer layout term map must be symmetric")
                block = block[np.triu_indices(block.shape[0])]
            flat = block.ravel()
            if len(set(flat.tolist())) != flat.size:
                raise TruncExpError("term map is not injective within a slice")
        if idx.min() < 0 or idx.max() >= len(self.terms):
            raise TruncExpError("term index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "shape", tuple(int(k) for k in self.shape))

    # -- constructors -----------------------------------------------------
    @classmethod
    def _graded(cls, kind, domain, degree, frequencies, terms, shape, shared_slices,
                include_constant):
        m = len(terms)
        if m == 0:
            raise ValueError("family has no terms")
        if shape is None:
            shape = (1, m, 1)
        k1, k2, k3 = shape
        if shared_slices:
            if k1 * k2 != m:
                raise ValueError(f"shape {shape} holds {k1 * k2} terms per slice, family has {m}")
            index = np.repeat(np.arange(m).reshape(k1, k2, 1), k3, axis=2)
        else:
            if k1 * k2 * k3 != m:
                raise ValueError(f"shape {shape} holds {k1 * k2 * k3} terms, family has {m}")
            index = np.arange(m).reshape(k3, k1, k2).transpose(1, 2, 0)
        return cls(kind, domain, degree, frequencies, tuple(shape), tuple(terms), index,
                   "graded", shared_slices, include_constant)

    @classmethod
    def polynomial(cls, domain, degree, shape=None, layout="graded", include_constant=False,
                   shared_slices=False, n_slices=1):
        p = domain.dim
        if layout == "outer":
            if degree != 2:
                raise UnsupportedConfigurationError("outer layout is defined for degree 2 only")
            exps = graded_exponents(p, 2, include_constant=True)
            terms = tuple(Term("poly", e) for e in exps)
            lookup = {e: i for i, e in enumerate(exps)}
            basis = [tuple([0] * p)] + [tuple(int(i == j) for j in range(p)) for i in range(p)]
            idx2 = np.empty((p + 1, p + 1), dtype=int)
            for i, a in enumerate(basis):
                for j, b in enumerate(basis):
                    idx2[i, j] = lookup[tuple(x + y for x, y in zip(a, b))]
            if shape is not None and tuple(shape)[:2] != (p + 1, p + 1):
                raise ValueError(f"outer layout needs shape ({p + 1}, {p + 1}, k3)")
            k3 = shape[2] if shape is not None else n_slices
            index = np.repeat(idx2[:, :, None], k3, axis=2)
            return cls("polynomial", domain, 2, 0, (p + 1, p + 1, k3), terms, index, "outer",
                       True, True)
        terms = [Term("poly", e) for e in graded_exponents(p, degree, include_constant)]
        return cls._graded("polynomial", domain, degree, 0, terms, shape, shared_slices,
                           include_constant)

    @classmethod
    def trigonometric(cls, domain, frequencies, shape=None, shared_slices=False):
        terms = []
        for w in frequency_vectors(domain.dim, frequencies):
            terms += [Term("sin", w), Term("cos", w)]
        return cls._graded("trigonometric", domain, 0, frequencies, terms, shape, shared_slices,
                           False)

    @classmethod
    def mixed(cls, domain, degree, frequencies, shape=None, shared_slices=False):
        terms = [Term("poly", e) for e in graded_exponents(domain.dim, degree)]
        for w in frequency_vectors(domain.dim, frequencies):
            terms += [Term("sin", w), Term("cos", w)]
        return cls._graded("mixed", domain, degree, frequencies, terms, shape, shared_slices,
                           False)

    @classmethod
    def from_dict(cls, d):
        domain = SupportDomain.from_dict(d["domain"])
        shape = tuple(d["shape"]) if d.get("shape") is not None else None
        shared = bool(d.get("shared_slices", False))
        kind = d["kind"]
        if kind == "polynomial":
            return cls.polynomial(domain, int(d["degree"]), shape=shape,
                                  layout=d.get("layout", "graded"),
                                  include_constant=bool(d.get("include_constant", False)),
                                  shared_slices=shared)
        if kind == "trigonometric":
            return cls.trigonometric(domain, int(d["frequencies"]), shape=shape,
                                     shared_slices=shared)
        if kind == "mixed":
            return cls.mixed(domain, int(d["degree"]), int(d["frequencies"]), shape=shape,
                             shared_slices=shared)
        raise UnsupportedConfigurationError(f"unknown family kind {kind!r}")

    def to_dict(self):
        return {
            "kind": self.kind,
            "degree": self.degree,
            "frequencies": self.frequencies,
            "shape": list(self.shape),
            "domain": self.domain.to_dict(),
            "layout": self.layout,
            "include_constant": self.include_constant,
            "shared_slices": self.shared_slices,
        }

    # -- evaluation -------------------------------------------------------
    @property
    def dim(self):
        return self.domain.dim

    @property
    def size(self):
        """Number of tensor entries k1*k2*k3."""
        return int(np.prod(self.shape))

    def labels(self):
        lab = np.array([t.label() for t in self.terms], dtype=object)
        return lab[self.index]

    def term_values(self, X):
        """Distinct term values, shape ``(N, len(terms))``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([t(X) for t in self.terms])

    def raw(self, X):
        """Raw statistics for a batch: shape ``(N, k1, k2, k3)``."""
        return self.term_values(X)[:, self.index]

    def check_domain(self, X, domain=None):
        domain = domain or self.domain
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != domain.dim:
            raise DomainError(f"points have dimension {X.shape[1]}, domain has {domain.dim}")
        inside = domain.contains(X)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise DomainError(f"point {X[bad].tolist()} lies outside the support")
        return X

    def identifiable_positions(self):
        """Flat (C-order) tensor positions over which minimality is judged.

        With shared slices only the first slice counts, because
        ``<<U, Phi>>`` depends on the slices of U only through their sum. The
        outer layout keeps the upper triangle minus the constant entry: its
        lower triangle repeats the upper one and the centered constant is 0.
        """
        pos = np.arange(self.size).reshape(self.shape)
        if self.layout == "outer":
            i, j = np.triu_indices(self.shape[0])
            keep = ~((i == 0) & (j == 0))
            return pos[i[keep], j[keep], 0]
        return pos[:, :, 0].ravel() if self.shared_slices else pos.ravel()

    def check_minimality(self, domain=None, rng=None, n_points=None, tol=1e-9):
        """Numerical minimality test on random uniform points.

        Returns ``(is_minimal, ratio)`` where ratio is the smallest over the
        largest singular value of the column-centered design; a near-zero
        ratio means some nonzero U makes ``<<U, Phi(x)>>`` constant.
        """
        domain = domain or self.domain
        rng = np.random.default_rng(0) if rng is None else rng
        pos = self.identifiable_positions()
        n_points = n_points or max(200, 20 * len(pos))
        X = domain.sample_uniform(rng, n_points)
        D = self.raw(X).reshape(n_points, -1)[:, pos]
        D = D - D.mean(axis=0)
        s = np.linalg.svd(D, compute_uv=False)
        ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
        return ratio > tol, ratio


def evaluate_raw(family, x):
    """Raw statistic tensor Phi(x) of shape ``(k1, k2, k3)`` at a single point."""
    X = family.check_domain(np.asarray(x, dtype=float).reshape(1, -1))
    return family.raw(X)[0]


@dataclass(frozen=True, eq=False)
class CenteringTable:
    """Uniform-distribution means of every tensor entry."""

    means: np.ndarray
    method: str
    error_estimate: float = 0.0

    def __post_init__(self):
        m = np.array(self.means, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "means", m)


def centering_constants(family, domain=None, nodes=CENTERING_NODES):
    """Means of Phi under the uniform distribution on ``domain``.

    Closed form on boxes; spherical-coordinate Gauss-Legendre quadrature on
    balls (p <= 3), cross-checked against a rule with 3/4 as many nodes.
    """
    domain = domain or family.domain
    if domain.kind == "box":
        vals = np.array([t.uniform_mean_on_box(domain.lower, domain.upper) for t in family.terms])
        return CenteringTable(vals[family.index], "closed_form", 0.0)
    if domain.dim > 3:
        raise UnsupportedConfigurationError("ball centering is supported for p <= 3 only")
    vol = domain.volume
    vals, err = quadrature.integrate_checked(
        family.term_values, domain, nodes=(nodes, (3 * nodes) // 4), rtol=1e-10,
        what="centering constants",
    )
    return CenteringTable(vals[family.index] / vol, "quadrature", err / vol)


def centered(family, table, X):
    """Centered statistics for a batch: shape ``(N, k1, k2, k3)``."""
    if table.means.shape != family.shape:
        raise TruncExpError(f"centering table shape {table.means.shape} != family {family.shape}")
    return family.raw(X) - table.means


def evaluate_centered(family, table, x):
    """Centered statistic tensor at a single point."""
    X = family.check_domain(np.asarray(x, dtype=float).reshape(1, -1))
    return centered(family, table, X)[0]


def _centered_sup(family, domain, table):
    """Per-position bound on sup_x |phi_bar(x)| from exact term ranges on the bounding box."""
    lo_box, hi_box = domain.bounding_box()
    out = np.empty(family.shape)
    ranges = [t.range_on_box(lo_box, hi_box) for t in family.terms]
    for pos in np.ndindex(*family.shape):
        lo, hi = ranges[family.index[pos]]
        mu = table.means[pos]
        out[pos] = max(hi - mu, mu - lo)
    return out


def phi_max_bound(family, domain=None, method="closed_form"):
    """Upper bound on ``max_x ||phi_bar(x)||_max``.

    ``method="closed_form"`` returns twice the largest sup of a raw term
    (``2 b**l`` for degree-l monomials with ``|x_i| <= b`` and b >= 1, 2 for
    harmonics, their maximum for mixed families). ``method="interval"``
    computes the sup of every centered entry exactly on boxes (and through
    the bounding box on balls), which is far tighter.
    """
    domain = domain or family.domain
    if method == "interval":
        table = centering_constants(family, domain)
        return float(np.max(_centered_sup(family, domain, table)))
    if method != "closed_form":
        raise ValueError(f"unknown bound method {method!r}")
    b = domain.max_abs_coordinate()
    poly = [b**t.degree for t in family.terms if t.kind == "poly" and not t.is_constant]
    trig = [1.0 for t in family.terms if t.kind != "poly"]
    if family.kind in ("polynomial", "trigonometric", "mixed"):
        return 2.0 * max(poly + trig, default=0.0)
    raise UnsupportedConfigurationError(f"no phi_max bound for family kind {family.kind!r}")


def dual_norm_bound(family, domain, constraints, method="closed_form"):
    """Per-slice bounds d_i on the dual norm of the centered slices.

    L11 slices use the max norm, bounded by phi_max. Nuclear slices use the
    spectral norm, for which a bound exists only for the outer-product
    degree-2 polynomial layout on a ball centered at the origin:
    ``2 (1 + b**2)``.
    """
    domain = domain or family.domain
    if len(constraints) != family.shape[2]:
        raise ValueError("constraint spec length must equal k3")
    d = np.empty(family.shape[2])
    sup = None
    for i, c in enumerate(constraints):
        if c.norm == "l11":
            if method == "interval":
                if sup is None:
                    sup = _centered_sup(family, domain, centering_constants(family, domain))
                d[i] = float(np.max(sup[:, :, i]))
            else:
                d[i] = phi_max_bound(family, domain, method)
        elif c.norm == "nuclear":
            if family.kind != "polynomial":
                raise UnsupportedConfigurationError(
                    "no proven spectral-norm bound for trigonometric or mixed statistics; "
                    "pass d explicitly")
            if (family.layout != "outer" or domain.kind != "ball"
                    or np.any(domain.center != 0)):
                raise UnsupportedConfigurationError(
                    "spectral-norm bound needs the outer degree-2 layout on a ball B(0, b); "
                    "pass d explicitly")
            d[i] = 2.0 * (1.0 + domain.radius**2)
        else:
            raise UnsupportedConfigurationError(f"unknown norm {c.norm!r}")
    return d


@dataclass(frozen=True)
class ProblemConstants:
    """phi_max and per-slice dual-norm bounds d used by step size and budgets."""

    phi_max: float
    d: tuple

    def inner_bound(self, radii):
        """``r^T d``, the bound on ``|<<Theta, phi_bar(x)>>|`` over the feasible set."""
        return float(np.dot(radii, self.d))


def problem_constants(family, constraints, domain=None, method="closed_form"):
    domain = domain or family.domain
    return ProblemConstants(
        phi_max_bound(family, domain, method),
        tuple(float(v) for v in dual_norm_bound(family, domain, constraints, method)),
    )
