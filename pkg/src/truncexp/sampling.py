"""Samplers for the truncated density f(x; Theta) proportional to exp(<<Theta, Phi(x)>>).

Two generators are provided. The grid sampler discretizes the support into
cells, draws cells by inverse CDF and jitters uniformly inside the cell; for
p <= 2 it is the i.i.d. reference. The Metropolis sampler runs a batch of
independent random-walk chains in lock-step and covers any dimension.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import quadrature
from .errors import CapacityError, DomainError, TruncExpError, TuningWarning
from .loss import require_quadrature_dim
from .statistics import SupportDomain

SCHEMA_VERSION = "1.0"
GRID_MAX_CELLS = 2**24
GRID_MIN_RESOLUTION = 64
ACCEPTANCE_BAND = (0.05, 0.95)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """``n x p`` samples with their support domain and provenance record."""

    data: np.ndarray
    domain: SupportDomain
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.data, dtype=float, ndmin=2)
        if X.shape[0] < 1:
            raise TruncExpError("a sample set needs at least one row")
        if X.shape[1] != self.domain.dim:
            raise DomainError(f"samples have {X.shape[1]} columns, domain has dim {self.domain.dim}")
        if not np.all(self.domain.contains(X)):
            raise DomainError("sample set contains points outside the support")
        X.setflags(write=False)
        object.__setattr__(self, "data", X)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def write(self, path):
        """Write ``path`` (CSV, header x1..xp) and the sidecar ``path.json``."""
        path = Path(path)
        header = ",".join(f"x{i + 1}" for i in range(self.dim))
        np.savetxt(path, self.data, fmt="%.17g", delimiter=",", header=header, comments="")
        meta = {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "domain": self.domain.to_dict(),
            "provenance": self.provenance,
        }
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path, domain=None):
        """Load a CSV; the domain comes from the sidecar unless given."""
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        side = sidecar_path(path)
        meta = json.loads(side.read_text()) if side.exists() else {}
        if domain is None:
            if "domain" not in meta:
                raise TruncExpError(f"no domain given and no sidecar next to {path}")
            domain = SupportDomain.from_dict(meta["domain"])
        prov = dict(meta.get("provenance", {}))
        prov["source"] = {"kind": "file", "path": str(path), "generator": prov.get("generator")}
        return cls(data, domain, prov)


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def log_unnormalized_density(family, theta, x):
    """``<<Theta, Phi(x)>>`` with raw statistics, for one point or a batch."""
    X = family.check_domain(np.asarray(x, dtype=float).reshape(-1, family.dim))
    tv = np.asarray(theta, dtype=float).reshape(-1)
    out = family.raw(X).reshape(len(X), -1) @ tv
    return float(out[0]) if np.ndim(x) <= 1 else out


def _log_density_unchecked(family, tv, X):
    return family.raw(X).reshape(len(X), -1) @ tv


def partition_function(family, domain=None, theta=None, nodes=(128, 96), rtol=1e-7):
    """Normalizing integral of ``exp(<<Theta, Phi(x)>>)`` over the support.

    Computed with two Gauss-Legendre rules; an
    :class:`~truncexp.errors.AccuracyError` is raised when they disagree by
    more than ``rtol`` relative.
    """
    domain = domain or family.domain
    require_quadrature_dim(domain)
    tv = np.zeros(family.size) if theta is None else np.asarray(theta, float).reshape(-1)
    fn = lambda X: np.exp(_log_density_unchecked(family, tv, X))  # noqa: E731
    Z, _ = quadrature.integrate_checked(fn, domain, nodes, rtol=rtol, scale=0.0,
                                        what="partition function")
    return float(Z)


def grid_exact_sampler(family, domain, theta, resolution, n, seed):
    """Inverse-CDF sampling over a ``resolution**p`` grid of cells.

    Cell masses use the unnormalized density at cell centers; samples are
    jittered uniformly within the chosen cell. On balls, cells whose center
    lies outside get zero mass and jitter is redrawn until it lands inside.
    """
    domain = domain or family.domain
    p = domain.dim
    if p > 2:
        raise CapacityError("the grid sampler supports p <= 2; use metropolis_sampler")
    if resolution < GRID_MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {GRID_MIN_RESOLUTION}")
    if resolution**p > GRID_MAX_CELLS:
        raise CapacityError(f"{resolution}^{p} cells exceed the {GRID_MAX_CELLS} guard")
    if n < 1:
        raise ValueError("n must be positive")
    tv = np.asarray(theta, dtype=float).reshape(-1)
    lo, hi = domain.bounding_box()
    width = (hi - lo) / resolution
    axes = [lo[i] + (np.arange(resolution) + 0.5) * width[i] for i in range(p)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p)

    logw = np.full(len(centers), -np.inf)
    inside = domain.contains(centers, slack=0.0)
    chunk = 2**16
    for s in range(0, len(centers), chunk):
        sl = slice(s, s + chunk)
        pts = centers[sl]
        logw[sl] = np.where(inside[sl], _log_density_unchecked(family, tv, pts), -np.inf)
    w = np.exp(logw - np.max(logw))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]

    rng = np.random.default_rng(seed)
    cells = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(cdf) - 1)
    base = centers[cells] - 0.5 * width
    X = base + rng.random((n, p)) * width
    bad = ~domain.contains(X, slack=0.0)
    while np.any(bad):
        X[bad] = base[bad] + rng.random((int(bad.sum()), p)) * width
        bad = ~domain.contains(X, slack=0.0)
    prov = {
        "generator": "grid_exact",
        "resolution": int(resolution),
        "n": int(n),
        "seed": seed,
        "theta": tv.tolist(),
        "family": family.to_dict(),
    }
    return SampleSet(X, domain, prov)


def _reflect(X, lo, hi):
    """Fold points back into ``[lo, hi]`` by mirror reflection."""
    w = hi - lo
    y = np.mod(X - lo, 2 * w)
    return lo + np.where(y > w, 2 * w - y, y)


def metropolis_sampler(family, domain, theta, n, burn_in=1000, thinning=10,
                       proposal_scale=None, seed=0, n_chains=64):
    """Random-walk Metropolis with Gaussian proposals.

    ``n_chains`` independent chains start from uniform draws and advance in
    lock-step; each discards ``burn_in`` states and then keeps every
    ``thinning``-th state until n samples are collected. Proposals are
    reflected at box faces (keeping them symmetric) and rejected outside
    balls. The default proposal scale is a quarter of the shortest side of
    the (bounding) box. An acceptance rate outside ``[0.05, 0.95]`` issues a
    :class:`~truncexp.errors.TuningWarning`.
    """
    domain = domain or family.domain
    if n < 1 or burn_in < 0:
        raise ValueError("need n >= 1 and burn_in >= 0")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    lo, hi = domain.bounding_box()
    if proposal_scale is None:
        proposal_scale = 0.25 * float(np.min(hi - lo))
    if not proposal_scale > 0:
        raise ValueError("proposal_scale must be positive")
    tv = np.asarray(theta, dtype=float).reshape(-1)
    rng = np.random.default_rng(seed)
    p = domain.dim
    m = max(1, min(int(n_chains), int(n)))
    per_chain = -(-n // m)

    x = domain.sample_uniform(rng, m)
    logf = _log_density_unchecked(family, tv, x)
    kept = np.empty((per_chain, m, p))
    accepted = proposed = 0
    total = burn_in + per_chain * thinning
    k = 0
    for step in range(1, total + 1):
        y = x + proposal_scale * rng.standard_normal((m, p))
        u = np.log(rng.random(m))
        if domain.kind == "box":
            y = _reflect(y, lo, hi)
            ok = np.ones(m, dtype=bool)
        else:
            ok = domain.contains(y, slack=0.0)
        logy = np.full(m, -np.inf)
        if np.any(ok):
            logy[ok] = _log_density_unchecked(family, tv, y[ok])
        acc = ok & (u < logy - logf)
        x = np.where(acc[:, None], y, x)
        logf = np.where(acc, logy, logf)
        accepted += int(acc.sum())
        proposed += m
        if step > burn_in and (step - burn_in) % thinning == 0:
            kept[k] = x
            k += 1
    rate = accepted / proposed if proposed else float("nan")
    if not ACCEPTANCE_BAND[0] <= rate <= ACCEPTANCE_BAND[1]:
        warnings.warn(f"Metropolis acceptance rate {rate:.3f} is outside "
                      f"[{ACCEPTANCE_BAND[0]}, {ACCEPTANCE_BAND[1]}]", TuningWarning, stacklevel=2)
    X = kept.reshape(-1, p)[:n]
    prov = {
        "generator": "metropolis",
        "n": int(n),
        "burn_in": int(burn_in),
        "thinning": int(thinning),
        "proposal_scale": float(proposal_scale),
        "n_chains": m,
        "acceptance_rate": rate,
        "seed": seed,
        "theta": tv.tolist(),
        "family": family.to_dict(),
    }
    return SampleSet(X, domain, prov)
