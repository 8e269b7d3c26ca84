"""Tensor-product Gauss-Legendre rules on boxes and balls.

Box rules are plain tensor products of 1-D Gauss-Legendre rules. Ball rules
use spherical coordinates (Gauss-Legendre in the radius and polar cosine,
trapezoid in the periodic azimuth) so that polynomial and trigonometric
integrands are integrated to machine precision instead of suffering the
O(h) error of an indicator function on the bounding box.
"""

import numpy as np

from .errors import AccuracyError, CapacityError

MAX_POINTS = 2**27
CHUNK = 2**17


def gauss_legendre(n, a=-1.0, b=1.0):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def _box_chunks(lower, upper, n):
    p = len(lower)
    axes = [gauss_legendre(n, lo, hi) for lo, hi in zip(lower, upper)]
    if p == 1:
        yield axes[0][0][:, None], axes[0][1]
        return
    # product over the trailing axes, reused for every node of the first axis
    rest_x = np.stack(np.meshgrid(*[ax[0] for ax in axes[1:]], indexing="ij"), -1)
    rest_x = rest_x.reshape(-1, p - 1)
    rest_w = np.ones(1)
    for _, w in axes[1:]:
        rest_w = np.multiply.outer(rest_w, w).ravel()
    x0, w0 = axes[0]
    block = max(1, CHUNK // len(rest_w))
    for start in range(0, n, block):
        sl = slice(start, start + block)
        k = len(x0[sl])
        pts = np.empty((k * len(rest_w), p))
        pts[:, 0] = np.repeat(x0[sl], len(rest_w))
        pts[:, 1:] = np.tile(rest_x, (k, 1))
        yield pts, np.multiply.outer(w0[sl], rest_w).ravel()


def _ball_chunks(center, radius, n):
    p = len(center)
    center = np.asarray(center, dtype=float)
    if p == 1:
        x, w = gauss_legendre(n, center[0] - radius, center[0] + radius)
        yield x[:, None], w
        return
    r, wr = gauss_legendre(n, 0.0, radius)
    phi = 2.0 * np.pi * np.arange(n) / n
    wphi = np.full(n, 2.0 * np.pi / n)
    if p == 2:
        rr, pp = np.meshgrid(r, phi, indexing="ij")
        pts = np.stack([rr.ravel() * np.cos(pp.ravel()), rr.ravel() * np.sin(pp.ravel())], -1)
        w = np.multiply.outer(wr * r, wphi).ravel()
        yield pts + center, w
        return
    if p == 3:
        c, wc = gauss_legendre(n, -1.0, 1.0)
        cc, pp = np.meshgrid(c, phi, indexing="ij")
        ss = np.sqrt(1.0 - cc.ravel() ** 2)
        unit = np.stack([ss * np.cos(pp.ravel()), ss * np.sin(pp.ravel()), cc.ravel()], -1)
        wang = np.multiply.outer(wc, wphi).ravel()
        for i in range(n):
            yield r[i] * unit + center, wr[i] * r[i] ** 2 * wang
        return
    raise CapacityError(f"ball quadrature supports p <= 3, got p={p}")


def rule_chunks(domain, n):
    """Yield ``(points, weights)`` blocks of the n-per-axis rule on ``domain``.

    The weights integrate against Lebesgue measure, so they sum to the volume.
    """
    p = domain.dim
    if n**p > MAX_POINTS:
        raise CapacityError(f"{n}^{p} quadrature nodes exceed the {MAX_POINTS} point guard")
    if domain.kind == "box":
        yield from _box_chunks(domain.lower, domain.upper, n)
    else:
        yield from _ball_chunks(domain.center, domain.radius, n)


def integrate(fn, domain, n):
    """Integrate the vectorized ``fn`` over ``domain`` with n nodes per axis.

    ``fn`` maps an ``(N, p)`` array of points to an ``(N, ...)`` array; the
    result has the trailing shape of ``fn``'s output.
    """
    total = None
    for pts, w in rule_chunks(domain, n):
        part = np.tensordot(w, fn(pts), axes=(0, 0))
        total = part if total is None else total + part
    return total


def integrate_checked(fn, domain, nodes=(128, 96), rtol=1e-7, scale=1.0, what="integral",
                      entrywise=False):
    """Integrate with two node counts and fail if they disagree.

    Returns ``(value, error_estimate)`` where the value comes from the first
    (finer) rule. The check is relative to ``max(max|value|, scale)``, or to
    ``max(|value_j|, scale)`` separately for every entry when ``entrywise``.
    """
    fine = np.asarray(integrate(fn, domain, nodes[0]), dtype=float)
    coarse = np.asarray(integrate(fn, domain, nodes[1]), dtype=float)
    diff = np.abs(fine - coarse)
    err = float(np.max(diff)) if fine.size else 0.0
    if entrywise and fine.size:
        bad = np.any(diff > rtol * np.maximum(np.abs(fine), scale))
    else:
        ref = max(float(np.max(np.abs(fine))) if fine.size else 0.0, scale)
        bad = err > rtol * ref
    if not np.isfinite(err) or bad:
        raise AccuracyError(
            f"{what}: quadrature rules with {nodes[0]} and {nodes[1]} nodes disagree by {err:.3e}",
            estimate=err,
        )
    return fine, err
