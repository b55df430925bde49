"""Planar Laplace noise for geo-indistinguishability.

The radial distance of planar Laplace noise with parameter ``epsilon`` has
CDF ``C(d) = 1 - (1 + eps*d) * exp(-eps*d)``, i.e. Gamma(2, 1/eps). It is
inverted in closed form through the lower real branch of the Lambert W
function.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

_INV_E = math.exp(-1.0)


def lambertw_m1(x, tol: float = 1e-12, max_iter: int = 100):
    """Lower branch W_{-1}(x) for x in [-1/e, 0), by Halley iteration.

    Arguments outside the domain are clamped into it. Works elementwise on
    arrays and returns a float for scalar input.
    """
    scalar = np.ndim(x) == 0
    x = np.clip(np.asarray(x, dtype=float), -_INV_E, -np.finfo(float).tiny)
    x = np.atleast_1d(x).copy()

    # branch-point series near -1/e, asymptotic log expansion elsewhere
    near = x < -0.25
    p = -np.sqrt(np.maximum(2.0 * (1.0 + math.e * x), 0.0))
    series = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = np.log(-x)
        l2 = np.log(-l1)
        asym = l1 - l2 + l2 / l1
    w = np.where(near, series, asym)

    active = x > -_INV_E  # W(-1/e) = -1 exactly; the guess above already gives it
    w[~active] = -1.0
    for _ in range(max_iter):
        if not active.any():
            break
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - x[active]
        wp1 = wa + 1.0
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.where(denom != 0.0, f / denom, 0.0)
        w_new = wa - delta
        w_new = np.minimum(w_new, -1.0)
        w[active] = w_new
        idx = np.flatnonzero(active)
        active[idx[np.abs(delta) < tol]] = False
    return float(w[0]) if scalar else w


def radial_cdf(d, epsilon: float):
    ed = epsilon * np.asarray(d, dtype=float)
    return 1.0 - (1.0 + ed) * np.exp(-ed)


def radial_quantile(rho, epsilon: float):
    """Inverse radial CDF: the distance below which a draw falls with probability ``rho``."""
    rho = np.asarray(rho, dtype=float)
    w = lambertw_m1((rho - 1.0) / math.e)
    out = -(w + 1.0) / epsilon
    return float(out) if np.ndim(out) == 0 else out


def radial_quantile_numeric(rho: float, epsilon: float) -> float:
    """Same quantile found by bracketing root search on the CDF."""
    if rho <= 0.0:
        return 0.0
    hi = 1.0 / epsilon
    while radial_cdf(hi, epsilon) < rho:
        hi *= 2.0
    return brentq(lambda d: radial_cdf(d, epsilon) - rho, 0.0, hi, xtol=1e-10, rtol=1e-14)


def sample_planar_laplace(epsilon: float, rng: np.random.Generator, size: int | None = None):
    """Draw planar Laplace displacements as ``(distance_m, angle_rad)``.

    With ``size=None`` a single pair of floats is returned, otherwise two arrays.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n = 1 if size is None else size
    angle = rng.uniform(0.0, 2.0 * math.pi, n)
    rho = rng.random(n)
    dist = np.atleast_1d(radial_quantile(rho, epsilon))
    if size is None:
        return float(dist[0]), float(angle[0])
    return dist, angle
