"""Convex integrands with closed-form conjugates, and barrier entropies.

The integrand acts on d-by-d matrices through the Frobenius norm only,
so every conjugate-type quantity reduces to a scalar profile.  Two
families are provided: the power family ``scale * |xi|^p / p`` (smooth,
strictly convex) and ``|xi|`` (merely convex; its conjugate is the
indicator of the unit ball and the minimal-norm subgradient of the
conjugate vanishes on its domain).

The entropy is a fixed barrier ``t^2/2 + 1/t - 3/2`` on (0, inf), which
blows up at 0, grows superlinearly, and vanishes with zero slope at 1.
``Entropy(quad_weight=n)`` selects the stiffened member obtained by
adding ``n (t-1)^2``; its conjugate and inverse maps are computed by a
safeguarded, bracketed Newton iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100


class NewtonError(RuntimeError):
    """Bracketed Newton failed to converge within the iteration cap."""


def _solve_increasing(fun, dfun, target, lo, hi):
    """Vectorized safeguarded Newton for an increasing function on a bracket.

    Falls back to bisection whenever a Newton step leaves the current
    bracket.  ``target``, ``lo`` and ``hi`` are arrays of equal shape.
    """
    lo = lo.copy()
    hi = hi.copy()
    x = 0.5 * (lo + hi)
    for _ in range(NEWTON_MAX_ITER):
        f = fun(x) - target
        if np.all(np.abs(f) <= NEWTON_TOL * (1.0 + np.abs(target))):
            return x
        lo = np.where(f < 0.0, x, lo)
        hi = np.where(f > 0.0, x, hi)
        step = f / dfun(x)
        x_new = x - step
        outside = (x_new <= lo) | (x_new >= hi) | ~np.isfinite(x_new)
        x = np.where(outside, 0.5 * (lo + hi), x_new)
    raise NewtonError("bracketed Newton did not converge in 100 iterations")


def _grow_bracket(fun, target):
    """Geometrically grown bracket [lo, hi] around fun(x) = target, x > 0."""
    target = np.asarray(target, dtype=float)
    lo = np.full(target.shape, 1.0)
    hi = np.full(target.shape, 1.0)
    for _ in range(200):
        mask = fun(lo) > target
        if not np.any(mask):
            break
        lo = np.where(mask, 0.5 * lo, lo)
    for _ in range(200):
        mask = fun(hi) < target
        if not np.any(mask):
            break
        hi = np.where(mask, 2.0 * hi, hi)
    return lo, hi


@dataclass(frozen=True)
class Entropy:
    """Barrier entropy t^2/2 + 1/t - 3/2, optionally stiffened by n(t-1)^2.

    ``quad_weight`` is the stiffening weight n (0 gives the plain
    barrier).  The slope is an increasing bijection from (0, inf) onto
    the reals, so both the conjugate and the inverse slope are globally
    well defined; the conjugate is itself an increasing bijection of the
    real line and is inverted the same way.
    """

    quad_weight: float = 0.0

    @property
    def min_value(self) -> float:
        # attained at t = 1 for every stiffening weight
        return 0.0

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0.0):
            raise ValueError("entropy is only defined for t > 0")
        base = 0.5 * t * t + 1.0 / t - 1.5
        return base + self.quad_weight * (t - 1.0) ** 2

    def slope(self, t):
        t = np.asarray(t, dtype=float)
        return t - t**-2 + 2.0 * self.quad_weight * (t - 1.0)

    def curvature(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 + 2.0 * t**-3 + 2.0 * self.quad_weight

    def slope_inv(self, s):
        """Unique t > 0 with slope(t) = s."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        lo, hi = _grow_bracket(self.slope, s_arr)
        t = _solve_increasing(self.slope, self.curvature, s_arr, lo, hi)
        return t if np.ndim(s) else float(t[0])

    def conj(self, s):
        """Legendre transform sup_{t>0} (s t - H(t))."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.atleast_1d(self.slope_inv(s_arr))
        out = s_arr * t - self.value(t)
        return out if np.ndim(s) else float(out[0])

    def conj_inv(self, y):
        """Inverse of the (strictly increasing) conjugate."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))

        def conj_vec(s):
            t = self.slope_inv(s)
            return s * t - self.value(t)

        lo = np.zeros_like(y_arr)
        hi = np.zeros_like(y_arr)
        for _ in range(200):
            mask = conj_vec(lo) > y_arr
            if not np.any(mask):
                break
            lo = np.where(mask, 2.0 * lo - 1.0, lo)
        for _ in range(200):
            mask = conj_vec(hi) < y_arr
            if not np.any(mask):
                break
            hi = np.where(mask, 2.0 * hi + 1.0, hi)
        s = _solve_increasing(conj_vec, self.slope_inv, y_arr, lo, hi)
        return s if np.ndim(y) else float(s[0])


def _frobenius(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(np.sum(xi * xi))


@dataclass(frozen=True)
class ConvexIntegrand:
    """Radial convex integrand with closed-form conjugate.

    family "power_p": f(xi) = scale * |xi|^p / p with p > 1.
    family "absolute_value": f(xi) = |xi|; the conjugate is 0 on the
    closed unit ball and +inf outside, and the minimal-norm subgradient
    of the conjugate is identically 0 on that ball.
    """

    family: str = "power_p"
    p: float = 2.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in ("power_p", "absolute_value"):
            raise ValueError(f"unknown integrand family {self.family!r}")
        if self.family == "power_p" and not self.p > 1.0:
            raise ValueError("power family needs p > 1")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")

    @property
    def q(self) -> float:
        """Conjugate exponent (power family only)."""
        return self.p / (self.p - 1.0)

    @property
    def growth_constants(self) -> tuple[float, float, float]:
        """(a, b, c) with c|xi|^p/p + b >= f(xi) >= a|xi| - b."""
        if self.family == "absolute_value":
            return (1.0, 0.0, 1.0)
        # Young's inequality with a = scale gives b = scale / q
        return (self.scale, self.scale / self.q, self.scale)

    def value(self, xi) -> float:
        nrm = float(_frobenius(xi))
        if self.family == "absolute_value":
            return nrm
        return self.scale * nrm**self.p / self.p

    def conj(self, zeta) -> float:
        nrm = float(_frobenius(zeta))
        if self.family == "absolute_value":
            return 0.0 if nrm <= 1.0 + 1e-12 else math.inf
        return self.scale ** (1.0 - self.q) * nrm**self.q / self.q

    def grad_conj(self, zeta) -> np.ndarray:
        """Minimal-norm element of the conjugate's subdifferential."""
        zeta = np.asarray(zeta, dtype=float)
        nrm = float(_frobenius(zeta))
        if self.family == "absolute_value":
            if nrm > 1.0 + 1e-9:
                raise ValueError("point outside the domain of the conjugate")
            return np.zeros_like(zeta)
        if nrm == 0.0:
            return np.zeros_like(zeta)
        return self.scale ** (1.0 - self.q) * nrm ** (self.q - 2.0) * zeta

    # vectorized profiles over precomputed Frobenius norms, used by the
    # quadrature assemblers

    def value_norm(self, nrm: np.ndarray) -> np.ndarray:
        if self.family == "absolute_value":
            return np.asarray(nrm, dtype=float)
        return self.scale * np.asarray(nrm) ** self.p / self.p

    def conj_norm(self, nrm: np.ndarray) -> np.ndarray:
        nrm = np.asarray(nrm, dtype=float)
        if self.family == "absolute_value":
            out = np.zeros_like(nrm)
            out[nrm > 1.0 + 1e-9] = np.inf
            return out
        return self.scale ** (1.0 - self.q) * nrm**self.q / self.q

    def grad_conj_factor(self, nrm: np.ndarray) -> np.ndarray:
        """Scalar g(|zeta|) with grad f*(zeta) = g(|zeta|) zeta."""
        nrm = np.asarray(nrm, dtype=float)
        if self.family == "absolute_value":
            return np.zeros_like(nrm)
        with np.errstate(divide="ignore"):
            fac = self.scale ** (1.0 - self.q) * nrm ** (self.q - 2.0)
        return np.where(nrm == 0.0, 0.0, fac)
