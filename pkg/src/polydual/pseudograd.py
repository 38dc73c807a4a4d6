"""Dual energy of the pseudo-projected gradient and its maximizers.

For a bounded cell-sampled displacement u and a test family S, the
energy is

    sup over phi in S of  sum_c vol_c ( -u_c . div phi(x_c) - fconj(phi(x_c)) ),

a concave coefficient problem solved by first-order ascent with Armijo
backtracking.  For the absolute-value integrand the conjugate is the
indicator of the unit ball, enforced at the quadrature centers by a
projected step (cell constraints are local in the coefficients, which
makes the per-cell correction closed form).

The constrained representative field is recovered from the maximizer by
the conjugate gradient map, cell by cell, and certified through the
variational inequality over signed basis directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Domain
from .integrands import ConvexIntegrand
from .testspace import FieldCoeffs, TestSpace

ARMIJO_C1 = 1e-4
MIN_STEP = 1e-18


class LineSearchError(RuntimeError):
    """Ascent stalled far from first-order stationarity."""


@dataclass
class Displacement:
    """Cell-constant displacement with values in the closed target region."""

    values: np.ndarray  # (C, d)
    provenance: str = "analytic"
    node_index: np.ndarray | None = None
    ties: int = 0

    @property
    def tie_fraction(self) -> float:
        return self.ties / len(self.values)


def displacement_from_function(domain: Domain, fn) -> Displacement:
    """Sample a callable x -> point of the closed target region at the cells."""
    vals = np.array([np.atleast_1d(fn(x)) for x in domain.cell_centers], dtype=float)
    return Displacement(values=vals, provenance="analytic")


def identity_displacement(domain: Domain) -> Displacement:
    return Displacement(values=domain.cell_centers.copy(), provenance="analytic")


def constant_displacement(domain: Domain, point) -> Displacement:
    point = np.atleast_1d(np.asarray(point, dtype=float))
    vals = np.tile(point, (len(domain.cell_centers), 1))
    return Displacement(values=vals, provenance="analytic")


@dataclass
class VsfResult:
    value: float
    phi: FieldCoeffs
    iterations: int
    first_order_residual: float


@dataclass
class OptimalityReport:
    min_value: float
    worst_direction: int
    certified: bool


class _AscentProblem:
    """Concave coefficient objective with optional ball feasibility."""

    def __init__(self, u: np.ndarray, space: TestSpace, integrand: ConvexIntegrand):
        self.space = space
        self.integrand = integrand
        dom = space.domain
        self.vols = dom.cell_volumes
        t = space.tables(dom.cell_centers)
        self.with_eps = space.kind == "h2"
        self.eps_min = space.eps_min
        m, c, dd = t.val.shape
        self.n_cells = c
        self.dd = dd
        n_var = m + (1 if self.with_eps else 0)
        # linear term: minus the pairing of u with the divergences
        b = -np.einsum("ica,ca,c->i", t.div, u, self.vols)
        # per-cell evaluation maps L_c: coefficients -> flattened matrix
        lmap = np.transpose(t.val, (1, 2, 0))  # (C, dd, m)
        if self.with_eps:
            b = np.append(b, -np.einsum("ca,ca,c->", t.div0, u, self.vols))
            lmap = np.concatenate([lmap, t.val0[:, :, None]], axis=2)
        self.b = b
        self.lmap = lmap  # (C, dd, n_var)
        self.n_var = n_var
        if integrand.family == "absolute_value":
            gram = np.einsum("cki,cli->ckl", lmap, lmap)  # (C, dd, dd)
            self.gram = gram
        else:
            self.gram = None

    def phi_cells(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("cki,i->ck", self.lmap, x)

    def value(self, x: np.ndarray) -> float:
        phi = self.phi_cells(x)
        nrm = np.linalg.norm(phi, axis=1)
        conj = self.integrand.conj_norm(nrm)
        if np.any(np.isinf(conj)):
            return -np.inf
        return float(self.b @ x - self.vols @ conj)

    def grad(self, x: np.ndarray) -> np.ndarray:
        phi = self.phi_cells(x)
        nrm = np.linalg.norm(phi, axis=1)
        fac = self.integrand.grad_conj_factor(nrm)
        w = (self.vols * fac)[:, None] * phi  # (C, dd)
        return self.b - np.einsum("cki,ck->i", self.lmap, w)

    def project(self, x: np.ndarray, max_sweeps: int = 60) -> np.ndarray:
        """Clamp the shift coordinate and restore ball feasibility."""
        x = x.copy()
        if self.with_eps:
            x[-1] = max(x[-1], self.eps_min)
        if self.gram is None:
            return x
        for _ in range(max_sweeps):
            phi = self.phi_cells(x)
            nrm = np.linalg.norm(phi, axis=1)
            bad = np.flatnonzero(nrm > 1.0 + 1e-13)
            if len(bad) == 0:
                return x
            for c in bad:
                s = self.lmap[c] @ x
                ns = np.linalg.norm(s)
                if ns <= 1.0 + 1e-13:
                    continue
                target = s / ns
                try:
                    y = np.linalg.solve(self.gram[c], target - s)
                except np.linalg.LinAlgError:
                    continue
                x = x + self.lmap[c].T @ y
                if self.with_eps:
                    x[-1] = max(x[-1], self.eps_min)
        phi = self.phi_cells(x)
        worst = np.linalg.norm(phi, axis=1).max(initial=0.0)
        if worst > 1.0 + 1e-13:
            x = x / worst
            if self.with_eps:
                x[-1] = max(x[-1], self.eps_min)
        return x

    def residual(self, x: np.ndarray, g: np.ndarray) -> float:
        return float(np.max(np.abs(x - self.project(x + g))))

    def initial_point(self) -> np.ndarray:
        x = np.zeros(self.n_var)
        if self.with_eps:
            x[-1] = self.eps_min
        return self.project(x)


def _ascend(problem: _AscentProblem, x0, tol, max_iter):
    x = problem.project(np.asarray(x0, dtype=float))
    fx = problem.value(x)
    if not np.isfinite(fx):
        x = problem.initial_point()
        fx = problem.value(x)
    step = 1.0
    g = problem.grad(x)
    it = 0
    for it in range(1, max_iter + 1):
        res = problem.residual(x, g)
        if res <= tol:
            return x, fx, it - 1, res
        moved = False
        while step >= MIN_STEP:
            xt = problem.project(x + step * g)
            ft = problem.value(xt)
            if ft >= fx + ARMIJO_C1 * float(g @ (xt - x)):
                x, fx = xt, ft
                g = problem.grad(x)
                step = min(step * 2.0, 1e12)
                moved = True
                break
            step *= 0.5
        if not moved:
            res = problem.residual(x, g)
            if res > 1e-4:
                raise LineSearchError(
                    f"no ascent step found at residual {res:.3e}"
                )
            return x, fx, it, res
    return x, fx, max_iter, problem.residual(x, g)


def vsf(
    displacement: Displacement,
    space: TestSpace,
    integrand: ConvexIntegrand,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    x0: np.ndarray | None = None,
) -> VsfResult:
    """Maximize the dual pseudo-gradient energy over the test family.

    Returns the optimal value, the maximizing member, the iteration
    count, and the final projected-gradient residual (sup norm).
    """
    problem = _AscentProblem(displacement.values, space, integrand)
    start = problem.initial_point() if x0 is None else np.asarray(x0, dtype=float)
    x, fx, iters, res = _ascend(problem, start, tol, max_iter)
    if problem.with_eps:
        phi = FieldCoeffs(coeffs=x[:-1].copy(), eps=float(x[-1]))
    else:
        phi = FieldCoeffs(coeffs=x.copy())
    return VsfResult(value=fx, phi=phi, iterations=iters, first_order_residual=res)


def coeffs_vector(space: TestSpace, fc: FieldCoeffs) -> np.ndarray:
    """Flatten a member into the ascent coordinates used by vsf."""
    if space.kind == "h2":
        return np.append(fc.coeffs, fc.eps)
    return fc.coeffs.copy()


def projected_gradient_field(
    displacement: Displacement,
    space: TestSpace,
    integrand: ConvexIntegrand,
    tol: float = 1e-10,
) -> np.ndarray:
    """Constrained representative field, one d-by-d matrix per cell.

    Only defined for the strictly convex power family; recovered from
    the dual maximizer through the conjugate gradient map.
    """
    if integrand.family != "power_p":
        raise ValueError(
            "the representative field needs a strictly convex integrand"
        )
    res = vsf(displacement, space, integrand, tol=tol)
    phi, _ = space.field_at(res.phi, space.domain.cell_centers)
    nrm = np.linalg.norm(phi, axis=1)
    fac = integrand.grad_conj_factor(nrm)
    d = space.domain.dim
    return (fac[:, None] * phi).reshape(-1, d, d)


def optimality_check(
    displacement: Displacement,
    space: TestSpace,
    integrand: ConvexIntegrand,
    phi: FieldCoeffs,
    boundary_tol: float = 1e-12,
) -> OptimalityReport:
    """Variational-inequality certificate at a candidate maximizer.

    Evaluates the inequality's left side along every signed basis
    direction (and the shift direction for convex-set families; only
    the inward sign when the shift sits at its lower bound) and reports
    the minimum.  A converged maximizer certifies at -1e-6.
    """
    dom = space.domain
    t = space.tables(dom.cell_centers)
    vols = dom.cell_volumes
    phi_c, _ = space.field_at(phi, dom.cell_centers)
    nrm = np.linalg.norm(phi_c, axis=1)
    fac = integrand.grad_conj_factor(nrm)
    gstar = fac[:, None] * phi_c  # (C, dd)
    u = displacement.values
    per_basis = np.einsum("ick,ck,c->i", t.val, gstar, vols) + np.einsum(
        "ica,ca,c->i", t.div, u, vols
    )
    directions = np.concatenate([per_basis, -per_basis])
    if space.kind == "h2":
        d_eps = float(
            np.einsum("ck,ck,c->", t.val0, gstar, vols)
            + np.einsum("ca,ca,c->", t.div0, u, vols)
        )
        directions = np.append(directions, d_eps)
        if phi.eps > space.eps_min + boundary_tol:
            directions = np.append(directions, -d_eps)
    worst = int(np.argmin(directions))
    min_value = float(directions[worst])
    return OptimalityReport(
        min_value=min_value, worst_direction=worst, certified=min_value >= -1e-6
    )
