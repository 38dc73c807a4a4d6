"""Finite test families of matrix fields vanishing on the boundary.

Two kinds are built over the source region:

* ``h1``: a nested hierarchy of subspaces spanned by piecewise-affine
  hat functions (times matrix units), so every member has a gradient
  with finitely many values;
* ``h2``: the convex sets obtained by adding ``eps * phi0`` to the
  ``h1`` members, ``eps >= 1/level``, where ``phi0 = psi * I`` and
  ``psi(x) = (|x|^2 - rho^2)/2`` vanishes exactly on the boundary of
  the ball.  The divergence of ``phi0`` is the identity map ``x``,
  which makes the divergence of every member nondegenerate.

In 1D the hierarchy lives on dyadic refinements of the interval.  In 2D
it lives on a fixed 16-gon inscribed in the disc, fan-triangulated and
refined regularly; refinement midpoints are not projected to the
circle, which keeps the levels exactly nested (functions extend by zero
from the polygon to the disc).  Bases are prefix-ordered by refinement
level, so a coarse coefficient vector zero-padded to a finer level
represents the same field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain

MAX_LEVEL = 12


class SpaceError(ValueError):
    """Invalid test-space request."""


@dataclass(frozen=True)
class FieldCoeffs:
    """Coordinates of a member: basis coefficients plus the convex shift."""

    coeffs: np.ndarray
    eps: float = 0.0


@dataclass(frozen=True)
class SpaceTables:
    """Basis fields sampled at a fixed point batch.

    ``val[i, c, :]`` is the flattened d-by-d matrix of basis element i
    at point c; ``div[i, c, :]`` its row-wise divergence.  ``val0`` and
    ``div0`` carry the convex-shift field for ``h2`` spaces.
    """

    val: np.ndarray
    div: np.ndarray
    val0: np.ndarray | None = None
    div0: np.ndarray | None = None


class _Basis1D:
    def __init__(self, radius: float, level: int):
        self.radius = radius
        centers, widths = [], []
        for j in range(1, level + 1):
            w = 2.0 * radius / 2**j
            for i in range(1, 2 ** (j - 1) + 1):
                centers.append(-radius + (2 * i - 1) * w)
                widths.append(w)
        self.centers = np.array(centers)
        self.widths = np.array(widths)
        self.n_scalar = len(centers)

    def hat_tables(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values and slopes of all hats at the points x, shape (K, C)."""
        rel = x[None, :] - self.centers[:, None]
        w = self.widths[:, None]
        inside = np.abs(rel) < w
        vals = np.where(inside, 1.0 - np.abs(rel) / w, 0.0)
        slopes = np.where(inside, -np.sign(rel) / w, 0.0)
        return vals, slopes


class _TriMesh:
    def __init__(self, verts, tris, boundary):
        self.verts = np.asarray(verts, dtype=float)
        self.tris = np.asarray(tris, dtype=int)
        self.boundary = np.asarray(boundary, dtype=bool)

    def refine(self) -> tuple["_TriMesh", list[tuple[int, int]]]:
        """Regular refinement; returns the finer mesh and midpoint parents."""
        edge_count: dict[tuple[int, int], int] = {}
        for a, b, c in self.tris:
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
        verts = list(map(tuple, self.verts))
        boundary = list(self.boundary)
        mid_index: dict[tuple[int, int], int] = {}
        parents: list[tuple[int, int]] = []
        for key in sorted(edge_count):
            a, b = key
            mid_index[key] = len(verts)
            verts.append(tuple(0.5 * (self.verts[a] + self.verts[b])))
            boundary.append(edge_count[key] == 1)
            parents.append(key)
        tris = []
        for a, b, c in self.tris:
            mab = mid_index[(min(a, b), max(a, b))]
            mbc = mid_index[(min(b, c), max(b, c))]
            mca = mid_index[(min(c, a), max(c, a))]
            tris.extend([(a, mab, mca), (b, mbc, mab), (c, mca, mbc), (mab, mbc, mca)])
        return _TriMesh(verts, tris, boundary), parents


def _initial_polygon_mesh(radius: float, n_sides: int = 16) -> _TriMesh:
    angles = 2.0 * math.pi * np.arange(n_sides) / n_sides
    verts = [(0.0, 0.0)]
    verts += [(radius * math.cos(a), radius * math.sin(a)) for a in angles]
    tris = [(0, 1 + k, 1 + (k + 1) % n_sides) for k in range(n_sides)]
    boundary = [False] + [True] * n_sides
    return _TriMesh(verts, tris, boundary)


class _Basis2D:
    def __init__(self, radius: float, level: int):
        self.radius = radius
        mesh = _initial_polygon_mesh(radius)
        n_initial = len(mesh.verts)
        parent_rounds: list[list[tuple[int, int]]] = []
        intro_level = [1] * n_initial
        for _ in range(level - 1):
            mesh, parents = mesh.refine()
            parent_rounds.append(parents)
            intro_level.extend([len(parent_rounds) + 1] * len(parents))
        self.mesh = mesh
        self.interior = np.flatnonzero(~mesh.boundary)
        self.n_scalar = len(self.interior)

        # hierarchical hats: for a vertex introduced at level j, the nodal
        # hat of the level-j mesh, prolongated to the final mesh
        n_verts = len(mesh.verts)
        hat = np.zeros((self.n_scalar, n_verts))
        intro = np.asarray(intro_level)
        counts = np.cumsum([n_initial] + [len(p) for p in parent_rounds])
        for row, v in enumerate(self.interior):
            j = intro[v]
            vec = np.zeros(counts[j - 1])
            vec[v] = 1.0
            for parents in parent_rounds[j - 1 :]:
                extra = np.fromiter(
                    (0.5 * (vec[a] + vec[b]) for a, b in parents), dtype=float
                )
                vec = np.concatenate([vec, extra])
            hat[row] = vec
        self.hat = hat

        # per-triangle gradients of the barycentric shape functions
        p = mesh.verts[mesh.tris]
        m = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        m_inv = np.linalg.inv(m)
        g12 = np.transpose(m_inv, (0, 2, 1))
        g0 = -g12.sum(axis=1, keepdims=True)
        self.grad_op = np.concatenate([g0, g12], axis=1)  # (T, 3, 2)

    def locate(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """First containing triangle per point (-1 outside) and barycentrics."""
        n = len(pts)
        tri_idx = np.full(n, -1, dtype=int)
        bary = np.zeros((n, 3))
        verts = self.mesh.verts
        for t, (a, b, c) in enumerate(self.mesh.tris):
            todo = tri_idx < 0
            if not np.any(todo):
                break
            p0, p1, p2 = verts[a], verts[b], verts[c]
            m = np.array([p1 - p0, p2 - p0]).T
            lam = np.linalg.solve(m, (pts[todo] - p0).T).T
            lam0 = 1.0 - lam.sum(axis=1)
            inside = (lam[:, 0] >= -1e-12) & (lam[:, 1] >= -1e-12) & (lam0 >= -1e-12)
            hit = np.flatnonzero(todo)[inside]
            tri_idx[hit] = t
            bary[hit, 0] = lam0[inside]
            bary[hit, 1:] = lam[inside]
        return tri_idx, bary

    def hat_tables(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (K, C) and gradients (K, C, 2) of all hats at pts."""
        tri_idx, bary = self.locate(pts)
        k, c = self.n_scalar, len(pts)
        vals = np.zeros((k, c))
        grads = np.zeros((k, c, 2))
        inside = tri_idx >= 0
        if np.any(inside):
            tv = self.mesh.tris[tri_idx[inside]]  # (Ci, 3)
            hat_at = self.hat[:, tv]  # (K, Ci, 3)
            vals[:, inside] = np.einsum("kcj,cj->kc", hat_at, bary[inside])
            grads[:, inside, :] = np.einsum(
                "kcj,cjd->kcd", hat_at, self.grad_op[tri_idx[inside]]
            )
        return vals, grads


@dataclass
class TestSpace:
    """A finite test family with prefix-nested levels."""

    kind: str
    level: int
    domain: Domain
    m: int
    eps_min: float
    _impl: object = field(repr=False)
    _cell_tables: SpaceTables | None = field(default=None, repr=False)

    def _choquet(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = self.domain.dim
        rho = self.domain.omega_radius
        psi = 0.5 * (np.sum(pts * pts, axis=1) - rho * rho)
        eye = np.eye(d).reshape(-1)
        val0 = psi[:, None] * eye[None, :]
        div0 = pts.copy()
        return val0, div0

    def tables(self, pts: np.ndarray) -> SpaceTables:
        """Assemble basis samples at a point batch (cached for cell centers)."""
        if pts is self.domain.cell_centers and self._cell_tables is not None:
            return self._cell_tables
        d = self.domain.dim
        vals, grads = self._impl.hat_tables(pts[:, 0] if d == 1 else pts)
        k, c = vals.shape
        if d == 1:
            val = vals[:, :, None]
            div = grads[:, :, None]
        else:
            val = np.zeros((k * 4, c, 4))
            div = np.zeros((k * 4, c, 2))
            for a in range(2):
                for b in range(2):
                    comp = a * 2 + b
                    rows = np.arange(k) * 4 + comp
                    val[rows, :, comp] = vals
                    div[rows, :, a] = grads[:, :, b]
        val0 = div0 = None
        if self.kind == "h2":
            val0, div0 = self._choquet(pts)
        out = SpaceTables(val=val, div=div, val0=val0, div0=div0)
        if pts is self.domain.cell_centers:
            self._cell_tables = out
        return out

    def field_at(self, fc: FieldCoeffs, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(values (C, d*d), divergences (C, d)) of the member at pts."""
        t = self.tables(pts)
        phi = np.einsum("i,ick->ck", fc.coeffs, t.val)
        dv = np.einsum("i,ica->ca", fc.coeffs, t.div)
        if self.kind == "h2":
            phi = phi + fc.eps * t.val0
            dv = dv + fc.eps * t.div0
        return phi, dv

    def value_at(self, fc: FieldCoeffs, x: np.ndarray) -> np.ndarray:
        """Member value at a single point, as a d-by-d matrix."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.domain.contains_omega(x):
            raise SpaceError(f"point {x} lies outside the source region")
        phi, _ = self.field_at(fc, x[None, :])
        d = self.domain.dim
        return phi[0].reshape(d, d)

    def div_at(self, fc: FieldCoeffs, x: np.ndarray) -> np.ndarray:
        """Row-wise divergence of the member at a single point."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.domain.contains_omega(x):
            raise SpaceError(f"point {x} lies outside the source region")
        _, dv = self.field_at(fc, x[None, :])
        return dv[0]

    def zero_coeffs(self) -> FieldCoeffs:
        return FieldCoeffs(np.zeros(self.m), eps=self.eps_min)


def build_h1_space(domain: Domain, level: int) -> TestSpace:
    """Nested subspace of piecewise-affine matrix fields, zero on the boundary."""
    if level < 1:
        raise SpaceError("level must be >= 1")
    if level > MAX_LEVEL:
        raise SpaceError(f"level {level} exceeds the size guard {MAX_LEVEL}")
    if domain.dim == 1:
        impl = _Basis1D(domain.omega_radius, level)
        m = impl.n_scalar
    else:
        impl = _Basis2D(domain.omega_radius, level)
        m = impl.n_scalar * 4
    return TestSpace(
        kind="h1", level=level, domain=domain, m=m, eps_min=0.0, _impl=impl
    )


def build_h2_space(domain: Domain, level: int) -> TestSpace:
    """Convex set: h1 members shifted by eps * (psi I), eps >= 1/level."""
    base = build_h1_space(domain, level)
    return TestSpace(
        kind="h2",
        level=level,
        domain=domain,
        m=base.m,
        eps_min=1.0 / level,
        _impl=base._impl,
    )
