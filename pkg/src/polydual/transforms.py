"""Conjugate-type transforms between node potentials and affine majorants.

A potential is a function sampled on the target-region lattice (implicitly
+inf off the closed region).  Its transforms are represented exactly as
finite maxima of affine pieces, one piece per lattice node:

* ``sharp``:  l -> max_u { u.v + Hconj(-l(u)) }   (entropy-coupled)
* ``amp``:    l -> max_u { u.v - l(u) }            (plain, incompressible)

The reverse transforms ``flat`` and ``amp_flat`` evaluate the convex
conjugate of a majorant at the lattice nodes.  For a max-of-affine
majorant the conjugate is computed exactly: in 1D from the lower convex
hull of the (slope, -offset) point set, in 2D by a small linear program
per node; for a general evaluable function a discrete v-grid fallback is
used.  The entropy-coupled reverse transform then reduces to the scalar
identity  flat(k)(u) = -Hconj^{-1}(-conj(k)(u)).

``tighten_pair`` composes the two directions, which never increases the
dual objective and lands in the tight class (majorant and potential are
conjugates of each other).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .geometry import Domain
from .integrands import Entropy


class TransformError(RuntimeError):
    pass


class UnboundedConjugateError(TransformError):
    """The discrete argmax of a grid conjugate sat on the grid boundary."""


@dataclass(frozen=True)
class Potential:
    """Values of a dual potential on the target lattice nodes."""

    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise TransformError("potential must be finite at every node")

    @property
    def neg_min(self) -> float:
        """Diagnostic -min over nodes (depth of the potential)."""
        return float(-np.min(self.values))


@dataclass(frozen=True)
class ConjugateMajorant:
    """Convex function represented as max_j { nodes[j].v + offsets[j] }.

    Every slope is a lattice node of the closed target region, so the
    function is Lipschitz with constant at most the largest node norm.
    """

    nodes: np.ndarray  # (N, d)
    offsets: np.ndarray  # (N,)
    kind: str  # "sharp" | "amp"

    def pieces_at(self, v: np.ndarray) -> np.ndarray:
        """All affine pieces at points v of shape (..., d); returns (..., N)."""
        v = np.asarray(v, dtype=float)
        return v @ self.nodes.T + self.offsets

    def __call__(self, v: np.ndarray) -> np.ndarray | float:
        p = self.pieces_at(v)
        out = p.max(axis=-1)
        return float(out) if out.ndim == 0 else out

    def argmax_at(self, v: np.ndarray, tie_tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """(argmax piece index, tie flag) at points v of shape (M, d).

        Ties are broken toward the smallest node index; a point is
        flagged when the runner-up piece is within ``tie_tol``.
        """
        p = self.pieces_at(v)
        idx = p.argmax(axis=-1)
        top = p[np.arange(len(p)), idx]
        p2 = p.copy()
        p2[np.arange(len(p)), idx] = -np.inf
        second = p2.max(axis=-1)
        return idx, (top - second) <= tie_tol

    @property
    def lipschitz_bound(self) -> float:
        return float(np.max(np.linalg.norm(self.nodes, axis=1)))


def sharp(potential: Potential, entropy: Entropy, domain: Domain) -> ConjugateMajorant:
    """Entropy-coupled forward transform of a node potential."""
    offsets = np.asarray(entropy.conj(-potential.values))
    return ConjugateMajorant(domain.lambda_nodes, offsets, kind="sharp")


def amp(potential: Potential, domain: Domain) -> ConjugateMajorant:
    """Plain forward transform (incompressible coupling)."""
    return ConjugateMajorant(domain.lambda_nodes, -potential.values, kind="amp")


def _lower_hull_values(u: np.ndarray, z: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Lower convex envelope of the 1D point set (u, z), sampled at query."""
    order = np.argsort(u)
    us, zs = u[order], z[order]
    hull: list[int] = []
    for i in range(len(us)):
        while len(hull) >= 2:
            i1, i2 = hull[-2], hull[-1]
            if (zs[i2] - zs[i1]) * (us[i] - us[i2]) >= (zs[i] - zs[i2]) * (
                us[i2] - us[i1]
            ):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(query, us[hull], zs[hull])


def conjugate_at_nodes(majorant: ConjugateMajorant, domain: Domain) -> np.ndarray:
    """Exact convex conjugate of a max-of-affine majorant at the lattice nodes.

    The conjugate is the lower convex envelope of the point set
    (node, -offset); it is finite on the convex hull of the nodes, which
    contains every lattice node.
    """
    u = majorant.nodes
    z = -majorant.offsets
    nodes = domain.lambda_nodes
    if domain.dim == 1:
        return _lower_hull_values(u[:, 0], z, nodes[:, 0])
    a_eq = np.vstack([u.T, np.ones(len(u))])
    out = np.empty(len(nodes))
    for i, w in enumerate(nodes):
        res = linprog(
            z,
            A_eq=a_eq,
            b_eq=np.append(w, 1.0),
            bounds=(0.0, None),
            method="highs",
        )
        if not res.success:
            raise TransformError(f"conjugate LP failed at node {w}: {res.message}")
        out[i] = res.fun
    return out


def grid_conjugate_at_nodes(
    k_fn,
    domain: Domain,
    radius: float,
    n_grid: int = 257,
) -> np.ndarray:
    """Discrete Legendre transform of an evaluable function at the nodes.

    ``k_fn`` must accept an (M, d) batch.  Raises when the argmax of any
    node sits on the v-grid boundary, which signals an unbounded inner
    supremum (the grid radius was too small).
    """
    d = domain.dim
    axis = np.linspace(-radius, radius, n_grid)
    if d == 1:
        pts = axis[:, None]
        on_boundary = np.zeros(len(pts), dtype=bool)
        on_boundary[[0, -1]] = True
    else:
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        edge = (np.abs(pts[:, 0]) >= radius - 1e-15) | (
            np.abs(pts[:, 1]) >= radius - 1e-15
        )
        on_boundary = edge
    kv = np.asarray(k_fn(pts), dtype=float)
    scores = domain.lambda_nodes @ pts.T - kv[None, :]
    idx = scores.argmax(axis=1)
    if np.any(on_boundary[idx]):
        raise UnboundedConjugateError(
            "conjugate argmax on the v-grid boundary; enlarge the grid radius"
        )
    return scores[np.arange(len(idx)), idx]


def flat(
    k,
    entropy: Entropy,
    domain: Domain,
    grid_radius: float | None = None,
    n_grid: int = 257,
) -> Potential:
    """Entropy-coupled reverse transform, evaluated at the lattice nodes.

    Accepts either a :class:`ConjugateMajorant` (exact conjugation) or an
    arbitrary vectorized callable (grid fallback, requires a radius).
    """
    if isinstance(k, ConjugateMajorant):
        a = conjugate_at_nodes(k, domain)
    else:
        if grid_radius is None:
            raise TransformError("grid fallback needs an explicit radius")
        a = grid_conjugate_at_nodes(k, domain, grid_radius, n_grid)
    return Potential(-np.asarray(entropy.conj_inv(-a)))


def amp_flat(
    k,
    domain: Domain,
    grid_radius: float | None = None,
    n_grid: int = 257,
) -> Potential:
    """Plain reverse transform (conjugate restricted to the lattice)."""
    if isinstance(k, ConjugateMajorant):
        a = conjugate_at_nodes(k, domain)
    else:
        if grid_radius is None:
            raise TransformError("grid fallback needs an explicit radius")
        a = grid_conjugate_at_nodes(k, domain, grid_radius, n_grid)
    return Potential(a)


def tighten_pair(
    potential: Potential, domain: Domain, entropy: Entropy | None = None
) -> tuple[ConjugateMajorant, Potential]:
    """Map a potential to the tight conjugate pair it generates.

    Compressible (entropy given): (sharp(l), flat(sharp(l))).
    Incompressible (entropy None): the plain pair, renormalized so the
    potential has minimum zero; the normalizing shift moves into the
    majorant, leaving the dual objective unchanged when the two regions
    have equal measure.
    """
    if entropy is not None:
        k = sharp(potential, entropy, domain)
        tightened = flat(k, entropy, domain)
        return sharp(tightened, entropy, domain), tightened
    k = amp(potential, domain)
    tightened = amp_flat(k, domain).values
    tightened = tightened - tightened.min()
    pot = Potential(tightened)
    return amp(pot, domain), pot


def inequality_violation(
    majorant: ConjugateMajorant,
    potential: Potential,
    domain: Domain,
    entropy: Entropy | None,
    n_samples: int,
    rng: np.random.Generator,
    v_radius: float | None = None,
) -> tuple[float, int]:
    """Sampled violation of the defining inequality of the conjugate pair.

    Compressible:   k(v) + t l(u) + H(t) >= u.v  over random (u, v, t).
    Incompressible: k(v) + l(u) >= u.v            over random (u, v).

    In 1D the potential is interpolated piecewise-linearly between
    nodes; in 2D the samples are restricted to the nodes.  Returns the
    largest positive violation and the count above 1e-9.
    """
    if v_radius is None:
        v_radius = 4.0 * domain.r_star
    d = domain.dim
    v = rng.uniform(-v_radius, v_radius, size=(n_samples, d))
    if d == 2:
        keep = np.linalg.norm(v, axis=1) <= v_radius
        v[~keep] *= 0.5
    if d == 1:
        u = rng.uniform(-domain.lambda_radius, domain.lambda_radius, size=n_samples)
        lu = np.interp(u, domain.lambda_nodes[:, 0], potential.values)
        u = u[:, None]
    else:
        idx = rng.integers(0, len(domain.lambda_nodes), size=n_samples)
        u = domain.lambda_nodes[idx]
        lu = potential.values[idx]
    kv = majorant(v)
    uv = np.sum(u * v, axis=1)
    if entropy is not None:
        t = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=n_samples))
        slack = kv + t * lu + np.asarray(entropy.value(t)) - uv
    else:
        slack = kv + lu - uv
    violation = np.maximum(0.0, -slack)
    return float(violation.max(initial=0.0)), int(np.count_nonzero(violation > 1e-9))


def sampled_lipschitz(
    majorant: ConjugateMajorant,
    rng: np.random.Generator,
    n_pairs: int = 500,
    radius: float = 10.0,
) -> float:
    """Largest difference quotient of the majorant over random point pairs."""
    d = majorant.nodes.shape[1]
    a = rng.uniform(-radius, radius, size=(n_pairs, d))
    b = rng.uniform(-radius, radius, size=(n_pairs, d))
    num = np.abs(majorant(a) - majorant(b))
    den = np.linalg.norm(a - b, axis=1)
    keep = den > 1e-12
    return float((num[keep] / den[keep]).max(initial=0.0))
