"""Convex domains, quadrature grids, and the lattice of dual nodes.

Two shapes are supported: centered intervals in 1D and centered discs in
2D.  The source region ``omega`` carries a midpoint quadrature (uniform
cells on the interval, a polar cell decomposition on the disc); the
target region ``lambda`` carries a lattice of nodes that includes
boundary points, each weighted by the area of a surrounding patch.
Grids are regenerated deterministically from the stored sizes and are
never persisted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

VOLUME_RTOL = 1e-12


class DomainError(ValueError):
    """Inconsistent or unsupported domain specification."""


def _interval_cells(radius: float, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(-radius, radius, n_cells + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    volumes = np.diff(edges)
    return centers[:, None], volumes


def _interval_lattice(radius: float, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(-radius, radius, n_nodes)
    spacing = 2.0 * radius / (n_nodes - 1)
    weights = np.full(n_nodes, spacing)
    weights[0] = weights[-1] = 0.5 * spacing
    return nodes[:, None], weights


def _disc_cells(radius: float, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar cell decomposition with centroid-radius representative points."""
    n_theta = max(4, int(round(math.sqrt(n_cells))))
    n_r = max(1, int(round(n_cells / n_theta)))
    r_edges = radius * np.arange(n_r + 1) / n_r
    t_edges = 2.0 * math.pi * np.arange(n_theta + 1) / n_theta
    t_mid = 0.5 * (t_edges[:-1] + t_edges[1:])
    centers = []
    volumes = []
    for i in range(n_r):
        r1, r2 = r_edges[i], r_edges[i + 1]
        # distance of the sector centroid from the origin
        rc = (2.0 / 3.0) * (r2**3 - r1**3) / (r2**2 - r1**2)
        vol = 0.5 * (r2**2 - r1**2) * (2.0 * math.pi / n_theta)
        for tm in t_mid:
            centers.append((rc * math.cos(tm), rc * math.sin(tm)))
            volumes.append(vol)
    return np.array(centers), np.array(volumes)


def _disc_lattice(radius: float, n_target: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar lattice: one center node plus rings of 6k nodes at radius k/m.

    The outermost ring sits on the boundary circle.  Weights split each
    annulus evenly among its ring; the total weight equals the disc area
    exactly.  The ring count is chosen so the node total is as close as
    possible to the request.
    """
    best_m, best_err = 1, None
    for m in range(1, 64):
        count = 1 + 3 * m * (m + 1)
        err = abs(count - n_target)
        if best_err is None or err < best_err:
            best_m, best_err = m, err
        if count > n_target and err > (best_err or 0):
            break
    m = best_m
    nodes = [(0.0, 0.0)]
    weights = [math.pi * (radius / (2.0 * m)) ** 2]
    for k in range(1, m + 1):
        rk = radius * k / m
        lo = radius * (k - 0.5) / m
        hi = radius if k == m else radius * (k + 0.5) / m
        ring_area = math.pi * (hi**2 - lo**2)
        n_ring = 6 * k
        for j in range(n_ring):
            ang = 2.0 * math.pi * j / n_ring
            nodes.append((rk * math.cos(ang), rk * math.sin(ang)))
            weights.append(ring_area / n_ring)
    return np.array(nodes), np.array(weights)


@dataclass(frozen=True)
class Domain:
    """A pair of centered convex regions with their discretizations.

    ``cell_centers``/``cell_volumes`` give a midpoint quadrature of the
    source region; ``lambda_nodes``/``lambda_weights`` sample the closed
    target region including its boundary.  ``r_star`` is the smallest
    scale (times a 1.01 safety factor) for which the target region is
    pinched between the balls of radius ``1/r_star`` and ``r_star/2``.
    """

    dim: int
    omega_kind: str
    omega_radius: float
    lambda_kind: str
    lambda_radius: float
    r_star: float
    n_cells: int
    n_lambda_nodes: int
    cell_centers: np.ndarray = field(repr=False)
    cell_volumes: np.ndarray = field(repr=False)
    lambda_nodes: np.ndarray = field(repr=False)
    lambda_weights: np.ndarray = field(repr=False)

    @property
    def omega_volume(self) -> float:
        if self.omega_kind == "interval":
            return 2.0 * self.omega_radius
        return math.pi * self.omega_radius**2

    @property
    def lambda_volume(self) -> float:
        if self.lambda_kind == "interval":
            return 2.0 * self.lambda_radius
        return math.pi * self.lambda_radius**2

    def contains_omega(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(np.atleast_1d(x))) <= self.omega_radius + tol

    def to_json(self) -> str:
        spec = {
            "dim": self.dim,
            "omega_kind": self.omega_kind,
            "omega_radius": self.omega_radius,
            "lambda_kind": self.lambda_kind,
            "lambda_radius": self.lambda_radius,
            "n_cells": self.n_cells,
            "n_lambda_nodes": self.n_lambda_nodes,
        }
        return json.dumps(spec, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Domain":
        spec = json.loads(text)
        return make_domain(
            spec["dim"],
            (spec["omega_kind"], spec["omega_radius"]),
            (spec["lambda_kind"], spec["lambda_radius"]),
            spec["n_cells"],
            spec["n_lambda_nodes"],
        )


def make_domain(
    dim: int,
    omega_spec: tuple[str, float],
    lambda_spec: tuple[str, float],
    n_cells: int,
    n_lambda_nodes: int,
    incompressible: bool = False,
) -> Domain:
    """Build a :class:`Domain` from shape specs ``(kind, radius)``.

    1D regions must be centered intervals, 2D regions centered discs
    (the boundary then coincides with the extreme points).  With
    ``incompressible=True`` the two regions must have equal measure.
    """
    omega_kind, omega_radius = omega_spec
    lambda_kind, lambda_radius = lambda_spec
    if dim not in (1, 2):
        raise DomainError(f"dim must be 1 or 2, got {dim}")
    expected = "interval" if dim == 1 else "disc"
    if omega_kind != expected or lambda_kind != expected:
        raise DomainError(
            f"dim={dim} requires kind '{expected}', got "
            f"omega={omega_kind!r}, lambda={lambda_kind!r}"
        )
    if omega_radius <= 0 or lambda_radius <= 0:
        raise DomainError("region radii must be positive")
    if n_cells < 1 or n_lambda_nodes < 2:
        raise DomainError("grid sizes must be positive (>= 2 lattice nodes)")

    if dim == 1:
        omega_volume = 2.0 * omega_radius
        lambda_volume = 2.0 * lambda_radius
    else:
        omega_volume = math.pi * omega_radius**2
        lambda_volume = math.pi * lambda_radius**2
    if incompressible and not math.isclose(
        omega_volume, lambda_volume, rel_tol=VOLUME_RTOL
    ):
        raise DomainError(
            "incompressible runs require equal measures: "
            f"|omega|={omega_volume!r} != |lambda|={lambda_volume!r}"
        )

    # smallest r >= 1 with ball(1/r) inside lambda inside ball(r/2)
    r_star = 1.01 * max(1.0, 1.0 / lambda_radius, 2.0 * lambda_radius)

    if dim == 1:
        centers, volumes = _interval_cells(omega_radius, n_cells)
        nodes, weights = _interval_lattice(lambda_radius, n_lambda_nodes)
    else:
        centers, volumes = _disc_cells(omega_radius, n_cells)
        nodes, weights = _disc_lattice(lambda_radius, n_lambda_nodes)

    return Domain(
        dim=dim,
        omega_kind=omega_kind,
        omega_radius=omega_radius,
        lambda_kind=lambda_kind,
        lambda_radius=lambda_radius,
        r_star=r_star,
        n_cells=n_cells,
        n_lambda_nodes=n_lambda_nodes,
        cell_centers=centers,
        cell_volumes=volumes,
        lambda_nodes=nodes,
        lambda_weights=weights,
    )


def support_function(domain: Domain, v: np.ndarray | float) -> float:
    """max of u.v over the closed target region (closed form for balls)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return float(domain.lambda_radius * np.linalg.norm(v))
