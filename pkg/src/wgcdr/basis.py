"""Polynomial bases on elements and edges, mass matrices and L2 projections.

Element bases are scaled monomials ``((x - xc)/h)**a * ((y - yc)/h)**b``
centred at the element centroid, optionally orthonormalised against the
element mass matrix by a (repeated) Cholesky factorisation in graded order.
Graded order means the first ``dim P_k`` members of a degree-``r``
orthonormal basis are exactly the degree-``k`` orthonormal basis.

Edge bases are Legendre polynomials in the edge parameter, normalised so
the edge mass matrix is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import is_convex, polygon_centroid, polygon_diameter
from .quadrature import QuadratureRule, edge_quadrature, gauss_legendre_01, polygon_quadrature


class DegenerateElementError(np.linalg.LinAlgError):
    """Mass matrix not positive definite (degenerate element or bad quadrature)."""


def dim_p(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponent pairs in graded order: 1, x, y, x^2, xy, y^2, ..."""
    exps = [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]
    out = np.array(exps, dtype=np.int64).reshape(-1, 2)
    out.setflags(write=False)
    return out


def _powers(t, degree):
    out = np.empty(t.shape + (degree + 1,))
    out[..., 0] = 1.0
    for n in range(1, degree + 1):
        out[..., n] = out[..., n - 1] * t
    return out


def scaled_monomials(points, center, h, degree):
    """Scaled monomials evaluated at ``points``.

    ``points`` is ``(..., nq, 2)``, ``center`` broadcasts to ``(..., 1, 2)``
    and ``h`` to ``(..., 1)``.  Returns ``(..., nq, dim_p(degree))``.
    """
    s = (np.asarray(points) - center) / np.asarray(h)[..., None]
    px = _powers(s[..., 0], degree)
    py = _powers(s[..., 1], degree)
    e = monomial_exponents(degree)
    return px[..., e[:, 0]] * py[..., e[:, 1]]


def scaled_monomial_gradients(points, center, h, degree):
    """Gradients of :func:`scaled_monomials`, shape ``(..., nq, nm, 2)``."""
    h = np.asarray(h)[..., None]
    s = (np.asarray(points) - center) / h
    px = _powers(s[..., 0], degree)
    py = _powers(s[..., 1], degree)
    e = monomial_exponents(degree)
    ex, ey = e[:, 0], e[:, 1]
    dx = ex * px[..., np.maximum(ex - 1, 0)] * py[..., ey] / h
    dy = ey * px[..., ex] * py[..., np.maximum(ey - 1, 0)] / h
    return np.stack([dx, dy], axis=-1)


def orthonormal_coefficients(mass, passes=2):
    """Lower-triangular ``C`` with ``C @ mass @ C.T == I`` (batched).

    Two Cholesky passes recover the orthogonality lost to the conditioning
    of high-degree monomial mass matrices.
    """
    n = mass.shape[-1]
    coeffs = np.broadcast_to(np.eye(n), mass.shape).copy()
    current = mass
    for _ in range(passes):
        try:
            low = np.linalg.cholesky(current)
        except np.linalg.LinAlgError as exc:
            raise DegenerateElementError(
                "mass matrix is not positive definite; the element is degenerate "
                "or the quadrature is too weak") from exc
        inv = np.linalg.inv(low)
        coeffs = inv @ coeffs
        current = inv @ current @ np.swapaxes(inv, -1, -2)
        current = 0.5 * (current + np.swapaxes(current, -1, -2))
    return coeffs


class ElementBasis:
    """Basis of ``P_m`` on one polygon.

    Parameters
    ----------
    polygon : (n, 2) array_like
        CCW vertex cycle.
    degree : int
    orthonormal : bool
        Orthonormalise the scaled monomials against the element mass matrix.
    rule : QuadratureRule, optional
        Rule used for orthonormalisation; defaults to one exact to
        ``2 * degree + 2``.
    """

    def __init__(self, polygon, degree, orthonormal=True, rule=None, element_id=None):
        self.polygon = np.asarray(polygon, dtype=float)
        self.degree = int(degree)
        self.element_id = element_id
        self.center = polygon_centroid(self.polygon)
        self.h = polygon_diameter(self.polygon)
        self.orthonormal = orthonormal
        self.rule = rule if rule is not None else polygon_quadrature(self.polygon, 2 * self.degree + 2)
        n = dim_p(self.degree)
        if orthonormal:
            m = scaled_monomials(self.rule.points, self.center, self.h, self.degree)
            mass = np.einsum("q,qi,qj->ij", self.rule.weights, m, m)
            self.coefficients = orthonormal_coefficients(mass)
        else:
            self.coefficients = np.eye(n)

    @property
    def dim(self) -> int:
        return dim_p(self.degree)

    def values(self, points) -> np.ndarray:
        m = scaled_monomials(np.asarray(points, dtype=float), self.center, self.h, self.degree)
        return m @ self.coefficients.T

    def gradients(self, points) -> np.ndarray:
        g = scaled_monomial_gradients(np.asarray(points, dtype=float), self.center, self.h,
                                      self.degree)
        return np.einsum("ij,qjc->qic", self.coefficients, g)

    def evaluate(self, coeffs, points) -> np.ndarray:
        return self.values(points) @ np.asarray(coeffs)


def legendre_table(t, degree):
    """Legendre polynomials ``P_0..P_degree`` at ``t`` (last axis)."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = t
    for n in range(1, degree):
        out[..., n + 1] = ((2 * n + 1) * t * out[..., n] - n * out[..., n - 1]) / (n + 1)
    return out


def edge_basis_values(t, length, degree):
    """Orthonormal edge basis at parameters ``t`` in [-1, 1].

    ``length`` broadcasts against ``t``'s leading axes.
    """
    scale = np.sqrt((2 * np.arange(degree + 1) + 1) / np.asarray(length)[..., None])
    return legendre_table(t, degree) * scale[..., None, :]


class EdgeBasis:
    """Orthonormal basis of ``P_q(e)`` on the segment ``p0 -> p1``."""

    def __init__(self, p0, p1, degree, edge_id=None):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.degree = int(degree)
        self.edge_id = edge_id
        self.length = float(np.hypot(*(self.p1 - self.p0)))

    @property
    def dim(self) -> int:
        return self.degree + 1

    def rule(self, degree=None) -> QuadratureRule:
        return edge_quadrature(self.p0, self.p1, 2 * self.degree + 2 if degree is None else degree)

    def parameter(self, points) -> np.ndarray:
        d = self.p1 - self.p0
        s = (np.asarray(points, dtype=float) - self.p0) @ d / self.length ** 2
        return 2.0 * s - 1.0

    def values(self, points) -> np.ndarray:
        t = self.parameter(points)
        return legendre_table(t, self.degree) * np.sqrt(
            (2 * np.arange(self.degree + 1) + 1) / self.length)


def mass_matrix(basis, rule=None, return_condition=False):
    """Mass matrix of an :class:`ElementBasis` or :class:`EdgeBasis`.

    Raises :class:`DegenerateElementError` if the result is not symmetric
    positive definite.
    """
    if rule is None:
        rule = basis.rule if isinstance(basis, ElementBasis) else basis.rule()
    phi = basis.values(rule.points)
    mass = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    mass = 0.5 * (mass + mass.T)
    try:
        np.linalg.cholesky(mass)
    except np.linalg.LinAlgError as exc:
        raise DegenerateElementError("mass matrix is not positive definite") from exc
    if return_condition:
        return mass, float(np.linalg.cond(mass))
    return mass


def _solve_spd(mass, rhs):
    low = np.linalg.cholesky(mass)
    y = np.linalg.solve(low, rhs)
    return np.linalg.solve(low.T, y)


def project_Q0(f, polygon, k, orthonormal=True, basis=None):
    """Coefficients of the L2 projection of ``f(x, y)`` onto ``P_k(T)``."""
    if basis is None:
        basis = ElementBasis(polygon, k, orthonormal=orthonormal,
                             rule=polygon_quadrature(polygon, 2 * k + 6))
    rule = basis.rule
    phi = basis.values(rule.points)
    vals = np.asarray(f(rule.points[:, 0], rule.points[:, 1]), dtype=float)
    moments = np.tensordot(phi * rule.weights[:, None], vals, axes=(0, 0))
    mass = mass_matrix(basis, rule)
    return _solve_spd(mass, moments)


def project_Qb(g, p0, p1, q, basis=None):
    """Coefficients of the L2 projection of ``g(x, y)`` onto ``P_q(e)``."""
    if basis is None:
        basis = EdgeBasis(p0, p1, q)
    rule = basis.rule(2 * q + 6)
    phi = basis.values(rule.points)
    vals = np.asarray(g(rule.points[:, 0], rule.points[:, 1]), dtype=float)
    moments = (phi * rule.weights[:, None]).T @ vals
    return _solve_spd(mass_matrix(basis, rule), moments)


def project_Qr_vector(G, polygon, r, orthonormal=True, basis=None):
    """Componentwise projection of a vector field onto ``[P_r(T)]^2``.

    ``G(x, y)`` returns a pair of arrays; the result has shape ``(2, dim P_r)``.
    """
    if basis is None:
        basis = ElementBasis(polygon, r, orthonormal=orthonormal,
                             rule=polygon_quadrature(polygon, 2 * r + 6))
    gx = project_Q0(lambda x, y: G(x, y)[0], polygon, r, basis=basis)
    gy = project_Q0(lambda x, y: G(x, y)[1], polygon, r, basis=basis)
    return np.stack([gx, gy])


@dataclass(frozen=True)
class WgSpace:
    """Degree triple of the weak Galerkin space.

    ``r=None`` selects ``k + 1`` on convex and ``k + 2`` on nonconvex
    elements; ``r="theory"`` selects ``k - 1 + N`` (convex) and
    ``k - 1 + 2N`` (nonconvex) for an element with ``N`` edges; an integer
    fixes ``r`` everywhere.
    """

    k: int
    q: int | None = None
    r: int | str | None = None

    def __post_init__(self):
        if self.q is None:
            object.__setattr__(self, "q", self.k)
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 0):
            raise ValueError(f"k must be a non-negative integer, got {self.k!r}")
        if not 0 <= self.q <= self.k:
            raise ValueError(f"need k >= q >= 0, got k={self.k}, q={self.q}")
        if isinstance(self.r, str):
            if self.r != "theory":
                raise ValueError(f"unknown r policy {self.r!r}")
        elif self.r is not None and self.r < self.k:
            raise ValueError(f"need r >= k, got r={self.r}, k={self.k}")

    @property
    def dim_interior(self) -> int:
        return dim_p(self.k)

    @property
    def dim_edge(self) -> int:
        return self.q + 1

    def n_local_dofs(self, n_edges: int) -> int:
        return self.dim_interior + n_edges * self.dim_edge

    def weak_degree(self, n_edges: int, convex: bool) -> int:
        if self.r is None:
            return self.k + 1 if convex else self.k + 2
        if self.r == "theory":
            return self.k - 1 + (n_edges if convex else 2 * n_edges)
        return int(self.r)

    def weak_degree_for(self, polygon) -> int:
        return self.weak_degree(len(polygon), is_convex(polygon))

    def element_quadrature_degree(self, r: int) -> int:
        return max(2 * r, self.k + r, 2 * self.k) + 2

    def edge_quadrature_degree(self, r: int) -> int:
        return self.q + r + 2

    def n_dofs(self, mesh) -> int:
        """Free unknowns: interior blocks plus interior-edge blocks."""
        return mesh.n_elements * self.dim_interior + len(mesh.interior_edge_ids) * self.dim_edge


def project_edges(mesh, edge_ids, g, q, extra=4):
    """Batched ``Q_b g`` on mesh edges in their global orientation.

    Returns ``(len(edge_ids), q + 1)`` coefficients in the orthonormal
    Legendre basis; the rule uses ``q + extra`` Gauss points.
    """
    eids = np.asarray(edge_ids, dtype=np.int64)
    s, w = gauss_legendre_01(q + extra)
    p0 = mesh.vertices[mesh.edges[eids, 0]]
    p1 = mesh.vertices[mesh.edges[eids, 1]]
    pts = p0[:, None, :] + s[:, None] * (p1 - p0)[:, None, :]
    length = mesh.edge_length[eids]
    chi = edge_basis_values(np.broadcast_to(2.0 * s - 1.0, (len(eids), len(s))), length, q)
    vals = np.broadcast_to(np.asarray(g(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:-1])
    return np.einsum("ep,ep,epm->em", w * length[:, None], vals, chi)
