"""Quadrature on segments and (possibly nonconvex) polygons.

Polygon rules are composed from collapsed tensor-product Gauss rules on the
triangles of an ear-clipping triangulation, so any exactness degree is
available.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import is_simple, polygon_diameter, signed_area


class TriangulationError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values) -> float:
        """Integrate samples taken at ``points`` (leading axis)."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


@lru_cache(maxsize=None)
def gauss_legendre_01(n: int):
    """``n``-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_points_for(degree: int) -> int:
    return max(1, -(-(degree + 1) // 2))


@lru_cache(maxsize=None)
def reference_triangle_rule(degree: int):
    """Duffy-collapsed Gauss rule on the triangle (0,0), (1,0), (0,1).

    Returns ``(points (nq, 2), weights (nq,))``; the weights sum to 1/2.
    The Jacobian of the collapse raises the degree in the first direction
    by one, hence ``ceil((degree + 2) / 2)`` points per direction.
    """
    n = max(1, -(-(degree + 2) // 2))
    x, w = gauss_legendre_01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.stack([u.ravel(), (v * (1.0 - u)).ravel()], axis=1)
    wts = (wu * wv * (1.0 - u)).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def edge_quadrature(p0, p1, degree: int) -> QuadratureRule:
    """Gauss rule on the segment ``p0 -> p1`` exact to ``degree`` in arclength."""
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    x, w = gauss_legendre_01(gauss_points_for(degree))
    length = float(np.hypot(*(p1 - p0)))
    pts = p0[None, :] + x[:, None] * (p1 - p0)[None, :]
    return QuadratureRule(pts, w * length, degree)


def _point_in_triangle(p, a, b, c, eps):
    def orient(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])

    return orient(a, b, p) >= -eps and orient(b, c, p) >= -eps and orient(c, a, p) >= -eps


def triangulate_polygon(polygon, check=True) -> np.ndarray:
    """Ear-clipping triangulation of a simple counterclockwise polygon.

    Returns an ``(n - 2, 3)`` array of vertex indices, each triangle CCW.
    Raises :class:`TriangulationError` for self-intersecting, clockwise or
    degenerate input.
    """
    p = np.asarray(polygon, dtype=float)
    n = len(p)
    if n < 3:
        raise TriangulationError("a polygon needs at least three vertices")
    diam = polygon_diameter(p)
    area = signed_area(p)
    if not area > 1e-14 * diam ** 2:
        raise TriangulationError(f"polygon is clockwise or degenerate (signed area {area:.3g})")
    if check and not is_simple(p):
        raise TriangulationError("polygon is self-intersecting")
    if n == 3:
        return np.array([[0, 1, 2]], dtype=np.int64)

    eps = 1e-12 * diam ** 2
    remaining = list(range(n))
    tris = []
    while len(remaining) > 3:
        m = len(remaining)
        clipped = False
        for pos in range(m):
            ia, ib, ic = remaining[pos - 1], remaining[pos], remaining[(pos + 1) % m]
            a, b, c = p[ia], p[ib], p[ic]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= eps:
                continue
            blocked = False
            for j in remaining:
                if j in (ia, ib, ic):
                    continue
                # vertices coinciding with the ear corners do not block it
                if _point_in_triangle(p[j], a, b, c, eps) and not (
                        np.allclose(p[j], a) or np.allclose(p[j], c)):
                    blocked = True
                    break
            if blocked:
                continue
            tris.append((ia, ib, ic))
            del remaining[pos]
            clipped = True
            break
        if not clipped:
            raise TriangulationError("no ear found; polygon is not simple")
    tris.append(tuple(remaining))
    return np.array(tris, dtype=np.int64)


def triangle_points(triangles, degree):
    """Map the reference rule onto a stack of triangles.

    ``triangles`` has shape ``(..., 3, 2)``; returns points ``(..., nq, 2)``
    and weights ``(..., nq)`` using the absolute Jacobian.
    """
    ref, w = reference_triangle_rule(degree)
    t = np.asarray(triangles, dtype=float)
    a = t[..., 0, :]
    e1 = t[..., 1, :] - a
    e2 = t[..., 2, :] - a
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    pts = (a[..., None, :] + ref[:, 0, None] * e1[..., None, :]
           + ref[:, 1, None] * e2[..., None, :])
    wts = np.abs(det)[..., None] * w
    return pts, wts


def polygon_quadrature(polygon, degree: int, triangles=None) -> QuadratureRule:
    """Rule on a simple polygon exact for bivariate polynomials of ``degree``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    p = np.asarray(polygon, dtype=float)
    if triangles is None:
        triangles = triangulate_polygon(p)
    pts, wts = triangle_points(p[np.asarray(triangles)], degree)
    return QuadratureRule(pts.reshape(-1, 2), wts.ravel(), degree)
