"""Discrete weak gradient and weak divergence on polygonal elements.

Local degrees of freedom of an element ``T`` with ``N`` edges are ordered as
``[v0 (dim P_k) | v_b on edge 0 (q+1) | ... | v_b on edge N-1 (q+1)]``,
where ``v0`` uses the orthonormal basis of ``P_k(T)`` and ``v_b`` the
orthonormal Legendre basis of each edge in its *global* orientation.  Weak
operators are returned as coefficient matrices in the orthonormal basis of
``P_r(T)``; the gradient stacks the x and y components.

Work is batched: elements sharing vertex count and weak degree ``r`` are
processed together as an :class:`ElementBlock`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import (
    dim_p,
    edge_basis_values,
    orthonormal_coefficients,
    scaled_monomial_gradients,
    scaled_monomials,
)
from .quadrature import gauss_legendre_01, gauss_points_for, triangle_points, triangulate_polygon

_CHUNK = 2048


def _fan(n):
    return np.array([[0, j, j + 1] for j in range(1, n - 1)], dtype=np.int64)


def _triangulate_batch(polys, convex, h):
    if convex:
        return np.broadcast_to(_fan(polys.shape[1]), (len(polys), polys.shape[1] - 2, 3))
    # congruent elements share a triangulation
    cache = {}
    out = np.empty((len(polys), polys.shape[1] - 2, 3), dtype=np.int64)
    for i, p in enumerate(polys):
        key = np.round((p - p[0]) / h[i], 10).tobytes()
        tri = cache.get(key)
        if tri is None:
            tri = cache[key] = triangulate_polygon(p)
        out[i] = tri
    return out


class ElementBlock:
    """Quadrature and basis tables for a batch of like elements.

    Attributes (``nG`` elements, ``N`` edges, ``nq``/``ne`` volume/edge points)
    -------------------------------------------------------------------------
    xq, wq : (nG, nq, 2), (nG, nq)
    psi, dpsi : (nG, nq, nr), (nG, nq, nr, 2)   orthonormal P_r basis
    xe, we : (nG, N, ne, 2), (nG, N, ne)
    normals, lengths : (nG, N, 2), (nG, N)
    psi_e : (nG, N, ne, nr)
    chi : (nG, N, ne, q+1)   edge basis at the element's edge points
    jump : (nG, N, ne, ndof)  v0 - v_b at edge points for each local dof
    """

    def __init__(self, mesh, space, ids, r, convex, quad_extra=0):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.k, self.q, self.r = space.k, space.q, int(r)
        self.convex = bool(convex)
        conn = np.stack([mesh.elements[i] for i in self.ids])
        self.n_edges = n = conn.shape[1]
        self.nk, self.nr, self.nb = dim_p(self.k), dim_p(self.r), self.q + 1
        self.ndof = self.nk + n * self.nb
        polys = mesh.vertices[conn]
        self.center = mesh.element_centroid[self.ids]
        self.h = mesh.element_diameter[self.ids]
        self.area = mesh.element_area[self.ids]
        self.edge_ids = np.stack([mesh.element_edges[i] for i in self.ids])
        self.edge_signs = np.stack([mesh.element_edge_signs[i] for i in self.ids])

        vol_deg = space.element_quadrature_degree(self.r) + quad_extra
        tris = _triangulate_batch(polys, self.convex, self.h)
        corners = polys[np.arange(len(polys))[:, None, None], tris]
        xq, wq = triangle_points(corners, vol_deg)
        self.xq = xq.reshape(len(polys), -1, 2)
        self.wq = wq.reshape(len(polys), -1)

        c, hh = self.center[:, None, :], self.h[:, None]
        mono = scaled_monomials(self.xq, c, hh, self.r)
        mass = np.einsum("eq,eqi,eqj->eij", self.wq, mono, mono)
        self.coefficients = orthonormal_coefficients(mass)
        self.psi = mono @ np.swapaxes(self.coefficients, -1, -2)
        dmono = scaled_monomial_gradients(self.xq, c, hh, self.r)
        self.dpsi = np.einsum("eij,eqjc->eqic", self.coefficients, dmono)

        p0 = polys
        d = np.roll(polys, -1, axis=1) - p0
        self.lengths = np.hypot(d[..., 0], d[..., 1])
        self.normals = np.stack([d[..., 1], -d[..., 0]], axis=-1) / self.lengths[..., None]
        edge_deg = space.edge_quadrature_degree(self.r) + quad_extra
        s, ws = gauss_legendre_01(gauss_points_for(edge_deg))
        self.xe = p0[:, :, None, :] + s[:, None] * d[:, :, None, :]
        self.we = ws * self.lengths[..., None]
        mono_e = scaled_monomials(self.xe, c[:, None], hh[:, None], self.r)
        self.psi_e = np.einsum("eij,enpj->enpi", self.coefficients, mono_e)
        t_global = self.edge_signs[..., None] * (2.0 * s - 1.0)
        self.chi = edge_basis_values(t_global, self.lengths, self.q)

        jump = np.zeros(self.we.shape + (self.ndof,))
        jump[..., :self.nk] = self.psi_e[..., :self.nk]
        for j in range(n):
            sl = slice(self.nk + j * self.nb, self.nk + (j + 1) * self.nb)
            jump[:, j, :, sl] = -self.chi[:, j]
        self.jump = jump

    def __len__(self):
        return len(self.ids)

    @property
    def psi_k(self):
        return self.psi[..., :self.nk]

    @property
    def dpsi_k(self):
        return self.dpsi[..., :self.nk, :]

    def mass(self):
        """Quadrature mass matrices of the P_r basis (identity up to rounding)."""
        return np.einsum("eq,eqi,eqj->eij", self.wq, self.psi, self.psi)

    def edge_values(self, v_local):
        """v0 - v_b at edge points from local dof vectors ``(nG, ndof[, m])``."""
        return np.einsum("enpa,ea...->enp...", self.jump, v_local)

    # -- weak operator right-hand sides ------------------------------------

    def gradient_moments(self, form="primal"):
        """Right-hand side of the weak-gradient system, ``(nG, 2, nr, ndof)``.

        ``form="primal"`` tests ``v0`` against ``div(phi)``;
        ``form="ibp"`` uses the integrated-by-parts form with ``grad(v0)``
        and the jump ``v_b - v0`` on the boundary.
        """
        w, we, nrm = self.wq, self.we, self.normals
        edge = np.einsum("enp,enpm,enpi,enc->ecinm", we, self.chi, self.psi_e, nrm)
        edge = edge.reshape(edge.shape[:3] + (-1,))
        if form == "primal":
            vol = -np.einsum("eq,eqa,eqic->ecia", w, self.psi_k, self.dpsi)
        elif form == "ibp":
            vol = (np.einsum("eq,eqac,eqi->ecia", w, self.dpsi_k, self.psi)
                   - np.einsum("enp,enpa,enpi,enc->ecia", we, self.psi_e[..., :self.nk],
                               self.psi_e, nrm))
        else:
            raise ValueError(f"unknown form {form!r}")
        return np.concatenate([vol, edge], axis=-1)

    def divergence_moments(self, b, div_b=None, form="primal"):
        """Right-hand side of the weak-divergence system, ``(nG, nr, ndof)``."""
        bq = _eval_vector(b, self.xq)
        bn = (_eval_vector(b, self.xe) * self.normals[:, :, None, :]).sum(axis=-1)
        edge = np.einsum("enp,enp,enpm,enpi->einm", self.we, bn, self.chi, self.psi_e)
        edge = edge.reshape(edge.shape[:2] + (-1,))
        if form == "primal":
            vol = -np.einsum("eq,eqa,eqic,eqc->eia", self.wq, self.psi_k, self.dpsi, bq)
        elif form == "ibp":
            if div_b is None:
                raise ValueError("the integrated-by-parts form needs div_b")
            dq = _eval_scalar(div_b, self.xq)
            flux = dq[..., None] * self.psi_k + np.einsum("eqac,eqc->eqa", self.dpsi_k, bq)
            vol = (np.einsum("eq,eqa,eqi->eia", self.wq, flux, self.psi)
                   - np.einsum("enp,enp,enpa,enpi->eia", self.we, bn,
                               self.psi_e[..., :self.nk], self.psi_e))
        else:
            raise ValueError(f"unknown form {form!r}")
        return np.concatenate([vol, edge], axis=-1)

    def weak_gradient(self, form="primal"):
        """Weak gradient matrices ``(nG, 2 nr, ndof)``."""
        rhs = self.gradient_moments(form)
        g = np.linalg.solve(self.mass()[:, None], rhs)
        return g.reshape(len(self), 2 * self.nr, self.ndof)

    def weak_divergence(self, b, div_b=None, form="primal"):
        return np.linalg.solve(self.mass(), self.divergence_moments(b, div_b, form))


def _eval_scalar(fn, pts):
    val = np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=float)
    return np.broadcast_to(val, pts.shape[:-1])


def _eval_vector(fn, pts):
    bx, by = fn(pts[..., 0], pts[..., 1])
    shape = pts.shape[:-1]
    return np.stack([np.broadcast_to(np.asarray(bx, dtype=float), shape),
                     np.broadcast_to(np.asarray(by, dtype=float), shape)], axis=-1)


class DofMap:
    """Global numbering: element interiors, then interior edges, then boundary edges.

    Indices below ``n_free`` are unknowns; the rest hold Dirichlet data.
    """

    def __init__(self, mesh, space):
        self.nk, self.nb = space.dim_interior, space.dim_edge
        self.n_interior = mesh.n_elements * self.nk
        interior, boundary = mesh.interior_edge_ids, mesh.boundary_edge_ids
        start = np.empty(mesh.n_edges, dtype=np.int64)
        start[interior] = self.n_interior + np.arange(len(interior)) * self.nb
        self.n_free = self.n_interior + len(interior) * self.nb
        start[boundary] = self.n_free + np.arange(len(boundary)) * self.nb
        self.n_total = self.n_free + len(boundary) * self.nb
        self.edge_start = start
        self.interior_edges, self.boundary_edges = interior, boundary

    @property
    def n_fixed(self):
        return self.n_total - self.n_free

    def element_dofs(self, element_ids):
        return np.asarray(element_ids)[:, None] * self.nk + np.arange(self.nk)

    def edge_dofs(self, edge_ids):
        return self.edge_start[edge_ids][..., None] + np.arange(self.nb)

    def local_dofs(self, block):
        inner = self.element_dofs(block.ids)
        edge = self.edge_dofs(block.edge_ids).reshape(len(block), -1)
        return np.concatenate([inner, edge], axis=1)


class WgDiscretization:
    """Mesh, space, dof map and element blocks, with cached weak gradients."""

    def __init__(self, mesh, space, chunk=_CHUNK):
        self.mesh, self.space = mesh, space
        self.dofmap = DofMap(mesh, space)
        convex = mesh.element_convex()
        self.blocks = []
        for n, ids in mesh.groups_by_size().items():
            for flag in (True, False):
                sel = ids[convex[ids] == flag]
                if not len(sel):
                    continue
                r = space.weak_degree(n, flag)
                for s in range(0, len(sel), chunk):
                    self.blocks.append(ElementBlock(mesh, space, sel[s:s + chunk], r, flag))
        self._grad = [None] * len(self.blocks)
        self._dofs = [self.dofmap.local_dofs(b) for b in self.blocks]

    def local_dofs(self, i):
        return self._dofs[i]

    def weak_gradient(self, i):
        if self._grad[i] is None:
            self._grad[i] = self.blocks[i].weak_gradient()
        return self._grad[i]

    def gather(self, i, v):
        """Local dof values ``(nG, ndof[, m])`` from a global vector."""
        return np.asarray(v)[self._dofs[i]]

    def locate(self, element_id):
        """(block index, row) of an element."""
        for bi, blk in enumerate(self.blocks):
            hit = np.flatnonzero(blk.ids == element_id)
            if len(hit):
                return bi, int(hit[0])
        raise IndexError(f"element id {element_id} out of range")


def single_block(mesh, element_id, space, quad_extra=0):
    if not 0 <= element_id < mesh.n_elements:
        raise IndexError(f"element id {element_id} out of range 0..{mesh.n_elements - 1}")
    poly = mesh.polygon(element_id)
    convex = bool(mesh.element_convex()[element_id])
    r = space.weak_degree(len(poly), convex)
    return ElementBlock(mesh, space, [element_id], r, convex, quad_extra)


@dataclass
class LocalWeakOps:
    element_id: int
    grad_matrix: np.ndarray
    div_matrix: np.ndarray | None
    n_local_dofs: int
    r: int
    grad_residual: float
    div_residual: float | None


def weak_gradient(mesh, element_id, space, form="primal"):
    """``(2 dim P_r, n_local_dofs)`` matrix acting on local WG dofs."""
    return single_block(mesh, element_id, space).weak_gradient(form)[0]


def weak_divergence(mesh, element_id, space, b, div_b=None, form="primal"):
    """``(dim P_r, n_local_dofs)`` matrix realising ``v -> div_w(b v)``."""
    return single_block(mesh, element_id, space).weak_divergence(b, div_b, form)[0]


def local_weak_ops(mesh, element_id, space, b=None):
    blk = single_block(mesh, element_id, space)
    mass = blk.mass()[0]
    g_rhs = blk.gradient_moments()[0]
    grad = np.linalg.solve(mass, g_rhs)
    g_res = np.abs(mass @ grad - g_rhs).max() / max(np.abs(g_rhs).max(), 1e-300)
    div = d_res = None
    if b is not None:
        d_rhs = blk.divergence_moments(b)[0]
        div = np.linalg.solve(mass, d_rhs)
        d_res = np.abs(mass @ div - d_rhs).max() / max(np.abs(d_rhs).max(), 1e-300)
    return LocalWeakOps(element_id, grad.reshape(2 * blk.nr, blk.ndof), div, blk.ndof,
                        blk.r, float(g_res), None if d_res is None else float(d_res))


def commutation_residuals(block, u, grad_u):
    """``||grad_w u - Q_r grad u||_T`` and ``||grad u||_T`` for every element.

    The weak function is ``{u|_T, u|_dT}`` with the exact trace sampled at
    edge quadrature points.
    """
    uq = _eval_scalar(u, block.xq)
    ue = _eval_scalar(u, block.xe)
    gq = _eval_vector(grad_u, block.xq)
    rhs = (-np.einsum("eq,eq,eqic->eci", block.wq, uq, block.dpsi)
           + np.einsum("enp,enp,enpi,enc->eci", block.we, ue, block.psi_e, block.normals))
    proj = np.einsum("eq,eqc,eqi->eci", block.wq, gq, block.psi)
    mass = block.mass()
    diff = np.linalg.solve(mass[:, None], (rhs - proj)[..., None])[..., 0]
    res = np.sqrt(np.maximum(np.einsum("eci,eij,ecj->e", diff, mass, diff), 0.0))
    norm = np.sqrt(np.einsum("eq,eqc,eqc->e", block.wq, gq, gq))
    return res, norm


def check_commutation(mesh, element_id, space, u, grad_u, quad_extra=12) -> float:
    """``||grad_w u - Q_r grad u||_T`` on one element.

    ``quad_extra`` raises the rule degrees so that non-polynomial ``u`` is
    integrated well below the identity's tolerance; it has no effect on
    polynomial data beyond rounding.
    """
    blk = single_block(mesh, element_id, space, quad_extra)
    res, _ = commutation_residuals(blk, u, grad_u)
    return float(res[0])
