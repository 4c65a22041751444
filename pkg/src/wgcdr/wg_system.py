"""Assembly and solution of the weak Galerkin convection-diffusion-reaction system.

The bilinear form on an element ``T`` is

    rho (grad_w u, grad_w v)_T + (div_w(b u), v0)_T
        + <(b.n)(u0 - u_b), v0 - v_b>_{outflow part of dT} + (c u0, v0)_T

with the convection term evaluated as ``-(b u0, grad v0)_T +
<(b.n) u_b, v0>_dT``, which equals ``(div_w(b u), v0)_T`` because
``v0`` lies in ``P_k`` and ``k <= r``.  Boundary edge unknowns are fixed to
``Q_b g`` and eliminated.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import project_edges
from .weak_operators import WgDiscretization, _eval_scalar, _eval_vector, single_block

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class CoercivityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExactSolution:
    u: Callable
    grad: Callable
    laplacian: Callable


def constant(value):
    """Scalar field returning ``value`` everywhere."""
    return lambda x, y: np.full(np.shape(x), float(value))


def constant_vector(bx, by):
    return lambda x, y: (np.full(np.shape(x), float(bx)), np.full(np.shape(x), float(by)))


@dataclass
class ModelProblem:
    """``-rho lap u + div(b u) + c u = f`` with ``u = g`` on the boundary.

    Fields are callables of coordinate arrays ``(x, y)``; ``b`` returns a
    pair ``(bx, by)``.  ``dirichlet=None`` means homogeneous data.
    """

    rho: float
    b: Callable
    div_b: Callable
    c: Callable
    f: Callable
    dirichlet: Callable | None = None
    exact: ExactSolution | None = None
    name: str = ""

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho!r}")

    @classmethod
    def manufactured(cls, rho, b, div_b, c, exact, dirichlet="exact", name=""):
        """Problem whose forcing is computed from an exact solution."""
        def f(x, y):
            gx, gy = exact.grad(x, y)
            bx, by = b(x, y)
            return (-rho * exact.laplacian(x, y) + bx * gx + by * gy
                    + (div_b(x, y) + c(x, y)) * exact.u(x, y))

        g = exact.u if dirichlet == "exact" else dirichlet
        return cls(rho, b, div_b, c, f, g, exact, name)

    def residual(self, x, y):
        """Pointwise ``f - (-rho lap u + div(b u) + c u)`` for the exact solution."""
        ex = self.exact
        gx, gy = ex.grad(x, y)
        bx, by = self.b(x, y)
        lhs = (-self.rho * ex.laplacian(x, y) + bx * gx + by * gy
               + (self.div_b(x, y) + self.c(x, y)) * ex.u(x, y))
        return self.f(x, y) - lhs

    def check_consistency(self, domain=(-1.0, 1.0, -1.0, 1.0), n=100, seed=0, rtol=1e-9):
        """Sample the forcing against the exact solution; True if consistent."""
        if self.exact is None:
            return True
        rng = np.random.default_rng(seed)
        x = rng.uniform(domain[0], domain[1], n)
        y = rng.uniform(domain[2], domain[3], n)
        res = np.abs(self.residual(x, y))
        scale = np.maximum(np.abs(self.f(x, y)), 1.0)
        return bool((res <= rtol * scale).all())


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet_values: np.ndarray
    disc: WgDiscretization
    problem: ModelProblem
    full_matrix: sp.csr_matrix = field(repr=False)
    assembly_seconds: float = 0.0

    @property
    def dofmap(self):
        return self.disc.dofmap

    @property
    def n_free(self):
        return self.dofmap.n_free


@dataclass
class WgSolution:
    """Coefficients over all dofs: unknowns first, then boundary edge data."""

    coefficients: np.ndarray
    disc: WgDiscretization
    residual: float = 0.0
    solve_seconds: float = 0.0

    @property
    def mesh(self):
        return self.disc.mesh

    @property
    def space(self):
        return self.disc.space

    def interior(self, element_id):
        nk = self.disc.dofmap.nk
        return self.coefficients[element_id * nk:(element_id + 1) * nk]

    def edge(self, edge_id):
        s = self.disc.dofmap.edge_start[edge_id]
        return self.coefficients[s:s + self.disc.dofmap.nb]


# -- local contributions ---------------------------------------------------------


def upwind_split(block, b):
    """``b.n`` at edge quadrature points and the outflow tag per point.

    Tags are ``+1`` where ``b.n > 0`` (outflow), ``-1`` where ``b.n < 0``
    and ``0`` on characteristic points, which the upwind term skips.
    """
    bn = (_eval_vector(b, block.xe) * block.normals[:, :, None, :]).sum(axis=-1)
    return bn, np.sign(bn).astype(np.int8)


def upwind_partition(mesh, element_id, local_edge, b, space):
    """Edge quadrature points of one element edge tagged by the sign of ``b.n``.

    Returns ``(points, weights, b_dot_n, tags)``.
    """
    blk = single_block(mesh, element_id, space)
    bn, tags = upwind_split(blk, b)
    return blk.xe[0, local_edge], blk.we[0, local_edge], bn[0, local_edge], tags[0, local_edge]


def block_local_matrices(block, problem, grad, convection="shortcut"):
    """Dense local matrices ``(nG, ndof, ndof)`` and load vectors ``(nG, ndof)``.

    ``convection="projected"`` forms ``div_w(b u)`` in ``P_r`` first and
    tests it against ``v0``; it must agree with the default shortcut.
    """
    nk, nr = block.nk, block.nr
    mass = block.mass()
    g = grad.reshape(len(block), 2, nr, block.ndof)
    mg = mass[:, None] @ g
    a = problem.rho * np.einsum("ecia,ecib->eab", g, mg)

    moments = block.divergence_moments(problem.b)
    if convection == "shortcut":
        conv = moments[:, :nk]
    elif convection == "projected":
        div = np.linalg.solve(mass, moments)
        conv = (mass @ div)[:, :nk]
    else:
        raise ValueError(f"unknown convection mode {convection!r}")
    a[:, :nk, :] += conv

    bn, _ = upwind_split(block, problem.b)
    wplus = block.we * np.maximum(bn, 0.0)
    a += np.einsum("enp,enpa,enpb->eab", wplus, block.jump, block.jump, optimize=True)

    cq = _eval_scalar(problem.c, block.xq)
    pk = block.psi_k
    a[:, :nk, :nk] += np.einsum("eq,eqa,eqb->eab", block.wq * cq, pk, pk)

    fq = _eval_scalar(problem.f, block.xq)
    load = np.zeros((len(block), block.ndof))
    load[:, :nk] = np.einsum("eq,eqa->ea", block.wq * fq, pk)
    return a, load


def local_matrix(mesh, element_id, problem, space, convection="shortcut"):
    """Local matrix and load vector of a single element."""
    blk = single_block(mesh, element_id, space)
    a, load = block_local_matrices(blk, problem, blk.weak_gradient(), convection)
    return a[0], load[0]


def _check_coercivity(disc, problem):
    worst = np.inf
    for blk in disc.blocks:
        val = _eval_scalar(problem.c, blk.xq) + 0.5 * _eval_scalar(problem.div_b, blk.xq)
        worst = min(worst, float(val.min()))
    if worst <= 0:
        warnings.warn(f"c + div(b)/2 reaches {worst:.3g} <= 0; the coercivity "
                      "assumption is violated", CoercivityWarning, stacklevel=3)
    return worst


def boundary_values(disc, g):
    """``Q_b g`` on every boundary edge, stacked in dof order."""
    dm = disc.dofmap
    out = np.zeros(dm.n_fixed)
    if g is None or not len(dm.boundary_edges):
        return out
    coef = project_edges(disc.mesh, dm.boundary_edges, g, disc.space.q)
    idx = (dm.edge_start[dm.boundary_edges] - dm.n_free)[:, None] + np.arange(dm.nb)
    out[idx] = coef
    return out


def assemble(mesh, problem, space, disc=None) -> GlobalSystem:
    """Global matrix over the unknowns with Dirichlet edges eliminated."""
    t0 = time.perf_counter()
    if disc is None:
        disc = WgDiscretization(mesh, space)
    elif disc.mesh is not mesh or disc.space != space:
        raise ValueError("discretization does not match the mesh and space")
    _check_coercivity(disc, problem)
    dm = disc.dofmap
    rows, cols, vals = [], [], []
    load = np.zeros(dm.n_total)
    for i, blk in enumerate(disc.blocks):
        a, f = block_local_matrices(blk, problem, disc.weak_gradient(i))
        dofs = disc.local_dofs(i)
        rows.append(np.broadcast_to(dofs[:, :, None], a.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], a.shape).ravel())
        vals.append(a.ravel())
        np.add.at(load, dofs.ravel(), f.ravel())
    full = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(dm.n_total, dm.n_total)).tocsr()
    full.sort_indices()
    nf = dm.n_free
    g = boundary_values(disc, problem.dirichlet)
    a_ff = full[:nf, :nf].tocsr()
    rhs = load[:nf] - full[:nf, nf:] @ g
    return GlobalSystem(a_ff, rhs, g, disc, problem, full, time.perf_counter() - t0)


# -- solvers ------------------------------------------------------------------------


def _factor_solve(matrix, rhs):
    try:
        lu = spla.splu(matrix.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if not np.isfinite(diag).all() or diag.min() <= 1e-300:
        piv = int(np.argmin(diag))
        raise SolverError(f"zero pivot at position {piv} "
                          f"(column {int(lu.perm_c[piv])})")
    return lu.solve(rhs)


@dataclass
class CondensedSystem:
    """Schur complement on the interior-edge unknowns."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior_inverse: sp.csr_matrix
    coupling: sp.csr_matrix
    interior_rhs: np.ndarray

    def recover(self, edge_values):
        """Interior unknowns from the edge unknowns."""
        return self.interior_inverse @ (self.interior_rhs - self.coupling @ edge_values)


def static_condense(system: GlobalSystem) -> CondensedSystem:
    dm = system.dofmap
    ni, nk = dm.n_interior, dm.nk
    a = system.matrix
    a_ii = a[:ni, :ni].tocoo()
    if ((a_ii.row // nk) != (a_ii.col // nk)).any():
        raise SolverError("interior unknowns couple across elements")
    blocks = np.zeros((ni // nk, nk, nk))
    np.add.at(blocks, (a_ii.row // nk, a_ii.row % nk, a_ii.col % nk), a_ii.data)
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular interior block") from exc
    idx = np.arange(ni).reshape(-1, nk)
    rr = np.broadcast_to(idx[:, :, None], inv.shape).ravel()
    cc = np.broadcast_to(idx[:, None, :], inv.shape).ravel()
    b_inv = sp.csr_matrix((inv.ravel(), (rr, cc)), shape=(ni, ni))
    a_ie = a[:ni, ni:].tocsr()
    a_ei = a[ni:, :ni].tocsr()
    a_ee = a[ni:, ni:].tocsr()
    schur = (a_ee - a_ei @ (b_inv @ a_ie)).tocsr()
    f_i, f_e = system.rhs[:ni], system.rhs[ni:]
    rhs = f_e - a_ei @ (b_inv @ f_i)
    return CondensedSystem(schur, rhs, b_inv, a_ie, f_i)


def solve(system: GlobalSystem, method="direct", rtol=1e-10) -> WgSolution:
    """Solve the assembled system and append the Dirichlet data.

    ``method`` is ``"direct"`` (sparse LU of the full system) or
    ``"condensed"`` (LU of the edge Schur complement plus recovery).
    Raises :class:`SolverError` if the relative residual exceeds ``rtol``.
    """
    t0 = time.perf_counter()
    a, b = system.matrix, system.rhs
    if method == "direct":
        x = _factor_solve(a, b)
    elif method == "condensed":
        cs = static_condense(system)
        xe = _factor_solve(cs.matrix, cs.rhs) if cs.matrix.shape[0] else np.zeros(0)
        x = np.concatenate([cs.recover(xe), xe])
    else:
        raise ValueError(f"unknown solver method {method!r}")
    elapsed = time.perf_counter() - t0
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(a @ x - b)
    rel = res / bnorm if bnorm > 0 else res
    if not np.isfinite(rel) or rel > rtol:
        raise SolverError(f"relative residual {rel:.3e} exceeds {rtol:.1e}")
    logger.debug("solved %d unknowns (%s) in %.3fs, residual %.2e",
                 len(b), method, elapsed, rel)
    return WgSolution(np.concatenate([x, system.dirichlet_values]), system.disc,
                      float(rel), elapsed)
