"""Discrete norms, projection errors and convergence orders."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import project_edges
from .weak_operators import _eval_scalar, _eval_vector


class CoercivityError(ValueError):
    """The energy quadratic form is negative on some element."""


def _as_columns(v):
    v = np.asarray(v, dtype=float)
    return (v[:, None], True) if v.ndim == 1 else (v, False)


def _flux_weights(block, problem):
    bn = (_eval_vector(problem.b, block.xe) * block.normals[:, :, None, :]).sum(axis=-1)
    react = _eval_scalar(problem.c, block.xq) + 0.5 * _eval_scalar(problem.div_b, block.xq)
    return 0.5 * block.we * np.abs(bn), block.wq * react


def _element_terms(disc, problem, v, weak=True):
    """Per-element (gradient, jump, reaction, scaled jump) contributions."""
    cols, _ = _as_columns(v)
    out = []
    for i, blk in enumerate(disc.blocks):
        vl = disc.gather(i, cols)
        if weak:
            g = np.einsum("ead,edm->eam", disc.weak_gradient(i), vl)
            g = g.reshape(len(blk), 2, blk.nr, -1)
            grad = np.einsum("ecim,eij,ecjm->em", g, blk.mass(), g)
        else:
            dv0 = np.einsum("eqac,eam->eqcm", blk.dpsi_k, vl[:, :blk.nk])
            grad = np.einsum("eq,eqcm->em", blk.wq, dv0 ** 2)
        jumps = blk.edge_values(vl)
        wj, wr = _flux_weights(blk, problem)
        jump = np.einsum("enp,enpm->em", wj, jumps ** 2)
        v0 = np.einsum("eqa,eam->eqm", blk.psi_k, vl[:, :blk.nk])
        react = np.einsum("eq,eqm->em", wr, v0 ** 2)
        scaled = np.einsum("enp,enpm->em", blk.we / blk.h[:, None, None], jumps ** 2)
        out.append((blk.ids, grad, jump, react, scaled))
    return out


def _combine(terms, rho, use_scaled, squeeze):
    total = 0.0
    for ids, grad, jump, react, scaled in terms:
        local = rho * grad + jump + react + (scaled if use_scaled else 0.0)
        scale = rho * grad + jump + np.abs(react) + (scaled if use_scaled else 0.0)
        bad = local < -1e-12 * np.maximum(scale, 1e-300)
        if bad.any():
            e = int(ids[np.argwhere(bad)[0][0]])
            raise CoercivityError(f"negative energy contribution on element {e}; "
                                  "c + div(b)/2 must be non-negative")
        total = total + local.sum(axis=0)
    total = np.sqrt(np.maximum(total, 0.0))
    return float(total[0]) if squeeze else total


def energy_norm(v, disc, problem):
    """Energy norm of a global coefficient vector (or of each column).

    Sum over elements of ``rho ||grad_w v||^2 + 1/2 int_dT |b.n| (v0 - v_b)^2
    + ((c + div(b)/2) v0, v0)``.
    """
    _, squeeze = _as_columns(v)
    return _combine(_element_terms(disc, problem, v), problem.rho, False, squeeze)


def h1_seminorm(v, disc, problem):
    """Discrete H1 norm: ``grad v0`` in place of ``grad_w v`` plus ``h_T^-1 ||v0 - v_b||^2``."""
    _, squeeze = _as_columns(v)
    return _combine(_element_terms(disc, problem, v, weak=False), problem.rho, True, squeeze)


def project_exact(u, disc):
    """``Q_h u`` in the global dof layout (boundary edges included)."""
    dm = disc.dofmap
    out = np.zeros(dm.n_total)
    for i, blk in enumerate(disc.blocks):
        uq = _eval_scalar(u, blk.xq)
        moments = np.einsum("eq,eq,eqa->ea", blk.wq, uq, blk.psi_k)
        mass = blk.mass()[:, :blk.nk, :blk.nk]
        out[dm.element_dofs(blk.ids)] = np.linalg.solve(mass, moments[..., None])[..., 0]
    mesh = disc.mesh
    eids = np.arange(mesh.n_edges)
    out[dm.edge_dofs(eids)] = project_edges(mesh, eids, u, disc.space.q)
    return out


def interior_l2(v, disc):
    """``(sum_T ||v0||_T^2)^(1/2)`` of a global coefficient vector."""
    total = 0.0
    for i, blk in enumerate(disc.blocks):
        v0 = disc.gather(i, v)[:, :blk.nk]
        mass = blk.mass()[:, :blk.nk, :blk.nk]
        total += float(np.einsum("ea,eab,eb->", v0, mass, v0))
    return math.sqrt(max(total, 0.0))


def weak_gradient_l2(v, disc):
    total = 0.0
    for i, blk in enumerate(disc.blocks):
        g = np.einsum("ead,ed->ea", disc.weak_gradient(i), disc.gather(i, v))
        g = g.reshape(len(blk), 2, blk.nr)
        total += float(np.einsum("eci,eij,ecj->", g, blk.mass(), g))
    return math.sqrt(max(total, 0.0))


def true_l2_error(solution, u):
    """``||u - u0||`` by quadrature (not a table metric)."""
    disc = solution.disc
    total = 0.0
    for i, blk in enumerate(disc.blocks):
        v0 = disc.gather(i, solution.coefficients)[:, :blk.nk]
        diff = _eval_scalar(u, blk.xq) - np.einsum("eqa,ea->eq", blk.psi_k, v0)
        total += float(np.einsum("eq,eq->", blk.wq, diff ** 2))
    return math.sqrt(total)


@dataclass
class ErrorReport:
    l2_error: float
    grad_error: float
    energy_error: float
    h: float
    n_dofs: int
    n_elements: int
    solve_seconds: float = 0.0
    residual: float = 0.0


def table_errors(solution, problem, u=None) -> ErrorReport:
    """Errors of ``Q_h u - u_h``: interior L2, ``sqrt(rho) ||grad_w .||`` and energy."""
    disc = solution.disc
    u = problem.exact.u if u is None else u
    e = project_exact(u, disc) - solution.coefficients
    return ErrorReport(
        l2_error=interior_l2(e, disc),
        grad_error=math.sqrt(problem.rho) * weak_gradient_l2(e, disc),
        energy_error=energy_norm(e, disc, problem),
        h=disc.mesh.mesh_size,
        n_dofs=disc.dofmap.n_free,
        n_elements=disc.mesh.n_elements,
        solve_seconds=solution.solve_seconds,
        residual=solution.residual,
    )


def convergence_orders(errors, h=None):
    """Observed orders between consecutive entries.

    ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` (``log2`` of the error ratio
    when ``h`` is omitted, i.e. for halving meshes).  Entries with a zero,
    negative or non-finite error give ``None``.
    """
    errors = [float(e) for e in errors]
    out = []
    for i in range(len(errors) - 1):
        a, b = errors[i], errors[i + 1]
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            out.append(None)
            continue
        ratio = math.log(h[i] / h[i + 1]) if h is not None else math.log(2.0)
        out.append(math.log(a / b) / ratio)
    return out


def format_order(order) -> str:
    return "---" if order is None else f"{order:.1f}"


def format_error(value) -> str:
    """Fortran-style ``0.164E-02`` formatting."""
    if value == 0 or not math.isfinite(value):
        return f"{0.0:.3f}E+00" if value == 0 else str(value)
    exp = math.floor(math.log10(abs(value))) + 1
    mant = value / 10.0 ** exp
    if round(abs(mant), 3) >= 1.0:
        mant /= 10.0
        exp += 1
    return f"{mant:.3f}E{exp:+03d}"
