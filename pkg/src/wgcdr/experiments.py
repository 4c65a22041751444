"""Convergence studies, exact-solution catalog and plot-data sampling.

Configs are flat ``key = value`` text, one entry per line, lists separated
by commas and ``#`` starting a comment::

    family = triangular
    levels = 5, 6, 7
    k = 1
    rho = 1, 1e-6
    solution = u1
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .basis import WgSpace, edge_basis_values, scaled_monomials
from .error_analysis import (
    convergence_orders,
    energy_norm,
    format_error,
    format_order,
    project_exact,
    table_errors,
)
from .mesh import FAMILIES, MeshFamily, generate_mesh
from .quadrature import triangulate_polygon
from .weak_operators import WgDiscretization, commutation_residuals
from .wg_system import (
    ExactSolution,
    ModelProblem,
    WgSolution,
    assemble,
    constant,
    constant_vector,
    solve,
)

logger = logging.getLogger(__name__)

MAX_DEGREE = 6
SOLUTIONS = ("u1", "u2")
CSV_COLUMNS = ("family", "level", "h", "k", "q", "r", "rho", "dofs", "l2_err", "l2_order",
               "grad_err", "grad_order", "energy_err", "solve_ms")


class ConfigError(ValueError):
    pass


# -- exact solutions ------------------------------------------------------------


def u1_solution() -> ExactSolution:
    """``sin(pi x) sin(pi y)``."""
    pi = math.pi

    def u(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def grad(x, y):
        return (pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y))

    def lap(x, y):
        return -2.0 * pi ** 2 * u(x, y)

    return ExactSolution(u, grad, lap)


def _layer_factors(t, rho):
    """``s, s', s'', E, E', rho E'`` along one axis of the boundary-layer solution."""
    a = 0.5 * math.pi
    s, ds, d2s = np.sin(a * t), a * np.cos(a * t), -a * a * np.sin(a * t)
    ex = np.exp((t - 1.0) / rho)
    e = -np.expm1((t - 1.0) / rho)
    return s, ds, d2s, e, -ex / rho, -ex


def u2_solution(rho: float) -> ExactSolution:
    """``s(x) s(y) E(x) E(y)`` with ``s = sin(pi t / 2)`` and ``E = 1 - exp((t - 1) / rho)``."""

    def u(x, y):
        sx, _, _, ex, _, _ = _layer_factors(x, rho)
        sy, _, _, ey, _, _ = _layer_factors(y, rho)
        return sx * ex * sy * ey

    def grad(x, y):
        sx, dsx, _, ex, dex, _ = _layer_factors(x, rho)
        sy, dsy, _, ey, dey, _ = _layer_factors(y, rho)
        return (dsx * ex + sx * dex) * sy * ey, sx * ex * (dsy * ey + sy * dey)

    def lap(x, y):
        sx, dsx, d2sx, ex, dex, _ = _layer_factors(x, rho)
        sy, dsy, d2sy, ey, dey, _ = _layer_factors(y, rho)
        # E'' = E' / rho
        xx = d2sx * ex + 2.0 * dsx * dex + sx * dex / rho
        yy = d2sy * ey + 2.0 * dsy * dey + sy * dey / rho
        return xx * sy * ey + sx * ex * yy

    return ExactSolution(u, grad, lap)


def _u2_forcing(rho, b, c):
    """Forcing of the boundary-layer solution for a constant ``b`` and ``c``.

    Written with ``rho E'' = E'`` so that the ``O(1/rho)`` parts cancel
    symbolically instead of in floating point.
    """
    b1, b2 = b

    def axis(t, b_t):
        s, ds, d2s, e, de, rde = _layer_factors(t, rho)
        return s * e, -rho * d2s * e - 2.0 * ds * rde + b_t * ds * e + (b_t - 1.0) * s * de

    def f(x, y):
        px, lx = axis(x, b1)
        py, ly = axis(y, b2)
        return lx * py + px * ly + c * px * py

    return f


def benchmark_problem(solution_id: str, rho: float, b=(1.0, 1.0), c=1.0) -> ModelProblem:
    """Test problem with constant ``b`` and ``c``.

    ``u1`` has homogeneous Dirichlet data; ``u2`` uses ``g = u2`` on the
    boundary, where it does not vanish for every ``rho``.
    """
    bf, divb, cf = constant_vector(*b), constant(0.0), constant(c)
    if solution_id == "u1":
        return ModelProblem.manufactured(rho, bf, divb, cf, u1_solution(), dirichlet=None,
                                         name="u1")
    if solution_id == "u2":
        ex = u2_solution(rho)
        return ModelProblem(rho, bf, divb, cf, _u2_forcing(rho, b, c), ex.u, ex, name="u2")
    raise ConfigError(f"unknown solution {solution_id!r}; expected one of {SOLUTIONS}")


# -- configuration ---------------------------------------------------------------


@dataclass
class ExperimentConfig:
    family: str = "triangular"
    levels: tuple = (5, 6, 7)
    k: int = 1
    q: int | None = None
    r: int | str | None = None
    rho: tuple = (1.0,)
    solution: str = "u1"
    b: tuple = (1.0, 1.0)
    c: float = 1.0
    solver: str = "direct"
    threads: int = 1
    timings: bool = True
    csv: str = "convergence.csv"
    table: str = "convergence.md"
    plot: str = "solution.dat"
    resolution: int = 4

    def __post_init__(self):
        self.levels = tuple(int(v) for v in self.levels)
        self.rho = tuple(float(v) for v in self.rho)
        self.b = tuple(float(v) for v in self.b)
        self.validate()

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if any(lv < 1 for lv in self.levels):
            raise ConfigError("levels must be positive")
        if list(self.levels) != sorted(set(self.levels)):
            raise ConfigError(f"levels must be strictly ascending, got {list(self.levels)}")
        if not 0 <= self.k <= MAX_DEGREE:
            raise ConfigError(f"k must lie in 0..{MAX_DEGREE}, got {self.k}")
        if self.q is not None and not 0 <= self.q <= self.k:
            raise ConfigError(f"q must lie in 0..k, got {self.q}")
        if isinstance(self.r, int) and self.r < self.k:
            raise ConfigError(f"r must be at least k, got {self.r}")
        if not self.rho or any(not v > 0 for v in self.rho):
            raise ConfigError("rho values must be positive")
        if self.solution not in SOLUTIONS:
            raise ConfigError(f"unknown solution {self.solution!r}; expected one of {SOLUTIONS}")
        if len(self.b) != 2:
            raise ConfigError("b needs two components")
        if self.solver not in ("direct", "condensed"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.threads < 1 or self.resolution < 1:
            raise ConfigError("threads and resolution must be positive")

    @property
    def space(self) -> WgSpace:
        return WgSpace(self.k, self.q, self.r)


_ALIASES = {"rho_list": "rho", "solution_id": "solution", "grids": "levels"}
_LISTS = {"levels", "rho", "b"}


def _convert(key, raw):
    if key in _LISTS:
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(int(s) for s in items) if key == "levels" else tuple(float(s) for s in items)
    if key in ("k", "threads", "resolution"):
        return int(raw)
    if key == "q":
        return None if raw.lower() in ("", "none", "default") else int(raw)
    if key == "r":
        low = raw.lower()
        if low in ("", "none", "default"):
            return None
        return "theory" if low == "theory" else int(raw)
    if key == "c":
        return float(raw)
    if key == "timings":
        if raw.lower() not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("true", "yes", "1")
    return raw


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Build a config from ``key = value`` lines; keyword overrides win."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)


# -- studies ----------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    family: str
    level: int
    rho: float
    k: int
    q: int
    r: str = ""
    h: float = math.nan
    dofs: int = 0
    l2_err: float = math.nan
    grad_err: float = math.nan
    energy_err: float = math.nan
    residual: float = math.nan
    solve_ms: float = math.nan
    l2_order: float | None = None
    grad_order: float | None = None
    reason: str | None = None

    @property
    def ok(self):
        return self.reason is None


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)

    def block(self, rho):
        return [row for row in self.rows if row.rho == rho]

    def orders(self, rho, column="l2"):
        return [getattr(row, f"{column}_order") for row in self.block(rho)[1:]]

    @property
    def failures(self):
        return [row for row in self.rows if not row.ok]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            def num(v):
                return "" if v is None else repr(float(v))
            w.writerow([row.family, row.level, num(row.h), row.k, row.q, row.r, repr(row.rho),
                        row.dofs, num(row.l2_err), num(row.l2_order), num(row.grad_err),
                        num(row.grad_order), num(row.energy_err),
                        num(row.solve_ms) if self.config.timings else "0"])
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = ("G_i", "‖Q_h u − u_h‖", "order", "√ρ‖∇_w(Q_h u − u_h)‖", "order")
        c = self.config
        out = [f"# {c.solution}, {c.family} grids, k={c.k}, q={c.space.q}, r={c.r or 'default'}",
               ""]
        for rho in c.rho:
            body = []
            for row in self.block(rho):
                if row.ok:
                    body.append((f"G{row.level}", format_error(row.l2_err),
                                 format_order(row.l2_order), format_error(row.grad_err),
                                 format_order(row.grad_order)))
                else:
                    body.append((f"G{row.level}", "failed", "---", "failed", "---"))
            width = [max(len(r[j]) for r in [head] + body) for j in range(len(head))]

            def line(cells):
                return "| " + " | ".join(s.ljust(w) for s, w in zip(cells, width)) + " |"

            out += [f"ρ = {rho:g}", "", line(head),
                    "|" + "|".join("-" * (w + 2) for w in width) + "|"]
            out += [line(r) for r in body] + [""]
        for row in self.failures:
            out.append(f"- G{row.level}, ρ = {row.rho:g}: {row.reason}")
        return "\n".join(out).rstrip() + "\n"


def _weak_degrees(disc):
    rs = sorted({blk.r for blk in disc.blocks})
    return "/".join(str(r) for r in rs)


def solve_case(config: ExperimentConfig, level: int, rho: float):
    """Mesh, assemble and solve one (level, rho) pair."""
    mesh = generate_mesh(MeshFamily(config.family, level))
    problem = benchmark_problem(config.solution, rho, config.b, config.c)
    disc = WgDiscretization(mesh, config.space)
    system = assemble(mesh, problem, config.space, disc)
    return solve(system, method=config.solver), problem


def _run_row(config, level, rho):
    space = config.space
    row = ConvergenceRow(config.family, level, rho, space.k, space.q)
    try:
        solution, problem = solve_case(config, level, rho)
        rep = table_errors(solution, problem)
    except Exception as exc:  # a failed row must not stop the study
        row.reason = f"{type(exc).__name__}: {exc}"
        logger.warning("row G%d rho=%g failed: %s", level, rho, row.reason)
        return row
    row.r = _weak_degrees(solution.disc)
    row.h, row.dofs = rep.h, rep.n_dofs
    row.l2_err, row.grad_err, row.energy_err = rep.l2_error, rep.grad_error, rep.energy_error
    row.residual, row.solve_ms = rep.residual, 1e3 * rep.solve_seconds
    return row


def _fill_orders(rows):
    for prev, cur in zip(rows, rows[1:]):
        if prev.ok and cur.ok:
            cur.l2_order = convergence_orders([prev.l2_err, cur.l2_err])[0]
            cur.grad_order = convergence_orders([prev.grad_err, cur.grad_err])[0]


def _atomic_write(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def run(config: ExperimentConfig, out_dir=None, write=True) -> ConvergenceReport:
    """Run every (rho, level) pair of ``config`` and write CSV and markdown tables.

    Rows may run on ``config.threads`` workers; results are collected and
    written in config order once all rows are finished.  Output paths are
    taken relative to ``out_dir`` when given.
    """
    report = ConvergenceReport(config)
    if not config.levels:
        warnings.warn("no levels configured; nothing to run", UserWarning, stacklevel=2)
        return report
    tasks = [(level, rho) for rho in config.rho for level in config.levels]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(lambda t: _run_row(config, *t), tasks))
    else:
        rows = [_run_row(config, *t) for t in tasks]
    report.rows = rows
    for rho in config.rho:
        _fill_orders(report.block(rho))
    if write:
        base = out_dir if out_dir is not None else "."
        _atomic_write(os.path.join(base, config.csv), report.to_csv())
        _atomic_write(os.path.join(base, config.table), report.to_markdown())
    return report


# -- plot data ----------------------------------------------------------------------


@dataclass
class SampleData:
    """``u0`` rasters per element and ``u_b`` samples per edge.

    ``elements[i]`` and ``edges[e]`` are ``(m, 3)`` arrays of ``x y z`` rows.
    """

    elements: list
    edges: list

    @property
    def max_abs_interior(self):
        return max((float(np.abs(a[:, 2]).max()) for a in self.elements), default=0.0)


def _lattice(resolution):
    n = resolution
    return np.array([(i / n, j / n) for i in range(n + 1) for j in range(n + 1 - i)])


def sample_solution(solution: WgSolution, resolution: int = 4) -> SampleData:
    """Sample ``u0`` on a barycentric lattice of each element triangle and ``u_b`` along edges."""
    disc = solution.disc
    mesh, dm = disc.mesh, disc.dofmap
    lat = _lattice(resolution)
    elements = [None] * mesh.n_elements
    for blk in disc.blocks:
        coef = blk.coefficients[:, :blk.nk, :]  # P_k rows of the orthonormal basis
        for row, e in enumerate(blk.ids):
            poly = mesh.polygon(e)
            tris = poly[triangulate_polygon(poly, check=False)]
            a = tris[:, 0]
            pts = (a[:, None] + lat[:, 0, None] * (tris[:, 1] - a)[:, None]
                   + lat[:, 1, None] * (tris[:, 2] - a)[:, None]).reshape(-1, 2)
            mono = scaled_monomials(pts, blk.center[row], blk.h[row], blk.r)
            vals = mono @ coef[row].T @ solution.interior(e)
            elements[e] = np.column_stack([pts, vals])
    t = np.linspace(-1.0, 1.0, resolution + 1)
    edges = []
    for eid in range(mesh.n_edges):
        i, j = mesh.edges[eid]
        p0, p1 = mesh.vertices[i], mesh.vertices[j]
        pts = p0 + 0.5 * (t[:, None] + 1.0) * (p1 - p0)
        vals = edge_basis_values(t, mesh.edge_length[eid], dm.nb - 1) @ solution.edge(eid)
        edges.append(np.column_stack([pts, vals]))
    return SampleData(elements, edges)


def format_plot_data(samples: SampleData) -> str:
    """``x y z`` blocks separated by blank lines: elements first, then edges."""
    out = ["# interior values u0, one block per element"]
    for block in samples.elements:
        out += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in block] + [""]
    out.append("# boundary values u_b, one block per edge")
    for block in samples.edges:
        out += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in block] + [""]
    return "\n".join(out)


def write_plot_data(samples: SampleData, path):
    _atomic_write(path, format_plot_data(samples))


# -- invariant probes -----------------------------------------------------------------


@dataclass
class ProbeResult:
    name: str
    value: float
    tolerance: float
    seconds: float = 0.0

    @property
    def passed(self):
        return bool(self.value <= self.tolerance)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: {self.value:.3e} <= {self.tolerance:.1e} ({self.seconds:.2f}s)"


def random_free_vectors(disc, n, rng):
    """``n`` random members of the space with zero boundary values, as columns."""
    dm = disc.dofmap
    v = np.zeros((dm.n_total, n))
    v[:dm.n_free] = rng.standard_normal((dm.n_free, n))
    return v


def coercivity_defect(system, vectors):
    """Worst ``|v^T A v - |||v|||^2| / |||v|||^2`` over the columns of ``vectors``."""
    nf = system.n_free
    quad = np.einsum("im,im->m", vectors[:nf], system.matrix @ vectors[:nf])
    energy = energy_norm(vectors, system.disc, system.problem) ** 2
    return float(np.max(np.abs(quad - energy) / energy))


def commutation_defect(mesh, space, u, grad_u):
    """Worst ``||grad_w u - Q_r grad u||_T / ||grad u||_T`` over the mesh."""
    disc = WgDiscretization(mesh, space)
    worst = 0.0
    for blk in disc.blocks:
        res, norm = commutation_residuals(blk, u, grad_u)
        worst = max(worst, float(np.max(res / np.maximum(norm, 1e-300))))
    return worst


def patch_solution() -> ExactSolution:
    """``(1 - x^2)(1 - y^2)``, reproduced exactly for ``k = q >= 4``."""
    return ExactSolution(
        lambda x, y: (1 - x ** 2) * (1 - y ** 2),
        lambda x, y: (-2 * x * (1 - y ** 2), -2 * y * (1 - x ** 2)),
        lambda x, y: -2 * (1 - y ** 2) - 2 * (1 - x ** 2),
    )


def patch_defect(mesh, space, rho=1.0, b=(1.0, 1.0), c=1.0, method="direct"):
    """``|||Q_h u - u_h||| / |||Q_h u|||`` for the patch solution."""
    problem = ModelProblem.manufactured(rho, constant_vector(*b), constant(0.0), constant(c),
                                        patch_solution(), dirichlet=None)
    system = assemble(mesh, problem, space)
    sol = solve(system, method=method)
    qh = project_exact(problem.exact.u, sol.disc)
    return energy_norm(qh - sol.coefficients, sol.disc, problem) / energy_norm(qh, sol.disc,
                                                                               problem)


def run_checks(seed=0, level=2, n_vectors=20, families=FAMILIES, r_override=None):
    """Coercivity identity, commutation and patch-test probes on small meshes."""
    rng = np.random.default_rng(seed)
    results = []

    def timed(name, tol, fn):
        t0 = time.perf_counter()
        val = fn()
        results.append(ProbeResult(name, val, tol, time.perf_counter() - t0))

    x3y = (lambda x, y: x ** 3 * y - y ** 2, lambda x, y: (3 * x ** 2 * y, x ** 3 - 2 * y))
    for fam in families:
        mesh = generate_mesh(MeshFamily(fam, level))
        for k in (1, 2):
            space = WgSpace(k, r=r_override)
            for rho in (1.0, 1e-6):
                problem = benchmark_problem("u1", rho)
                system = assemble(mesh, problem, space)
                vecs = random_free_vectors(system.disc, n_vectors, rng)
                timed(f"coercivity {fam} k={k} rho={rho:g}", 1e-11,
                      lambda: coercivity_defect(system, vecs))
        timed(f"commutation {fam} k=2 r=4", 1e-11,
              lambda: commutation_defect(mesh, WgSpace(2, r=4), *x3y))
        timed(f"patch test {fam} k=q=4", 1e-8,
              lambda: patch_defect(mesh, WgSpace(4, r=r_override)))
    return results


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
