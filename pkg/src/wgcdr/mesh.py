"""Two-dimensional polygonal meshes.

A :class:`PolygonalMesh` is built from a vertex array and a list of
counterclockwise vertex cycles.  Edge topology, outward normals, diameters
and centroids are derived on construction and never stored in files.

Three structured families on a rectangle are provided by
:func:`generate_mesh`:

``triangular``
    every cell of a ``2**level x 2**level`` grid split along its main
    diagonal;
``square``
    the grid cells themselves;
``nonconvex``
    every cell split by a zigzag polyline into two congruent pentagons,
    each with exactly one reflex vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

FAMILIES = ("triangular", "square", "nonconvex")

# interior points of the zigzag split, in unit-cell coordinates; the second
# is the first rotated by 180 degrees about the cell centre
_ZIGZAG = ((0.6, 0.2), (0.4, 0.8))


class MeshFormatError(ValueError):
    """Malformed mesh text; ``lineno`` is 1-based (0 if not line specific)."""

    def __init__(self, message, lineno=0):
        self.lineno = lineno
        if lineno:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MeshValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid mesh: " + "; ".join(self.violations))


@dataclass(frozen=True)
class MeshFamily:
    family: str
    level: int
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown mesh family {self.family!r}; expected one of {FAMILIES}")
        if int(self.level) != self.level or self.level < 1:
            raise ValueError(f"level must be a positive integer, got {self.level!r}")
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate domain {self.domain!r}")

    @property
    def cells_per_axis(self) -> int:
        return 2 ** self.level


def signed_area(polygon) -> float:
    p = np.asarray(polygon, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(polygon) -> np.ndarray:
    """Area centroid (falls back to the vertex mean for a degenerate polygon)."""
    p = np.asarray(polygon, dtype=float)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    if abs(a) < 1e-300:
        return p.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def polygon_diameter(polygon) -> float:
    p = np.asarray(polygon, dtype=float)
    d = p[:, None, :] - p[None, :, :]
    return float(np.sqrt((d ** 2).sum(axis=-1)).max())


def turn_cross(polygon) -> np.ndarray:
    """z-component of (v_i - v_{i-1}) x (v_{i+1} - v_i) at every vertex.

    Positive at convex vertices of a CCW polygon, negative at reflex ones.
    """
    p = np.asarray(polygon, dtype=float)
    u = p - np.roll(p, 1, axis=0)
    v = np.roll(p, -1, axis=0) - p
    return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]


def reflex_count(polygon, tol=1e-12) -> int:
    p = np.asarray(polygon, dtype=float)
    scale = polygon_diameter(p) ** 2
    return int((turn_cross(p) < -tol * scale).sum())


def is_convex(polygon, tol=1e-12) -> bool:
    return reflex_count(polygon, tol) == 0


def _segments_cross(p1, p2, q1, q2, eps) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
            ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
                and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps)

    return ((abs(d1) <= eps and on_segment(q1, q2, p1))
            or (abs(d2) <= eps and on_segment(q1, q2, p2))
            or (abs(d3) <= eps and on_segment(p1, p2, q1))
            or (abs(d4) <= eps and on_segment(p1, p2, q2)))


def is_simple(polygon, tol=1e-12) -> bool:
    """True if no two non-adjacent edges of the closed polygon touch."""
    p = np.asarray(polygon, dtype=float)
    n = len(p)
    if n < 3:
        return False
    eps = tol * max(polygon_diameter(p), 1e-300) ** 2
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n], eps):
                return False
    return True


class PolygonalMesh:
    """Immutable polygonal mesh with derived edge topology.

    Parameters
    ----------
    vertices : (nv, 2) array_like
    elements : sequence of int sequences
        Counterclockwise vertex cycles, 0-based.
    domain : tuple, optional
        ``(xmin, xmax, ymin, ymax)`` of the rectangle the mesh is meant to
        cover; used by :func:`validate` for the area check.

    Attributes
    ----------
    edges : (ne, 2) int array
        Vertex pairs, oriented as first traversed by ``edge_elements[:, 0]``.
    edge_elements : (ne, 2) int array
        Left and right element of every edge; ``-1`` on the boundary.
    boundary_edges : (ne,) bool array
    element_edges, element_edge_signs : list of int arrays
        Global edge id of local edge ``j`` (vertex ``j`` to ``j+1``) and
        ``+1``/``-1`` if the element traverses it along/against the global
        orientation.
    """

    def __init__(self, vertices, elements, domain=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
        self.vertices.setflags(write=False)
        self.elements = tuple(np.asarray(e, dtype=np.int64) for e in elements)
        self.domain = None if domain is None else tuple(float(v) for v in domain)
        nv = len(self.vertices)
        for i, e in enumerate(self.elements):
            if len(e) < 3:
                raise ValueError(f"element {i} has {len(e)} vertices")
            if e.min() < 0 or e.max() >= nv:
                raise ValueError(f"element {i} references a vertex outside 0..{nv - 1}")

        self._topology_issues = []
        self._build_topology()
        self._build_geometry()

    # -- construction -------------------------------------------------------

    def _build_topology(self):
        lookup = {}
        edges, owners = [], []
        elem_edges, elem_signs = [], []
        for t, cyc in enumerate(self.elements):
            n = len(cyc)
            ids = np.empty(n, dtype=np.int64)
            signs = np.empty(n, dtype=np.int64)
            for j in range(n):
                a, b = int(cyc[j]), int(cyc[(j + 1) % n])
                key = (a, b) if a < b else (b, a)
                eid = lookup.get(key)
                if eid is None:
                    eid = len(edges)
                    lookup[key] = eid
                    edges.append((a, b))
                    owners.append([t])
                    ids[j], signs[j] = eid, 1
                else:
                    owners[eid].append(t)
                    same = edges[eid] == (a, b)
                    ids[j], signs[j] = eid, (1 if same else -1)
                    if same:
                        self._topology_issues.append(
                            f"edge {eid} traversed in the same direction by elements "
                            f"{owners[eid][0]} and {t}")
            elem_edges.append(ids)
            elem_signs.append(signs)

        edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
        for eid, own in enumerate(owners):
            if len(own) > 2:
                self._topology_issues.append(
                    f"edge {eid} shared by {len(own)} elements {own}")
            edge_elements[eid, :min(len(own), 2)] = own[:2]
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_elements = edge_elements
        self.boundary_edges = edge_elements[:, 1] < 0
        self.element_edges = tuple(elem_edges)
        self.element_edge_signs = tuple(elem_signs)

    def _build_geometry(self):
        n = self.n_elements
        self.element_area = np.empty(n)
        self.element_centroid = np.empty((n, 2))
        self.element_diameter = np.empty(n)
        # vectorised per vertex count
        for nvert, ids in self.groups_by_size().items():
            p = self.vertices[np.stack([self.elements[i] for i in ids])]
            x, y = p[..., 0], p[..., 1]
            xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
            cross = x * yn - xn * y
            a = 0.5 * cross.sum(axis=1)
            safe = np.where(np.abs(a) > 1e-300, a, 1.0)
            cx = ((x + xn) * cross).sum(axis=1) / (6.0 * safe)
            cy = ((y + yn) * cross).sum(axis=1) / (6.0 * safe)
            degenerate = np.abs(a) <= 1e-300
            cx[degenerate] = x[degenerate].mean(axis=1)
            cy[degenerate] = y[degenerate].mean(axis=1)
            d = p[:, :, None, :] - p[:, None, :, :]
            self.element_area[ids] = a
            self.element_centroid[ids] = np.stack([cx, cy], axis=1)
            self.element_diameter[ids] = np.sqrt((d ** 2).sum(axis=-1)).max(axis=(1, 2))
        self.mesh_size = float(self.element_diameter.max()) if n else 0.0
        seg = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        self.edge_length = np.hypot(seg[:, 0], seg[:, 1])
        for arr in (self.element_area, self.element_centroid, self.element_diameter,
                    self.edges, self.edge_elements, self.boundary_edges, self.edge_length):
            arr.setflags(write=False)

    # -- queries ------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_edge_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edges)

    @property
    def boundary_edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_edges)

    def polygon(self, element_id) -> np.ndarray:
        return self.vertices[self.elements[element_id]]

    def groups_by_size(self) -> dict:
        """Map vertex count -> sorted array of element ids."""
        sizes = np.array([len(e) for e in self.elements], dtype=np.int64)
        return {int(n): np.flatnonzero(sizes == n) for n in np.unique(sizes)}

    def element_convex(self) -> np.ndarray:
        out = np.empty(self.n_elements, dtype=bool)
        for nvert, ids in self.groups_by_size().items():
            p = self.vertices[np.stack([self.elements[i] for i in ids])]
            u = p - np.roll(p, 1, axis=1)
            v = np.roll(p, -1, axis=1) - p
            cr = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
            scale = self.element_diameter[ids][:, None] ** 2
            out[ids] = ~(cr < -1e-12 * scale).any(axis=1)
        return out

    def edge_normal(self, element_id, local_edge) -> np.ndarray:
        """Outward unit normal of local edge ``j`` of an element."""
        p = self.polygon(element_id)
        d = p[(local_edge + 1) % len(p)] - p[local_edge]
        return np.array([d[1], -d[0]]) / np.hypot(d[0], d[1])

    def __repr__(self):
        return (f"PolygonalMesh(n_vertices={self.n_vertices}, n_elements={self.n_elements}, "
                f"n_edges={self.n_edges}, h={self.mesh_size:.4g})")


def element_edges(mesh: PolygonalMesh, element_id: int):
    """Ordered ``(edge_id, outward_unit_normal, length)`` triples of an element.

    The normal is the edge direction rotated by -90 degrees, which points
    outward for a counterclockwise cycle.
    """
    if not 0 <= element_id < mesh.n_elements:
        raise IndexError(f"element id {element_id} out of range 0..{mesh.n_elements - 1}")
    p = mesh.polygon(element_id)
    n = len(p)
    out = []
    for j in range(n):
        d = p[(j + 1) % n] - p[j]
        length = float(np.hypot(d[0], d[1]))
        out.append((int(mesh.element_edges[element_id][j]),
                    np.array([d[1], -d[0]]) / length, length))
    return out


def generate_mesh(family: MeshFamily) -> PolygonalMesh:
    x0, x1, y0, y1 = family.domain
    n = family.cells_per_axis
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    verts = [np.stack([gx.ravel(), gy.ravel()], axis=1)]

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    a = j * (n + 1) + i
    b, c, d = a + 1, a + n + 2, a + n + 1

    if family.family == "square":
        elements = np.stack([a, b, c, d], axis=1)
    elif family.family == "triangular":
        elements = np.empty((2 * n * n, 3), dtype=np.int64)
        elements[0::2] = np.stack([a, b, c], axis=1)
        elements[1::2] = np.stack([a, c, d], axis=1)
    else:
        hx, hy = (x1 - x0) / n, (y1 - y0) / n
        base = (n + 1) ** 2
        cell = np.arange(n * n)
        p_id, r_id = base + 2 * cell, base + 2 * cell + 1
        corner = np.stack([xs[i], ys[j]], axis=1)
        pts = np.empty((2 * n * n, 2))
        pts[0::2] = corner + np.array([_ZIGZAG[0][0] * hx, _ZIGZAG[0][1] * hy])
        pts[1::2] = corner + np.array([_ZIGZAG[1][0] * hx, _ZIGZAG[1][1] * hy])
        verts.append(pts)
        elements = np.empty((2 * n * n, 5), dtype=np.int64)
        elements[0::2] = np.stack([a, b, c, r_id, p_id], axis=1)
        elements[1::2] = np.stack([a, p_id, r_id, c, d], axis=1)

    return PolygonalMesh(np.concatenate(verts), list(elements), domain=family.domain)


def _boundary_loop_areas(mesh):
    """Signed areas of the closed loops formed by boundary edges."""
    nxt = {}
    for eid in mesh.boundary_edge_ids:
        a, b = mesh.edges[eid]
        nxt.setdefault(int(a), []).append(int(b))
    areas = []
    while nxt:
        start = next(iter(nxt))
        loop, cur = [start], start
        while True:
            targets = nxt.get(cur)
            if not targets:
                return None
            t = targets.pop()
            if not targets:
                del nxt[cur]
            if t == start:
                break
            loop.append(t)
            cur = t
        areas.append(signed_area(mesh.vertices[loop]))
    return areas


def validate(mesh: PolygonalMesh, domain_area=None, rtol=1e-12) -> list:
    """Return a list of human-readable invariant violations (empty if valid).

    The reference domain area is ``domain_area`` if given, else the area of
    ``mesh.domain``, else the area enclosed by the counterclockwise boundary
    loops (so interior holes and gaps count as defects).
    """
    violations = list(mesh._topology_issues)
    for t in range(mesh.n_elements):
        p = mesh.polygon(t)
        if len(np.unique(mesh.elements[t])) != len(mesh.elements[t]):
            violations.append(f"repeated vertex, element {t}")
            continue
        if not is_simple(p):
            violations.append(f"self-intersecting polygon, element {t}")
        area = mesh.element_area[t]
        if not area > 0:
            violations.append(f"negative signed area, element {t}")
            continue
        seg = np.roll(p, -1, axis=0) - p
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if (lengths <= rtol * mesh.element_diameter[t]).any():
            violations.append(f"zero-length edge, element {t}")
            continue
        normals = np.stack([seg[:, 1], -seg[:, 0]], axis=1) / lengths[:, None]
        if np.abs(np.hypot(normals[:, 0], normals[:, 1]) - 1.0).max() > 1e-12:
            violations.append(f"non-unit normal, element {t}")
        if is_convex(p):
            mid = 0.5 * (p + np.roll(p, -1, axis=0))
            outward = ((mid - mesh.element_centroid[t]) * normals).sum(axis=1)
            if (outward <= 0).any():
                violations.append(f"inward normal, element {t}")

    for eid in range(mesh.n_edges):
        left, right = mesh.edge_elements[eid]
        if left < 0:
            violations.append(f"orphan edge {eid}")

    total = float(mesh.element_area.sum())
    if domain_area is None and mesh.domain is not None:
        x0, x1, y0, y1 = mesh.domain
        domain_area = (x1 - x0) * (y1 - y0)
    if domain_area is None:
        loops = _boundary_loop_areas(mesh)
        if loops is None:
            violations.append("boundary edges do not form closed loops")
        else:
            domain_area = sum(a for a in loops if a > 0)
    if domain_area is not None and abs(total - domain_area) > rtol * abs(domain_area):
        violations.append(
            f"area defect: elements cover {total:.17g}, domain area {domain_area:.17g}")
    return violations


# -- text format ---------------------------------------------------------------


def write_mesh(mesh: PolygonalMesh, path) -> None:
    lines = ["wgmesh 1", f"nv {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"ne {mesh.n_elements}")
    lines += [" ".join([str(len(e))] + [str(int(v)) for v in e]) for e in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_mesh(text: str, check=True) -> PolygonalMesh:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    it = iter(rows)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of file, expected {what}") from None

    lineno, tok = take("header")
    if tok != ["wgmesh", "1"]:
        raise MeshFormatError(f"bad header {' '.join(tok)!r}, expected 'wgmesh 1'", lineno)

    def count(keyword):
        n_line, t = take(f"'{keyword} <count>'")
        if len(t) != 2 or t[0] != keyword:
            raise MeshFormatError(f"expected '{keyword} <count>'", n_line)
        try:
            value = int(t[1])
        except ValueError:
            raise MeshFormatError(f"bad count {t[1]!r}", n_line) from None
        if value < 0:
            raise MeshFormatError("negative count", n_line)
        return value

    nv = count("nv")
    verts = np.empty((nv, 2))
    for i in range(nv):
        n_line, t = take("vertex coordinates")
        if len(t) != 2:
            raise MeshFormatError("expected '<x> <y>'", n_line)
        try:
            verts[i] = float(t[0]), float(t[1])
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {' '.join(t)!r}", n_line) from None
        if not np.isfinite(verts[i]).all():
            raise MeshFormatError("non-finite coordinate", n_line)

    ne = count("ne")
    elements = []
    for _ in range(ne):
        n_line, t = take("element")
        try:
            vals = [int(v) for v in t]
        except ValueError:
            raise MeshFormatError(f"bad element record {' '.join(t)!r}", n_line) from None
        if vals[0] < 3 or len(vals) != vals[0] + 1:
            raise MeshFormatError("element record must be '<n> i0 ... i{n-1}' with n >= 3", n_line)
        idx = vals[1:]
        bad = [v for v in idx if not 0 <= v < nv]
        if bad:
            raise MeshFormatError(f"vertex index {bad[0]} out of range 0..{nv - 1}", n_line)
        elements.append(idx)

    extra = next(it, None)
    if extra is not None:
        raise MeshFormatError("trailing data after element list", extra[0])

    mesh = PolygonalMesh(verts, elements)
    if check:
        problems = validate(mesh)
        if problems:
            raise MeshValidationError(problems)
    return mesh


def read_mesh(path, check=True) -> PolygonalMesh:
    return parse_mesh(Path(path).read_text(), check=check)
