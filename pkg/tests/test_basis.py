import numpy as np
import pytest

from wgcdr.basis import (
    DegenerateElementError,
    EdgeBasis,
    ElementBasis,
    WgSpace,
    dim_p,
    mass_matrix,
    monomial_exponents,
    project_edges,
    project_Q0,
    project_Qb,
    project_Qr_vector,
)
from wgcdr.mesh import MeshFamily, generate_mesh, polygon_centroid
from wgcdr.quadrature import TriangulationError, polygon_quadrature

UNIT = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
PENTAGON = np.array([[0, 0], [1, 0], [1, 1], [0.4, 0.8], [0.6, 0.2]])


def l2_dist(f, basis, coeffs, rule):
    diff = f(rule.points[:, 0], rule.points[:, 1]) - basis.evaluate(coeffs, rule.points)
    return np.sqrt(rule.weights @ diff ** 2)


def test_dimensions():
    assert [dim_p(m) for m in range(5)] == [1, 3, 6, 10, 15]
    ex = monomial_exponents(3)
    assert len(ex) == 10 and (ex.sum(axis=1) == np.repeat(range(4), range(1, 5))).all()


def test_first_member_at_centroid():
    c = polygon_centroid(PENTAGON)[None]
    assert ElementBasis(PENTAGON, 3, orthonormal=False).values(c)[0, 0] == 1.0
    b = ElementBasis(PENTAGON, 3)
    assert b.values(c)[0, 0] == pytest.approx(1 / np.sqrt(0.5), rel=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 3, 6])
@pytest.mark.parametrize("poly", [UNIT, PENTAGON], ids=["square", "pentagon"])
def test_orthonormal_mass_is_identity(poly, degree):
    mass = mass_matrix(ElementBasis(poly, degree))
    np.testing.assert_allclose(mass, np.eye(dim_p(degree)), atol=1e-10)


def test_p1_monomial_mass_unit_square():
    # h = sqrt(2), so scaled x has second moment 1 / (12 h^2) = 1 / 24
    mass = mass_matrix(ElementBasis(UNIT, 1, orthonormal=False))
    np.testing.assert_allclose(mass, np.diag([1.0, 1 / 24, 1 / 24]), atol=1e-15)


def test_degenerate_polygon_rejected():
    flat = [[0, 0], [1, 0], [2, 0], [1, 0]]
    with pytest.raises((TriangulationError, DegenerateElementError)):
        mass_matrix(ElementBasis(flat, 1))


def test_underintegrated_mass_not_spd():
    # a one-point rule cannot see the linear members
    rule = polygon_quadrature([[0, 0], [1, 0], [0, 1]], 0)
    with pytest.raises(DegenerateElementError):
        mass_matrix(ElementBasis([[0, 0], [1, 0], [0, 1]], 1, orthonormal=False), rule)


def test_edge_mass_identity():
    e = EdgeBasis([0.2, 0.1], [1.3, -0.7], 5)
    np.testing.assert_allclose(mass_matrix(e), np.eye(6), atol=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_monomial_conditioning_nonconvex(k):
    mesh = generate_mesh(MeshFamily("nonconvex", 3))
    r = WgSpace(k).weak_degree(5, False)
    assert r == k + 2
    poly = mesh.polygon(0)
    _, cond_mono = mass_matrix(ElementBasis(poly, r, orthonormal=False), return_condition=True)
    _, cond_on = mass_matrix(ElementBasis(poly, r), return_condition=True)
    assert cond_mono < 1e8
    assert cond_on < 1e2


@pytest.mark.parametrize("r", [5, 7, 9])
def test_orthonormal_conditioning_high_degree(r):
    # raw monomials exceed 1e8 here; the orthonormal basis must not
    mesh = generate_mesh(MeshFamily("nonconvex", 3))
    _, cond = mass_matrix(ElementBasis(mesh.polygon(7), r), return_condition=True)
    assert cond < 1e2


@pytest.mark.parametrize("k", [0, 1, 2, 4])
def test_q0_reproduces_polynomials(k, rng):
    b = ElementBasis(PENTAGON, k)
    coef = rng.standard_normal(b.dim)

    def p(x, y):
        return b.evaluate(coef, np.stack([x, y], axis=-1))

    np.testing.assert_allclose(project_Q0(p, PENTAGON, k), coef, atol=1e-12)


def test_q0_x2_on_centred_square():
    coef = project_Q0(lambda x, y: x ** 2, UNIT, 1, orthonormal=False)
    np.testing.assert_allclose(coef, [1 / 12, 0, 0], atol=1e-15)


def test_q0_idempotent(rng):
    b = ElementBasis(PENTAGON, 2)
    c1 = project_Q0(lambda x, y: np.exp(x) * np.cos(3 * y), PENTAGON, 2)
    c2 = project_Q0(lambda x, y: b.evaluate(c1, np.stack([x, y], -1)), PENTAGON, 2)
    np.testing.assert_allclose(c2, c1, atol=1e-13)


def test_q0_optimal(rng):
    k = 2
    b = ElementBasis(PENTAGON, k)
    rule = polygon_quadrature(PENTAGON, 2 * k + 10)
    for _ in range(100):
        a1, a2, ph = rng.uniform(-4, 4, 3)

        def f(x, y):
            return np.sin(a1 * x + a2 * y + ph)

        best = l2_dist(f, b, project_Q0(f, PENTAGON, k), rule)
        other = l2_dist(f, b, rng.standard_normal(b.dim), rule)
        assert best <= other + 1e-14


def test_q0_rate_under_refinement():
    def f(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    errs = []
    for level in (2, 3, 4):
        mesh = generate_mesh(MeshFamily("square", level))
        tot = 0.0
        for t in range(mesh.n_elements):
            poly = mesh.polygon(t)
            b = ElementBasis(poly, 1)
            rule = polygon_quadrature(poly, 10)
            tot += l2_dist(f, b, project_Q0(f, poly, 1, basis=b), rule) ** 2
        errs.append(np.sqrt(tot))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(orders - 2.0) < 0.15)


def test_qb_examples():
    p0, p1 = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    e = EdgeBasis(p0, p1, 1)
    t = np.linspace(0, 1, 7)
    pts = np.stack([t, 0 * t], axis=1)
    c = project_Qb(lambda x, y: np.full_like(x, 3.0), p0, p1, 0)
    np.testing.assert_allclose(EdgeBasis(p0, p1, 0).values(pts) @ c, 3.0)
    c = project_Qb(lambda x, y: x, p0, p1, 1)
    np.testing.assert_allclose(e.values(pts) @ c, t, atol=1e-14)
    c = project_Qb(lambda x, y: x ** 2, p0, p1, 1)
    np.testing.assert_allclose(e.values(pts) @ c, t - 1 / 6, atol=1e-14)


def test_project_edges_matches_qb(rng):
    mesh = generate_mesh(MeshFamily("nonconvex", 2))

    def g(x, y):
        return np.cos(x + 2 * y)

    ids = np.arange(mesh.n_edges)
    batch = project_edges(mesh, ids, g, 3)
    for eid in rng.choice(ids, 10, replace=False):
        a, b = mesh.vertices[mesh.edges[eid]]
        np.testing.assert_allclose(batch[eid], project_Qb(g, a, b, 3), atol=1e-13)


def test_qr_vector_componentwise():
    r = 3

    def G(x, y):
        return x ** 2 * y, np.cos(x)

    c = project_Qr_vector(G, PENTAGON, r)
    assert c.shape == (2, dim_p(r))
    np.testing.assert_allclose(c[0], project_Q0(lambda x, y: x ** 2 * y, PENTAGON, r),
                               atol=1e-13)
    np.testing.assert_allclose(c[1], project_Q0(lambda x, y: np.cos(x), PENTAGON, r),
                               atol=1e-13)


def test_space_degree_policy():
    s = WgSpace(2)
    assert s.q == 2
    assert s.weak_degree(3, True) == 3 and s.weak_degree(5, False) == 4
    th = WgSpace(2, r="theory")
    assert th.weak_degree(4, True) == 5 and th.weak_degree(5, False) == 11
    assert WgSpace(1, r=4).weak_degree(5, False) == 4
    assert s.element_quadrature_degree(3) == 8
    assert s.edge_quadrature_degree(3) == 7


@pytest.mark.parametrize("kwargs", [dict(k=1, q=2), dict(k=-1), dict(k=2, r=1),
                                    dict(k=1, r="lots")])
def test_space_rejects(kwargs):
    with pytest.raises(ValueError):
        WgSpace(**kwargs)


def test_space_dof_count():
    mesh = generate_mesh(MeshFamily("square", 2))
    # 16 elements * 3 + 24 interior edges * 2
    assert WgSpace(1).n_dofs(mesh) == 16 * 3 + 24 * 2
