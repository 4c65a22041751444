import numpy as np
import pytest

from wgcdr.basis import monomial_exponents
from wgcdr.mesh import is_convex, signed_area
from wgcdr.quadrature import (
    TriangulationError,
    edge_quadrature,
    polygon_quadrature,
    reference_triangle_rule,
    triangle_points,
    triangulate_polygon,
)

# one element of the nonconvex generator on the unit cell
PENTAGON = np.array([[0, 0], [1, 0], [1, 1], [0.4, 0.8], [0.6, 0.2]])
DART = np.array([[0, 0], [1, 0], [1, 1], [0.6, 0.4]])
L_SHAPE = np.array([[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1]])


def inside(poly, pts):
    """Crossing-number point-in-polygon test."""
    x, y = pts[:, 0], pts[:, 1]
    hit = np.zeros(len(pts), dtype=bool)
    for (x0, y0), (x1, y1) in zip(poly, np.roll(poly, -1, axis=0)):
        straddle = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        hit ^= straddle & (x < xc)
    return hit


def random_star_polygon(rng, n):
    """Polygon star-shaped about the returned centre; usually nonconvex."""
    ang = 2 * np.pi * (np.arange(n) + rng.uniform(-0.35, 0.35, n)) / n
    rad = rng.uniform(0.4, 1.0, n)
    centre = rng.uniform(-1, 1, 2)
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1) + centre, centre


def test_reference_rule_weights():
    for d in range(12):
        _, w = reference_triangle_rule(d)
        assert w.sum() == pytest.approx(0.5, rel=1e-14)
        assert (w > 0).all()


@pytest.mark.parametrize("d", range(0, 13))
def test_reference_rule_exact(d):
    from math import factorial
    pts, w = reference_triangle_rule(d)
    for a, b in monomial_exponents(d):
        exact = factorial(a) * factorial(b) / factorial(a + b + 2)
        got = w @ (pts[:, 0] ** a * pts[:, 1] ** b)
        assert got == pytest.approx(exact, rel=1e-12)


def test_unit_square_weight():
    rule = polygon_quadrature([[0, 0], [1, 0], [1, 1], [0, 1]], 0)
    assert rule.measure == pytest.approx(1.0, rel=1e-14)


def test_triangle_xy():
    rule = polygon_quadrature([[0, 0], [1, 0], [0, 1]], 2)
    assert rule.integrate(rule.points[:, 0] * rule.points[:, 1]) == pytest.approx(1 / 24,
                                                                                  rel=1e-14)


def test_convex_quad_two_triangles():
    assert triangulate_polygon([[0, 0], [2, 0], [2, 1], [0, 1]]).shape == (2, 3)


@pytest.mark.parametrize("poly", [DART, PENTAGON, L_SHAPE], ids=["dart", "pentagon", "L"])
def test_triangles_stay_inside(poly, rng):
    tris = triangulate_polygon(poly)
    assert len(tris) == len(poly) - 2
    areas = [signed_area(poly[t]) for t in tris]
    assert min(areas) > 0
    assert sum(areas) == pytest.approx(signed_area(poly), rel=1e-13)
    # interior samples of every triangle must lie inside the polygon
    bary = rng.dirichlet([1, 1, 1], 2000)
    for t in tris:
        pts = bary @ poly[t]
        assert inside(poly, pts).all()


def test_l_shape_area():
    tris = triangulate_polygon(L_SHAPE)
    assert len(tris) == 4
    assert sum(signed_area(L_SHAPE[t]) for t in tris) == pytest.approx(0.75, rel=1e-13)


def test_triangulation_rejects_bad_input():
    with pytest.raises(TriangulationError, match="self-intersecting"):
        triangulate_polygon([[0, 0], [2, 0], [2, 2], [0, 2], [3, 1]])
    with pytest.raises(TriangulationError, match="degenerate"):
        triangulate_polygon([[0, 0], [1, 1], [1, 0], [0, 1]])
    with pytest.raises(TriangulationError, match="clockwise"):
        triangulate_polygon(DART[::-1])
    with pytest.raises(TriangulationError):
        triangulate_polygon([[0, 0], [1, 0], [2, 0]])


@pytest.mark.parametrize("poly", [PENTAGON, DART], ids=["pentagon", "dart"])
def test_x2_monte_carlo(poly):
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 1, (1_000_000, 2))
    sample = np.where(inside(poly, pts), pts[:, 0] ** 2, 0.0)
    mc, se = sample.mean(), sample.std() / np.sqrt(len(sample))
    rule = polygon_quadrature(poly, 2)
    assert abs(rule.integrate(rule.points[:, 0] ** 2) - mc) <= 3 * se


def test_exactness_against_second_triangulation():
    rng = np.random.default_rng(11)
    degree = 8
    n_nonconvex = 0
    for _ in range(20):
        poly, centre = random_star_polygon(rng, int(rng.integers(4, 9)))
        n_nonconvex += not is_convex(poly)
        rule = polygon_quadrature(poly, degree)
        # fan from the star centre: a triangulation with an extra vertex
        fan = np.stack([np.stack([centre, a, b]) for a, b in zip(poly, np.roll(poly, -1, 0))])
        assert min(signed_area(t) for t in fan) > 0
        xq, wq = triangle_points(fan, degree)
        xq, wq = xq.reshape(-1, 2), wq.ravel()
        scale = float(np.abs(poly).max()) ** np.arange(degree + 1)
        for a, b in monomial_exponents(degree):
            f1 = rule.integrate(rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            f2 = wq @ (xq[:, 0] ** a * xq[:, 1] ** b)
            assert abs(f1 - f2) <= 1e-12 * signed_area(poly) * scale[a + b]
    assert n_nonconvex >= 5


def test_edge_rules():
    r1 = edge_quadrature([0, 0], [1, 0], 1)
    np.testing.assert_allclose(r1.points, [[0.5, 0.0]])
    np.testing.assert_allclose(r1.weights, [1.0])
    r3 = edge_quadrature([0, 0], [1, 0], 3)
    np.testing.assert_allclose(np.sort(r3.points[:, 0]),
                               0.5 + np.array([-0.5, 0.5]) / np.sqrt(3), rtol=1e-14)
    assert r3.integrate(r3.points[:, 0] ** 3) == pytest.approx(0.25, rel=1e-14)


def test_edge_rule_arclength():
    p0, p1 = np.array([1.0, 2.0]), np.array([4.0, 6.0])
    rule = edge_quadrature(p0, p1, 5)
    s = np.linalg.norm(rule.points - p0, axis=1)
    assert rule.measure == pytest.approx(5.0, rel=1e-14)
    assert rule.integrate(s ** 5) == pytest.approx(5.0 ** 6 / 6, rel=1e-13)
