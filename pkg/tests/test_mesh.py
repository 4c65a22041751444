import numpy as np
import pytest

from wgcdr.mesh import (
    FAMILIES,
    MeshFamily,
    MeshFormatError,
    MeshValidationError,
    PolygonalMesh,
    element_edges,
    generate_mesh,
    is_convex,
    parse_mesh,
    read_mesh,
    reflex_count,
    validate,
    write_mesh,
)

from conftest import DATA


def test_square_level1_counts():
    m = generate_mesh(MeshFamily("square", 1))
    assert (m.n_elements, m.n_edges, m.n_vertices) == (4, 12, 9)
    assert len(m.boundary_edge_ids) == 8


def test_triangular_level1_diameters():
    m = generate_mesh(MeshFamily("triangular", 1))
    assert m.n_elements == 8
    np.testing.assert_allclose(m.element_diameter, np.sqrt(2.0), rtol=1e-15)


def test_nonconvex_level2_all_reflex():
    m = generate_mesh(MeshFamily("nonconvex", 2))
    assert m.n_elements == 32
    assert not m.element_convex().any()
    assert all(reflex_count(m.polygon(t)) == 1 for t in range(m.n_elements))
    assert not any(is_convex(m.polygon(t)) for t in range(m.n_elements))


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_generated_meshes_validate(family, level):
    m = generate_mesh(MeshFamily(family, level))
    assert validate(m) == []
    assert validate(m, domain_area=4.0) == []


def test_mesh_family_rejects_bad_input():
    with pytest.raises(ValueError):
        MeshFamily("hexagonal", 2)
    with pytest.raises(ValueError):
        MeshFamily("square", 0)


def test_refinement_halves_h(family):
    hs = [generate_mesh(MeshFamily(family, lv)).mesh_size for lv in (1, 2, 3, 4)]
    for a, b in zip(hs, hs[1:]):
        assert b == a / 2


def test_divergence_identity(family, meshes):
    m = meshes(family, 3)
    for t in range(m.n_elements):
        p = m.polygon(t)
        total = 0.0
        for j, (_, n, length) in enumerate(element_edges(m, t)):
            mid = 0.5 * (p[j] + p[(j + 1) % len(p)])
            total += n @ mid * length
        assert total == pytest.approx(2.0 * m.element_area[t], rel=1e-12)


def test_constant_flux_vanishes(family, meshes):
    m = meshes(family, 2)
    for t in range(m.n_elements):
        flux = sum(n * length for _, n, length in element_edges(m, t))
        np.testing.assert_allclose(flux, 0.0, atol=1e-14)
        assert all(abs(np.linalg.norm(n) - 1) < 1e-15 for _, n, _ in element_edges(m, t))


def test_interior_normals_opposite(family, meshes):
    m = meshes(family, 2)
    seen = {}
    for t in range(m.n_elements):
        for eid, n, _ in element_edges(m, t):
            seen.setdefault(eid, []).append(n)
    for eid in m.interior_edge_ids:
        a, b = seen[eid]
        np.testing.assert_allclose(a, -b, atol=1e-15)
    for eid in m.boundary_edge_ids:
        assert len(seen[eid]) == 1


def test_element_edges_examples():
    sq = PolygonalMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    _, n, length = element_edges(sq, 0)[0]
    np.testing.assert_allclose(n, [0.0, -1.0])
    assert length == 1.0
    tri = PolygonalMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    _, n, length = element_edges(tri, 0)[1]
    np.testing.assert_allclose(n, [2 ** -0.5, 2 ** -0.5])
    assert length == pytest.approx(np.sqrt(2))
    with pytest.raises(IndexError):
        element_edges(tri, 1)


def test_reversed_element_reported(meshes):
    m = meshes("square", 2)
    elems = [list(e) for e in m.elements]
    elems[5] = elems[5][::-1]
    bad = PolygonalMesh(m.vertices, elems, domain=m.domain)
    problems = validate(bad)
    assert "negative signed area, element 5" in problems


def test_gap_reported_as_area_defect():
    verts = [[0, 0], [1, 0], [1, 1], [0, 1], [1.01, 0], [2, 0], [2, 1], [1.01, 1]]
    m = PolygonalMesh(verts, [[0, 1, 2, 3], [4, 5, 6, 7]], domain=(0, 2, 0, 1))
    problems = validate(m)
    assert any(p.startswith("area defect") for p in problems)


def test_hole_reported_without_domain():
    # a 3x3 block of unit cells missing its centre
    verts = [[i, j] for j in range(4) for i in range(4)]
    cells = []
    for j in range(3):
        for i in range(3):
            if (i, j) != (1, 1):
                a = 4 * j + i
                cells.append([a, a + 1, a + 5, a + 4])
    problems = validate(PolygonalMesh(verts, cells))
    assert any(p.startswith("area defect") for p in problems)


def test_self_intersecting_reported():
    bow = PolygonalMesh([[0, 0], [1, 1], [1, 0], [0, 1]], [[0, 1, 2, 3]])
    assert any("self-intersecting" in p for p in validate(bow))


def test_round_trip(tmp_path, family, meshes):
    m = meshes(family, 2)
    path = tmp_path / "m.mesh"
    write_mesh(m, path)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    assert all((a == b).all() for a, b in zip(back.elements, m.elements))
    np.testing.assert_array_equal(back.edges, m.edges)


def test_parse_error_names_line():
    text = "wgmesh 1\nnv 3\n0 0\n1 0\n0 1\nne 1\n3 0 1 7\n"
    with pytest.raises(MeshFormatError, match="line 7") as info:
        parse_mesh(text)
    assert info.value.lineno == 7


@pytest.mark.parametrize("text, line", [
    ("mesh 2\n", 1),
    ("wgmesh 1\nnv x\n", 2),
    ("wgmesh 1\nnv 1\n0\n", 3),
    ("wgmesh 1\nnv 1\n0 nan\n", 3),
    ("wgmesh 1\nnv 3\n0 0\n1 0\n0 1\nne 1\n4 0 1 2\n", 7),
    ("wgmesh 1\nnv 3\n0 0\n1 0\n0 1\nne 1\n3 0 1 2\nextra\n", 8),
])
def test_parse_errors(text, line):
    with pytest.raises(MeshFormatError) as info:
        parse_mesh(text)
    assert info.value.lineno == line


def test_truncated_file():
    with pytest.raises(MeshFormatError, match="unexpected end"):
        parse_mesh("wgmesh 1\nnv 2\n0 0\n")


def test_invalid_mesh_raises_on_read():
    text = "wgmesh 1\nnv 3\n0 0\n1 0\n0 1\nne 1\n3 0 2 1\n"
    with pytest.raises(MeshValidationError, match="negative signed area"):
        parse_mesh(text)
    assert parse_mesh(text, check=False).n_elements == 1


def test_hand_authored_mixed_mesh():
    m = read_mesh(DATA / "mixed5.mesh")
    assert m.n_elements == 5
    assert validate(m, domain_area=2.0) == []
    assert sorted(m.groups_by_size()) == [3, 4]
    assert len(m.interior_edge_ids) == 5
