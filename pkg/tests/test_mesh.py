import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from tsfem.errors import (
    GeometryError,
    InputError,
    MatchingError,
    MeshFormatError,
    TopologyError,
)
from tsfem.mesh import (
    CircleHole,
    DziukHole,
    EllipseHole,
    MappedDiscSpec,
    PerforatedSquareSpec,
    PolygonHole,
    SquareSpec,
    extract_boundary_curve,
    generate_mesh,
    match_periodic_nodes,
    mesh_stats,
    read_mesh,
    triangle_areas,
    validate_mesh,
    write_mesh,
)


def total_area(mesh):
    return float(triangle_areas(mesh.nodes, mesh.triangles).sum())


def test_square_mesh_counts_and_area():
    mesh = generate_mesh(SquareSpec(bounds=((0.0, 1.0), (0.0, 2.0)), n=4))
    assert mesh.node_count == 25
    assert mesh.triangle_count == 32
    assert total_area(mesh) == pytest.approx(2.0, rel=1e-14)
    assert len(mesh.boundary_markers) == 16
    assert set(mesh.boundary_markers) == {"outer"}
    validate_mesh(mesh)
    stats = mesh_stats(mesh)
    assert stats.h_max == pytest.approx(np.hypot(0.25, 0.5), rel=1e-12)
    assert stats.min_angle > 20.0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 6), level=st.integers(0, 2),
       w=st.floats(0.5, 3.0), h=st.floats(0.5, 3.0))
def test_square_mesh_properties(n, level, w, h):
    mesh = generate_mesh(SquareSpec(bounds=((0.0, w), (0.0, h)), n=n), level)
    validate_mesh(mesh)
    side = n * 2 ** level
    assert mesh.node_count == (side + 1) ** 2
    assert total_area(mesh) == pytest.approx(w * h, rel=1e-12)


def test_disc_area_and_curve_length_converge():
    areas, lengths = [], []
    for level in range(3):
        mesh = generate_mesh(MappedDiscSpec("identity", rings=2, segments=12), level)
        validate_mesh(mesh)
        areas.append(total_area(mesh))
        lengths.append(extract_boundary_curve(mesh, "outer").total_length())
    # inscribed polygons: increasing towards the circle values
    assert areas[0] < areas[1] < areas[2] < np.pi
    assert lengths[0] < lengths[1] < lengths[2] < 2 * np.pi
    assert areas[2] == pytest.approx(np.pi, rel=5e-3)
    assert lengths[2] == pytest.approx(2 * np.pi, rel=2e-3)


def test_disc_maps_produce_valid_meshes():
    for kind, kwargs in [("ellipse", {"a": 1.961, "b": 0.447}), ("dziuk", {})]:
        mesh = generate_mesh(MappedDiscSpec(kind, rings=3, segments=16, **kwargs))
        validate_mesh(mesh)
        assert mesh.domain_tag == "cell_interior"
    with pytest.raises(InputError, match="unknown disc map"):
        generate_mesh(MappedDiscSpec("twist"))
    with pytest.raises(GeometryError, match="degenerate Jacobian"):
        generate_mesh(MappedDiscSpec("ellipse", a=1.0, b=0.0))


def test_boundary_curve_matches_parents():
    mesh = generate_mesh(MappedDiscSpec("identity", rings=2, segments=10))
    curve = extract_boundary_curve(mesh, "outer")
    assert curve.node_count == 10
    np.testing.assert_array_equal(curve.nodes, mesh.nodes[curve.parent_indices])
    chained = curve.segments[:, 0]
    assert sorted(chained) == list(range(curve.node_count))
    with pytest.raises(TopologyError, match="no boundary edges carry marker"):
        extract_boundary_curve(mesh, "hole")


def test_perforated_area_approaches_complement():
    exact = 16.0 - np.pi
    areas = []
    for level in range(3):
        mesh = generate_mesh(
            PerforatedSquareSpec(CircleHole(1.0), segments_per_side=8, layers=4), level)
        validate_mesh(mesh)
        assert mesh.domain_tag == "cell_exterior"
        areas.append(total_area(mesh))
    # the polygonal hole is inscribed in the circle, so areas shrink to exact
    assert areas[0] > areas[1] > areas[2] > exact
    assert areas[2] == pytest.approx(exact, rel=5e-4)
    markers = set(generate_mesh(
        PerforatedSquareSpec(CircleHole(1.0), segments_per_side=8, layers=4)
    ).boundary_markers)
    assert markers == {"outer", "hole"}


def test_perforated_mesh_is_mirror_symmetric():
    mesh = generate_mesh(
        PerforatedSquareSpec(EllipseHole(1.96, 0.447), segments_per_side=12, layers=5))
    nodes = mesh.nodes
    tree = cKDTree(nodes)
    for flip in (np.array([-1.0, 1.0]), np.array([1.0, -1.0])):
        dist, _ = tree.query(nodes * flip)
        assert dist.max() < 1e-12


def test_hole_nodes_sit_on_the_analytic_curve():
    hole = EllipseHole(1.5, 0.8)
    mesh = generate_mesh(PerforatedSquareSpec(hole, segments_per_side=10, layers=4))
    sel = [i for i, m in enumerate(mesh.boundary_markers) if m == "hole"]
    ids = np.unique(mesh.boundary_edges[sel])
    residual = hole.implicit(mesh.nodes[ids])
    assert np.abs(residual).max() < 1e-12


def test_periodic_matching_classes():
    mesh = generate_mesh(
        PerforatedSquareSpec(CircleHole(1.0), segments_per_side=8, layers=3))
    matched = match_periodic_nodes(mesh, ((4.0, 0.0), (0.0, 4.0)))
    sizes = sorted(len(c) for c in matched.periodic_classes)
    assert len(matched.periodic_classes) == 15
    assert sizes == [2] * 14 + [4]
    validate_mesh(matched)
    for cls in matched.periodic_classes:
        pts = matched.nodes[cls]
        rel = (pts - pts[0]) / 4.0
        assert np.allclose(rel, np.round(rel), atol=1e-9)


def test_periodic_matching_reports_unmatched_node():
    mesh = generate_mesh(
        PerforatedSquareSpec(CircleHole(1.0), segments_per_side=8, layers=3))
    with pytest.raises(MatchingError, match="no periodic partner"):
        match_periodic_nodes(mesh, ((3.0, 0.0), (0.0, 4.0)))


def test_non_star_polygon_is_rejected():
    u_shape = ((-1, -1), (1, -1), (1, 1), (0.6, 1), (0.6, -0.4),
               (-0.6, -0.4), (-0.6, 1), (-1, 1))
    with pytest.raises(GeometryError, match="not star-shaped"):
        generate_mesh(PerforatedSquareSpec(PolygonHole(u_shape),
                                           segments_per_side=8, layers=3))


def test_polygon_hole_area_is_exact():
    square_hole = PolygonHole(((-1, -1), (1, -1), (1, 1), (-1, 1)))
    mesh = generate_mesh(PerforatedSquareSpec(square_hole, segments_per_side=8, layers=4))
    assert total_area(mesh) == pytest.approx(16.0 - 4.0, rel=1e-12)


def test_ellipse_from_coefficients():
    hole = EllipseHole.from_coefficients(0.26, 5.0)
    assert hole.a == pytest.approx(1.0 / np.sqrt(0.26), rel=1e-15)
    assert hole.b == pytest.approx(1.0 / np.sqrt(5.0), rel=1e-15)
    with pytest.raises(GeometryError, match="positive"):
        EllipseHole.from_coefficients(-1.0, 5.0)


def test_dziuk_hole_contains_offset_centre():
    hole = DziukHole()
    assert hole.implicit(np.array([[-0.2, 0.0]]))[0] < 0.0
    mesh = generate_mesh(PerforatedSquareSpec(hole, segments_per_side=12, layers=5))
    validate_mesh(mesh)


def test_mesh_io_round_trip(tmp_path):
    mesh = generate_mesh(
        PerforatedSquareSpec(CircleHole(1.0), segments_per_side=8, layers=3))
    mesh = match_periodic_nodes(mesh, ((4.0, 0.0), (0.0, 4.0)))
    path = tmp_path / "cell.mesh"
    write_mesh(mesh, path)
    back = read_mesh(path, domain_tag="cell_exterior")
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.boundary_edges, mesh.boundary_edges)
    assert back.boundary_markers == mesh.boundary_markers
    assert len(back.periodic_classes) == len(mesh.periodic_classes)
    for a, b in zip(back.periodic_classes, mesh.periodic_classes):
        np.testing.assert_array_equal(a, b)
    # second write is byte-identical
    second = tmp_path / "cell2.mesh"
    write_mesh(back, second)
    assert path.read_bytes() == second.read_bytes()


def test_read_mesh_reports_line_numbers(tmp_path):
    path = tmp_path / "broken.mesh"
    path.write_text("TSFEM-MESH 1\nnot a count line\n")
    with pytest.raises(MeshFormatError, match=r"line 2"):
        read_mesh(path)

    good = generate_mesh(SquareSpec(n=1))
    target = tmp_path / "clockwise.mesh"
    write_mesh(good, target)
    lines = target.read_text().splitlines()
    first_tri = 2 + good.node_count
    i, j, k = lines[first_tri].split()
    lines[first_tri] = " ".join([i, k, j])
    target.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshFormatError, match=rf"line {first_tri + 1}"):
        read_mesh(target)


def test_validate_rejects_structural_damage():
    mesh = generate_mesh(SquareSpec(n=2))
    bad = type(mesh)(nodes=mesh.nodes, triangles=mesh.triangles[:, [0, 2, 1]],
                     boundary_edges=mesh.boundary_edges,
                     boundary_markers=mesh.boundary_markers)
    with pytest.raises(TopologyError):
        validate_mesh(bad)


def test_refinement_level_must_be_nonnegative_integer():
    with pytest.raises(InputError, match="refinement level"):
        generate_mesh(SquareSpec(), -1)
