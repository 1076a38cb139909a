import math

import numpy as np
import pytest

from gilsim.errors import InvalidGeometry, MeshFailure, NotFound
from gilsim.geometry import (Boundary, GeometryParams, MeshControls, Region, build_geometry, generate_mesh,
                             junction_nodes, layered_annulus_mesh, locate_triple_points, refine_uniform)

from conftest import COARSE


def test_cone_angle_limits():
    with pytest.raises(InvalidGeometry):
        build_geometry(GeometryParams(cone_angle=90.0))
    with pytest.raises(InvalidGeometry):
        build_geometry(GeometryParams(cone_angle=0.0))
    build_geometry(GeometryParams(cone_angle=89.0, domain_axial_length=20.0, spacer_axial_center=10.0))


@pytest.mark.parametrize("kw", [
    dict(r_inner=0.125, r_outer=0.125),
    dict(r_inner=0.2),
    dict(r_inner=-0.01),
    dict(spacer_thickness_axial=0.0),
    dict(spacer_thickness_outer=-0.01),
    dict(spacer_axial_center=0.01),
    dict(domain_axial_length=0.2),
])
def test_invalid_geometry(kw):
    with pytest.raises(InvalidGeometry):
        build_geometry(GeometryParams(**kw))


def test_interfaces_are_inclined_lines():
    g = build_geometry(GeometryParams(cone_angle=30.0))
    (r0, z0), (r1, z1) = g.front_interface
    assert (r0, r1) == (0.05, 0.125)
    assert math.degrees(math.atan2(z1 - z0, r1 - r0)) == pytest.approx(30.0, abs=1e-12)
    r = np.linspace(0.05, 0.125, 7)
    assert np.allclose(g.z_front(r), z0 + (r - r0) * math.tan(math.radians(30.0)), rtol=0, atol=1e-15)


def test_region_areas_match_geometry(gil_mesh):
    areas = gil_mesh.signed_areas()
    g = gil_mesh.geometry
    for reg in Region:
        got = areas[gil_mesh.regions == reg].sum()
        assert got == pytest.approx(g.region_areas[reg], rel=1e-6)


def test_mesh_invariants(gil_mesh):
    m = gil_mesh
    assert np.all(m.signed_areas() > 0)
    assert m.nodes[:, 0].min() >= 0.05 - 1e-12
    assert m.angles_deg().min() >= 10.0
    # conforming: every edge has one or two owners, exterior edges are exactly the tagged ones
    edges = np.sort(m.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    assert counts.max() == 2
    exterior = uniq[counts == 1]
    assert np.array_equal(exterior, m.boundary_edges)
    assert set(np.unique(m.boundary_tags)) == {Boundary.CONDUCTOR, Boundary.ENCLOSURE, Boundary.SYMMETRY_CUTS}


def test_interface_edges_lie_on_geometry(gil_mesh):
    g = gil_mesh.geometry
    for a, b in gil_mesh.interface_edges():
        for v in (a, b):
            r, z = gil_mesh.nodes[v]
            assert min(abs(z - g.z_front(r)), abs(z - g.z_back(r))) < 1e-12


def test_triple_points_match_analytic_junctions(gil_mesh):
    g = gil_mesh.geometry
    A = gil_mesh.nodes[gil_mesh.triple_point_A]
    B = gil_mesh.nodes[gil_mesh.triple_point_B]
    assert A[0] == pytest.approx(0.05, abs=1e-12)
    assert B[0] == pytest.approx(0.125, abs=1e-12)
    dA = min(np.hypot(*(A - np.array(p))) for p in g.junctions.values())
    dB = min(np.hypot(*(B - np.array(p))) for p in g.junctions.values())
    assert dA < 1e-9 and dB < 1e-9
    cond, encl = junction_nodes(gil_mesh)
    assert gil_mesh.triple_point_A in cond and gil_mesh.triple_point_B in encl


def test_element_size_near_triple_points(gil_mesh):
    for node in (gil_mesh.triple_point_A, gil_mesh.triple_point_B):
        for t in gil_mesh.node_elements()[node]:
            p = gil_mesh.nodes[gil_mesh.triangles[t]]
            longest = max(np.hypot(*(p[i] - p[(i + 1) % 3])) for i in range(3))
            assert longest <= COARSE.triple_point_h * (1 + 1e-9)


def test_mirror_flips_junctions():
    m0 = generate_mesh(build_geometry(GeometryParams()), COARSE)
    m1 = generate_mesh(build_geometry(GeometryParams(mirror=True)), COARSE)
    L = GeometryParams().domain_axial_length
    for a, b in ((m0.triple_point_A, m1.triple_point_A), (m0.triple_point_B, m1.triple_point_B)):
        assert m1.nodes[b][0] == m0.nodes[a][0]
        assert m1.nodes[b][1] == pytest.approx(L - m0.nodes[a][1], abs=1e-12)
    assert np.all(m1.signed_areas() > 0)


def test_annulus_without_spacer():
    m = generate_mesh(build_geometry(GeometryParams(with_spacer=False)), COARSE)
    assert np.all(m.regions == Region.GAS)
    with pytest.raises(NotFound):
        locate_triple_points(m)


def test_halving_controls_grows_node_count():
    g = build_geometry(GeometryParams())
    m1 = generate_mesh(g, COARSE)
    m2 = generate_mesh(g, COARSE.scaled(2.0))
    assert 3.0 <= m2.n_nodes / m1.n_nodes <= 5.0


def test_deterministic(gil_mesh):
    again = generate_mesh(build_geometry(GeometryParams()), COARSE)
    assert np.array_equal(again.nodes, gil_mesh.nodes)
    assert np.array_equal(again.triangles, gil_mesh.triangles)


def test_mesh_controls_validated():
    g = build_geometry(GeometryParams())
    with pytest.raises(MeshFailure):
        generate_mesh(g, MeshControls(h_max=0.001, triple_point_h=0.002))
    with pytest.raises(MeshFailure):
        generate_mesh(g, MeshControls(grading_ratio=1.0))


def test_red_refinement_keeps_tags(gil_mesh):
    fine = refine_uniform(gil_mesh, 1)
    assert fine.n_triangles == 4 * gil_mesh.n_triangles
    for reg in Region:
        assert fine.signed_areas()[fine.regions == reg].sum() == pytest.approx(
            gil_mesh.signed_areas()[gil_mesh.regions == reg].sum(), rel=1e-12)
    assert np.array_equal(fine.nodes[fine.triple_point_A], gil_mesh.nodes[gil_mesh.triple_point_A])
    assert fine.angles_deg().min() == pytest.approx(gil_mesh.angles_deg().min(), abs=1e-9)


def test_layered_annulus():
    m = layered_annulus_mesh((0.05, 0.08, 0.125), 0.01, (6, 9), 3, regions=(Region.SPACER, Region.GAS))
    r = m.centroids()[:, 0]
    assert np.all(m.regions[r < 0.08] == Region.SPACER) and np.all(m.regions[r > 0.08] == Region.GAS)
    assert m.signed_areas().sum() == pytest.approx(0.075 * 0.01, rel=1e-12)
    with pytest.raises(InvalidGeometry):
        layered_annulus_mesh((0.05, 0.04), 0.01, 4, 2)
