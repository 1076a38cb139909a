import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from gilsim import fem
from gilsim.errors import InvalidFrequency, SolverFailure
from gilsim.geometry import Boundary, Mesh, Region, layered_annulus_mesh, refine_uniform
from gilsim.materials import EPS0, uniform_assignment
from gilsim.eqs import solve_capacitive, solve_phasor, solve_resistive_dc

from conftest import R_IN, R_OUT, coax_field, coax_mesh, coax_potential


def _triangle(pts):
    nodes = np.array(pts, dtype=float)
    tris = np.array([[0, 1, 2]])
    edges = np.array([[0, 1], [0, 2], [1, 2]])
    return Mesh(nodes, tris, np.array([Region.GAS], dtype=np.int8), edges,
                np.full(3, Boundary.SYMMETRY_CUTS, dtype=np.int8))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6))
def test_element_rows_sum_to_zero(coords):
    r = [0.1 + c for c in coords[:3]]
    z = coords[3:]
    area = 0.5 * ((r[1] - r[0]) * (z[2] - z[0]) - (r[2] - r[0]) * (z[1] - z[0]))
    if abs(area) < 1e-3:
        return
    pts = list(zip(r, z)) if area > 0 else list(zip(r, z))[::-1]
    A = fem.assemble(_triangle(pts), 1.0).matrix.toarray()
    assert np.allclose(A.sum(axis=1), 0.0, atol=1e-12 * np.abs(A).max())
    assert np.allclose(A, A.T, rtol=0, atol=1e-15 * np.abs(A).max())
    assert np.all(np.linalg.eigvalsh(A) > -1e-12 * np.abs(A).max())


def test_coefficient_scaling_is_exact():
    m = coax_mesh(8, 2)
    rng = np.random.default_rng(1)
    k = rng.uniform(0.5, 2.0, m.n_triangles)
    A1 = fem.assemble(m, k).matrix
    A4 = fem.assemble(m, 4.0 * k).matrix
    assert np.array_equal((4.0 * A1).toarray(), A4.toarray())


def test_axisymmetric_weight_integrates_r():
    # x^T A x for phi = z is the integral of r over the domain
    m = coax_mesh(6, 3)
    A = fem.assemble(m, 1.0).matrix
    z = m.nodes[:, 1]
    exact = 0.5 * (R_OUT ** 2 - R_IN ** 2) * 0.012
    assert z @ (A @ z) == pytest.approx(exact, rel=1e-12)


def test_coax_solution_converges_at_second_order():
    errs = []
    m = layered_annulus_mesh((R_IN, R_OUT), 0.012, (6,), 2)
    for _ in range(4):
        mat = uniform_assignment(m.n_triangles, 1.0, 0.0)
        phi = solve_capacitive(m, mat, 1.0).phi
        errs.append(np.abs(phi - coax_potential(m.nodes[:, 0])).max())
        m = refine_uniform(m, 1)
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates[-1] == pytest.approx(2.0, abs=0.2)


def test_dirichlet_everything_constrained():
    m = coax_mesh(3, 1)
    bc = {i: float(i) for i in range(m.n_nodes)}
    x = fem.solve(fem.apply_dirichlet(fem.assemble(m, 1.0), bc))
    assert np.array_equal(x, np.arange(m.n_nodes, dtype=float))


def test_dirichlet_zero_gives_zero():
    m = coax_mesh(5, 2)
    x = fem.solve(fem.apply_dirichlet(fem.assemble(m, 1.0), fem.electrode_bc(m, 0.0)))
    assert np.all(x == 0.0)


def test_discrete_maximum_principle(gil_mesh):
    mat = uniform_assignment(gil_mesh.n_triangles, np.where(gil_mesh.regions == Region.SPACER, 5.0, 1.0), 0.0)
    phi = solve_capacitive(gil_mesh, mat, 320e3).phi
    assert phi.min() == 0.0 and phi.max() == 320e3


def test_one_by_one_system():
    system = fem.SparseSystem(sp.csr_matrix(np.array([[4.0]])), np.array([2.0]))
    assert fem.solve(system)[0] == 0.5


def test_random_spd_against_dense_oracle():
    m = layered_annulus_mesh((R_IN, R_OUT), 0.01, (7,), 6)
    rng = np.random.default_rng(7)
    system = fem.assemble(m, rng.uniform(0.1, 10.0, m.n_triangles))
    rhs = rng.normal(size=m.n_nodes)
    bc = fem.electrode_bc(m, 1.0)
    system = fem.apply_dirichlet(fem.SparseSystem(system.matrix, rhs), bc)
    assert 40 <= len(system.free) <= 60
    x = fem.solve(system)
    dense = np.linalg.solve(system.reduced_matrix.toarray(), system.reduced_rhs)
    assert np.allclose(x[system.free], dense, rtol=1e-9, atol=0)
    assert np.array_equal(x, fem.solve(system))


def test_linear_field_gradient_is_exact():
    m = coax_mesh(5, 3)
    a = 1234.5
    E = fem.gradient(m, -a * m.nodes[:, 1] + 7.0)
    assert np.allclose(E.E_z, a, rtol=1e-12) and np.allclose(E.E_r, 0.0, atol=1e-9)
    assert np.all(fem.gradient(m, np.full(m.n_nodes, 3.0)).magnitude == 0.0)


def test_coax_field_first_order():
    errs = []
    for n in (10, 20, 40):
        m = coax_mesh(n, 2)
        E = solve_capacitive(m, uniform_assignment(m.n_triangles, 1.0, 0.0), 1.0).E_mag
        errs.append(np.abs(E - coax_field(m.centroids()[:, 0])).max() / coax_field(R_IN))
    assert errs[1] < 0.6 * errs[0] and errs[2] < 0.6 * errs[1]


def test_load_vector_integrates_source():
    m = coax_mesh(6, 3)
    b = fem.load_vector(m, 2.0)
    assert b.sum() == pytest.approx(2.0 * 0.5 * (R_OUT ** 2 - R_IN ** 2) * 0.012, rel=1e-12)


def test_complex_zero_sigma_is_capacitive():
    m = coax_mesh(10, 2)
    mat = uniform_assignment(m.n_triangles, 3.0, 0.0)
    ph = solve_phasor(m, mat, 1.0, 50.0)
    cap = solve_capacitive(m, mat, 1.0)
    assert np.allclose(ph.phi.real, cap.phi, rtol=1e-12, atol=1e-14) and np.all(ph.phi.imag == 0.0)


def test_complex_zero_eps_is_resistive():
    m = coax_mesh(10, 2)
    sys_ = fem.assemble_complex(m, np.zeros(m.n_triangles), np.full(m.n_triangles, 2e-9), 50.0)
    nodes, values = fem.electrode_bc(m, 1.0)
    phi = fem.solve(fem.apply_dirichlet(sys_, (nodes, values.astype(complex))))
    dc = solve_resistive_dc(m, uniform_assignment(m.n_triangles, 1.0, 2e-9), 1.0).phi
    assert np.allclose(np.abs(phi), dc, rtol=1e-10, atol=1e-14)


def test_two_layer_phasor_matches_complex_divider():
    r1, rm, r2 = R_IN, 0.08, R_OUT
    e1, e2, s1, s2, f = 5.0, 1.0, 1e-9, 3e-9, 50.0
    m = layered_annulus_mesh((r1, rm, r2), 0.001, (640, 640), 1, regions=(Region.SPACER, Region.GAS))
    inner = m.regions == Region.SPACER
    mat = uniform_assignment(m.n_triangles, np.where(inner, e1, e2), np.where(inner, s1, s2))
    phi = solve_phasor(m, mat, 1.0, f).phi
    w = 2 * math.pi * f
    y1 = (s1 + 1j * w * e1 * EPS0) / math.log(rm / r1)
    y2 = (s2 + 1j * w * e2 * EPS0) / math.log(r2 / rm)
    expected = y1 / (y1 + y2)
    at = np.abs(m.nodes[:, 0] - rm) < 1e-12
    assert np.max(np.abs(phi[at] - expected)) / abs(expected) < 1e-6


def test_invalid_frequency():
    m = coax_mesh(3, 1)
    with pytest.raises(InvalidFrequency):
        fem.assemble_complex(m, 1.0, 1.0, 0.0)


def test_matrix_market_export(tmp_path):
    import scipy.io
    m = coax_mesh(3, 1)
    s = fem.assemble(m, 1.0)
    fem.write_matrix_market(s, tmp_path / "a.mtx")
    back = scipy.io.mmread(str(tmp_path / "a.mtx"))
    assert np.allclose(back.toarray(), s.matrix.toarray(), rtol=1e-15)


def test_singular_system_raises_solver_failure():
    m = coax_mesh(4, 1)
    system = fem.apply_dirichlet(fem.assemble(m, 0.0), fem.electrode_bc(m, 1.0))
    with pytest.raises(SolverFailure):
        fem.solve(system)


def test_no_conduction_dc_falls_back_to_dielectric_field():
    m = coax_mesh(6, 2)
    mat = uniform_assignment(m.n_triangles, 2.0, 0.0)
    assert np.array_equal(solve_resistive_dc(m, mat, 1.0).phi, solve_capacitive(m, mat, 1.0).phi)
