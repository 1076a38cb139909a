import math

import numpy as np
import pytest

from gilsim.eqs import element_temperature, solve_resistive_dc
from gilsim.materials import EpoxyConductivityParams, MaterialAssignment, epoxy_conductivity, uniform_assignment
from gilsim.thermal import ThermalBoundary, couple_electrothermal, joule_source, solve_heat

from conftest import R_IN, R_OUT, coax_mesh


def _epoxy(mesh, W_A=0.095, theta=0.0, kappa0=1e-14):
    n = mesh.n_triangles
    return MaterialAssignment(np.full(n, 5.0), np.ones(n), np.full(n, 0.6),
                              ((np.arange(n), EpoxyConductivityParams(kappa0, W_A, theta)),))


def test_equal_electrode_temperatures_give_uniform_T():
    m = coax_mesh(8, 2)
    T = solve_heat(m, np.ones(m.n_triangles), 0.0, ThermalBoundary(320.0, 320.0))
    assert np.allclose(T, 320.0, rtol=1e-14)


def test_log_profile_at_geometric_mean():
    m = coax_mesh(40, 2)
    T = solve_heat(m, np.full(m.n_triangles, 0.6), 0.0, ThermalBoundary(340.0, 300.0))
    r = m.nodes[:, 0]
    exact = 300.0 + 40.0 * np.log(R_OUT / r) / math.log(R_OUT / R_IN)
    assert np.abs(T - exact).max() < 0.05
    rm = math.sqrt(R_IN * R_OUT)
    assert np.interp(rm, r[np.argsort(r)], T[np.argsort(r)]) == pytest.approx(320.0, rel=5e-3)


def test_positive_source_raises_temperature():
    m = coax_mesh(10, 2)
    bc = ThermalBoundary(300.0, 300.0)
    lam = np.ones(m.n_triangles)
    T0 = solve_heat(m, lam, 0.0, bc)
    T1 = solve_heat(m, lam, 5.0, bc)
    interior = (m.nodes[:, 0] > R_IN + 1e-9) & (m.nodes[:, 0] < R_OUT - 1e-9)
    assert np.all(T1[interior] > T0[interior])


def test_invalid_inputs():
    m = coax_mesh(3, 1)
    with pytest.raises(ValueError):
        solve_heat(m, np.zeros(m.n_triangles), 0.0)
    with pytest.raises(ValueError):
        solve_heat(m, np.ones(m.n_triangles), -1.0)
    with pytest.raises(ValueError):
        ThermalBoundary(0.0, 300.0)


def test_joule_source():
    assert np.array_equal(joule_source(np.array([2.0, 1.0]), np.array([3.0, 0.0])), [18.0, 0.0])


def test_no_joule_heat_converges_in_one_iteration():
    m = coax_mesh(8, 2)
    res = couple_electrothermal(m, uniform_assignment(m.n_triangles, 5.0, 0.0, 0.6), 320e3)
    assert res.iterations == 1
    assert np.array_equal(res.T, solve_heat(m, np.full(m.n_triangles, 0.6), 0.0))


def test_temperature_independent_sigma_converges_quickly():
    m = coax_mesh(8, 2)
    res = couple_electrothermal(m, _epoxy(m, W_A=0.0), 320e3)
    assert res.iterations <= 2


def test_arrhenius_gradient_shifts_stress_to_ground():
    m = coax_mesh(40, 2)
    mat = _epoxy(m)
    res = couple_electrothermal(m, mat, 320e3)
    T_elem = element_temperature(m, res.T)
    sigma = mat.conductivity(res.state.E_mag, T_elem)
    r = m.centroids()[:, 0]
    hot, cold = np.argmin(r), np.argmax(r)
    p = EpoxyConductivityParams(1.0, 0.095, 0.0)
    assert sigma[hot] / sigma[cold] == pytest.approx(
        epoxy_conductivity(T_elem[hot], 0.0, p) / epoxy_conductivity(T_elem[cold], 0.0, p), rel=1e-12)
    assert sigma[hot] / sigma[cold] == pytest.approx(1.54, rel=0.02)
    iso = solve_resistive_dc(m, mat, 320e3, T=np.full(m.n_nodes, 320.0))
    ratio_hot = res.state.E_mag[cold] / res.state.E_mag[hot]
    ratio_iso = iso.E_mag[cold] / iso.E_mag[hot]
    assert ratio_hot > ratio_iso
