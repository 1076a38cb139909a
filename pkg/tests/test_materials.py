import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gilsim.errors import ConfigError, DomainError, NonFinite, OutOfRange
from gilsim.geometry import Region, refine_uniform
from gilsim.materials import (K_B, ConstantConductivity, EpoxyConductivityParams, GradingProfile, MaterialConfig,
                              RegionMaterial, Sf6ConductivityParams, assign_materials, conductivity,
                              epoxy_conductivity, export_profile_csv, field_log_slope, grading_multiplier,
                              normalized_radius, sf6_conductivity)


def test_epoxy_without_exponents_is_kappa0():
    p = EpoxyConductivityParams(kappa0=3e-16, W_A=0.0, theta=0.0)
    assert np.all(epoxy_conductivity(np.array([250.0, 300.0, 400.0]), np.array([0.0, 1e6, 1e7]), p) == 3e-16)


def test_epoxy_arrhenius_factor():
    p = EpoxyConductivityParams(kappa0=1.0, W_A=0.095, theta=0.0)
    assert epoxy_conductivity(300.0, 0.0, p) == pytest.approx(math.exp(-0.095 / (K_B * 300.0)), rel=1e-14)
    assert -0.095 / (K_B * 300.0) == pytest.approx(-3.675, abs=5e-4)
    # the quoted 0.02538 is a rounded figure; exp(-3.675) = 0.025350
    assert epoxy_conductivity(300.0, 0.0, p) == pytest.approx(0.02538, rel=2e-3)
    ratio = epoxy_conductivity(340.0, 0.0, p) / epoxy_conductivity(300.0, 0.0, p)
    assert ratio == pytest.approx(1.541, rel=1e-3)


def test_epoxy_field_term_and_errors():
    p = EpoxyConductivityParams(kappa0=1e-16, W_A=0.0, theta=1e-7)
    assert epoxy_conductivity(300.0, 2e6, p) == pytest.approx(1e-16 * math.exp(0.2), rel=1e-14)
    with pytest.raises(DomainError):
        epoxy_conductivity(0.0, 0.0, p)
    with pytest.raises(NonFinite):
        epoxy_conductivity(300.0, 1e12, p)
    with pytest.raises(ConfigError):
        EpoxyConductivityParams(kappa0=0.0)


def test_sf6_all_modulations_off():
    p = Sf6ConductivityParams(kappa_sf6=2e-18, alpha=1.0, beta=0.0, t_exp=0.0, zeta_press=0.0, nu=0.0)
    E = np.array([0.0, 1e5, 1e7])
    assert np.all(sf6_conductivity(E, 0.6e6, 300.0, p) == 2e-18)


def test_sf6_pressure_factor():
    p = Sf6ConductivityParams(kappa_sf6=1.0, zeta_press=2e-7)
    ratio = sf6_conductivity(1e6, 1.2e6, 300.0, p) / sf6_conductivity(1e6, 0.6e6, 300.0, p)
    assert ratio == pytest.approx(math.exp(2e-7 * 0.6e6), rel=1e-14)


def test_sf6_reference_set_matches_scalar_evaluation(reference_materials):
    p = reference_materials.gas.conductivity
    assert isinstance(p, Sf6ConductivityParams)
    E, P, T = 1e6, 0.6e6, 300.0
    expected = (p.kappa_sf6
                * (p.alpha + p.beta * (p.gamma + E / p.E_x) ** p.zeta_exp)
                / (p.rho_shape + p.eps_shape * E / p.E_y) ** p.t_exp
                * math.exp(p.zeta_press * P) * math.exp(p.nu * T))
    assert sf6_conductivity(E, P, T, p) == pytest.approx(expected, rel=1e-12)


def test_sf6_domain_errors():
    p = Sf6ConductivityParams(kappa_sf6=1.0, rho_shape=1.0, eps_shape=-1.0, E_y=1.0, t_exp=1.0)
    with pytest.raises(DomainError):
        sf6_conductivity(2.0, 1e5, 300.0, p)
    with pytest.raises(DomainError):
        sf6_conductivity(0.0, 0.0, 300.0, Sf6ConductivityParams(kappa_sf6=1.0))


@settings(max_examples=60, deadline=None)
@given(T1=st.floats(200, 400), dT=st.floats(0.1, 100), E=st.floats(0, 5e7),
       W=st.floats(0.0, 1.0), theta=st.floats(0.0, 1e-7))
def test_epoxy_monotone_in_temperature(T1, dT, E, W, theta):
    p = EpoxyConductivityParams(kappa0=1e-16, W_A=W, theta=theta)
    lo, hi = epoxy_conductivity(T1, E, p), epoxy_conductivity(T1 + dT, E, p)
    assert hi >= lo if W > 0 else hi == lo


@settings(max_examples=60, deadline=None)
@given(E=st.floats(1e3, 5e7), theta=st.floats(0.0, 1e-7))
def test_epoxy_log_slope_matches_finite_difference(E, theta):
    p = EpoxyConductivityParams(kappa0=1e-16, W_A=0.095, theta=theta)
    h = 1e-6
    fd = math.log(epoxy_conductivity(300.0, E * (1 + h), p) / epoxy_conductivity(300.0, E * (1 - h), p)) / (2 * h)
    assert field_log_slope(p, E, 300.0, 0.6e6) == pytest.approx(fd, rel=1e-5, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(E=st.floats(1e4, 5e7))
def test_sf6_log_slope_matches_finite_difference(E, reference_materials):
    p = reference_materials.gas.conductivity
    h = 1e-6
    fd = math.log(sf6_conductivity(E * (1 + h), 0.6e6, 300.0, p) / sf6_conductivity(E * (1 - h), 0.6e6, 300.0, p)) / (2 * h)
    assert field_log_slope(p, E, 300.0, 0.6e6) == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_constant_model():
    assert np.all(conductivity(ConstantConductivity(5e-17), np.zeros(4), 300.0, 1e5) == 5e-17)
    with pytest.raises(ConfigError):
        ConstantConductivity(-1.0)


def test_profile_examples():
    s = GradingProfile("saddle", "conductivity", min_multiplier=1.0, max_multiplier=10.0)
    assert grading_multiplier(s, 0.5) == 1.0
    assert grading_multiplier(s, 0.0) == 10.0 and grading_multiplier(s, 1.0) == 10.0
    pw = GradingProfile("piecewise", control_points=((0, 3), (0.5, 1), (1, 3)))
    assert grading_multiplier(pw, 0.25) == 2.0
    lin = GradingProfile("linear", min_multiplier=1.0, max_multiplier=3.0)
    assert grading_multiplier(lin, 0.5) == 2.0
    assert grading_multiplier(GradingProfile(), 0.3) == 1.0
    with pytest.raises(OutOfRange):
        grading_multiplier(s, 1.1)


@pytest.mark.parametrize("pts", [((0, 1),), ((0.1, 1), (1, 1)), ((0, 1), (0.5, 1), (0.5, 2), (1, 1)),
                                 ((0, 1), (1, 0))])
def test_piecewise_validation(pts):
    with pytest.raises(ConfigError):
        GradingProfile("piecewise", control_points=pts)


@settings(max_examples=80, deadline=None)
@given(u=st.floats(0, 1), lo=st.floats(0.1, 10), hi=st.floats(0.1, 10))
def test_saddle_symmetric_and_bounded(u, lo, hi):
    s = GradingProfile("saddle", min_multiplier=lo, max_multiplier=hi)
    a, b = grading_multiplier(s, u), grading_multiplier(s, 1 - u)
    assert a == pytest.approx(b, rel=1e-12)
    assert min(lo, hi) - 1e-12 <= a <= max(lo, hi) + 1e-12


def test_profile_csv(tmp_path):
    export_profile_csv(GradingProfile("saddle", min_multiplier=1, max_multiplier=5), tmp_path / "p.csv", n=5)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "u,multiplier" and lines[3] == "0.5,1"


def _cfg():
    return MaterialConfig(gas=RegionMaterial(1.0, ConstantConductivity(1e-18), 0.014),
                          spacer=RegionMaterial(5.0, EpoxyConductivityParams(1e-16), 0.6))


def test_uniform_assignment_identical_spacer(gil_mesh):
    a = assign_materials(gil_mesh, _cfg())
    sp = gil_mesh.regions == Region.SPACER
    assert np.all(a.eps_r[sp] == 5.0) and np.all(a.sigma_multiplier[sp] == 1.0)
    assert np.all(a.eps_r[~sp] == 1.0)
    assert a.n_elements == gil_mesh.n_triangles


def test_saddle_minimum_at_mid_gap(gil_mesh):
    prof = GradingProfile("saddle", "conductivity", min_multiplier=1.0, max_multiplier=10.0)
    a = assign_materials(gil_mesh, _cfg(), [prof])
    sp = np.flatnonzero(gil_mesh.regions == Region.SPACER)
    u = normalized_radius(gil_mesh)[sp]
    mid = sp[np.argmin(np.abs(u - 0.5))]
    assert a.sigma_multiplier[mid] == a.sigma_multiplier[sp].min()
    gas = gil_mesh.regions == Region.GAS
    assert np.all(a.sigma_multiplier[gas] == 1.0)


def test_multipliers_converge_under_refinement(gil_mesh):
    prof = GradingProfile("piecewise", control_points=((0, 1.6), (0.3, 1), (0.7, 1), (1, 1.6)))
    for mesh in (gil_mesh, refine_uniform(gil_mesh, 1)):
        a = assign_materials(mesh, _cfg(), [prof])
        sp = mesh.regions == Region.SPACER
        direct = 5.0 * grading_multiplier(prof, normalized_radius(mesh)[sp])
        assert np.array_equal(a.eps_r[sp], direct)


def test_duplicate_scope_and_low_permittivity(gil_mesh):
    p = GradingProfile("linear", min_multiplier=1, max_multiplier=2)
    with pytest.raises(ConfigError):
        assign_materials(gil_mesh, _cfg(), [p, p])
    with pytest.raises(ConfigError):
        assign_materials(gil_mesh, _cfg(), [GradingProfile("linear", min_multiplier=0.1, max_multiplier=0.1)])
