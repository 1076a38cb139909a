"""Stationary heat conduction with Joule source, and the electrothermal fixed point."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import fem
from .eqs import FieldState, TransientControls, element_temperature, solve_resistive_dc
from .errors import NoConvergence
from .geometry import Mesh
from .materials import MaterialAssignment

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThermalBoundary:
    conductor_T: float = 340.0
    enclosure_T: float = 300.0

    def __post_init__(self):
        if not (self.conductor_T > 0 and self.enclosure_T > 0):
            raise ValueError("boundary temperatures must be positive")


def joule_source(sigma, E_mag) -> np.ndarray:
    return np.asarray(sigma) * np.asarray(E_mag) ** 2


def solve_heat(mesh: Mesh, thermal_conductivity, source, bc: ThermalBoundary = ThermalBoundary()):
    """Nodal temperature of div(lambda grad T) + q = 0, electrodes held at fixed T.

    Cut faces carry the natural (adiabatic) condition.
    """
    lam = np.asarray(thermal_conductivity, dtype=float)
    q = np.broadcast_to(np.asarray(source, dtype=float), (mesh.n_triangles,))
    if np.any(lam <= 0):
        raise ValueError("thermal conductivity must be positive")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValueError("heat source must be finite and non-negative")
    sys_ = fem.assemble(mesh, lam, rhs=fem.load_vector(mesh, q))
    nodes, values = fem.electrode_bc(mesh, bc.conductor_T, bc.enclosure_T)
    return fem.solve(fem.apply_dirichlet(sys_, (nodes, values)))


@dataclass(frozen=True, eq=False)
class CoupledSolution:
    state: FieldState
    T: np.ndarray
    iterations: int
    residuals: tuple


def couple_electrothermal(mesh: Mesh, materials: MaterialAssignment, V: float,
                          bc: ThermalBoundary = ThermalBoundary(), coupling_tol: float = 1e-5,
                          max_outer: int = 50, controls: TransientControls = TransientControls()
                          ) -> CoupledSolution:
    """Alternate resistive DC and heat solves until T stops changing."""
    lam = materials.thermal_conductivity
    T = solve_heat(mesh, lam, 0.0, bc)
    residuals = []
    omega = 1.0
    state = None
    for it in range(1, max_outer + 1):
        state = solve_resistive_dc(mesh, materials, V, T, controls,
                                   E_start=None if state is None else state.E_mag)
        sigma = materials.conductivity(state.E_mag, element_temperature(mesh, T))
        T_new = solve_heat(mesh, lam, joule_source(sigma, state.E_mag), bc)
        change = float(np.max(np.abs(T_new - T)) / np.max(np.abs(T_new)))
        residuals.append(change)
        log.debug("electrothermal iteration %d: relative T change %.3e", it, change)
        if change <= coupling_tol:
            return CoupledSolution(_with_T(state, T_new), T_new, it, tuple(residuals))
        if it > 3 and change > residuals[-2]:
            omega = 0.5
        T = T + omega * (T_new - T)
    raise NoConvergence(f"electrothermal coupling did not converge in {max_outer} iterations "
                        f"(last relative change {residuals[-1]:.3e})", residual=residuals[-1])


def _with_T(state: FieldState, T) -> FieldState:
    return FieldState(state.time, state.phi, state.E, T, state.conductor_voltage,
                      state.picard_iterations)
