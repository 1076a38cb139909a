"""Conductivity models, permittivity and radial grading (FGM) of the spacer."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DomainError, NonFinite, OutOfRange
from .geometry import Mesh, Region

EPS0 = 8.854e-12  # As/(Vm)
K_B = 8.617e-5  # eV/K


@dataclass(frozen=True)
class PhysicalConstants:
    eps0: float = EPS0
    k_B: float = K_B


@dataclass(frozen=True)
class EpoxyConductivityParams:
    kappa0: float
    W_A: float = 0.095
    theta: float = 0.0

    def __post_init__(self):
        if not (self.kappa0 > 0 and self.W_A >= 0 and self.theta >= 0):
            raise ConfigError(f"invalid epoxy parameters {self}")


@dataclass(frozen=True)
class Sf6ConductivityParams:
    kappa_sf6: float
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    E_x: float = 1.0
    zeta_exp: float = 1.0
    rho_shape: float = 1.0
    eps_shape: float = 0.0
    E_y: float = 1.0
    t_exp: float = 0.0
    zeta_press: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if not (self.kappa_sf6 > 0 and self.E_x > 0 and self.E_y > 0):
            raise ConfigError(f"invalid SF6 parameters {self}")


@dataclass(frozen=True)
class ConstantConductivity:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ConfigError(f"constant conductivity must be >= 0, got {self.value}")


def _check_finite(out, what, params):
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"{what} overflowed for parameters {params}")
    return out


def epoxy_conductivity(T, E_mag, p: EpoxyConductivityParams):
    """kappa0 * exp(-W_A / (k_B T)) * exp(theta |E|)."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise DomainError("temperature must be positive")
    with np.errstate(over="ignore"):
        out = p.kappa0 * np.exp(-p.W_A / (K_B * T)) * np.exp(p.theta * np.abs(E_mag))
    out = _check_finite(out, "epoxy conductivity", p)
    return out if out.ndim else float(out)


def sf6_conductivity(E_mag, P, T, p: Sf6ConductivityParams):
    """Product of field, pressure and temperature factors of the SF6 model."""
    E = np.abs(np.asarray(E_mag, dtype=float))
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0) or not P > 0:
        raise DomainError("temperature and pressure must be positive")
    rise_base = p.gamma + E / p.E_x
    fall_base = p.rho_shape + p.eps_shape * E / p.E_y
    if np.any(fall_base <= 0):
        raise DomainError(f"(rho_shape + eps_shape*|E|/E_y) must stay positive for {p}")
    if np.any(rise_base < 0) and float(p.zeta_exp) != int(p.zeta_exp):
        raise DomainError(f"fractional power of a negative base for {p}")
    with np.errstate(over="ignore"):
        out = (p.kappa_sf6
               * (p.alpha + p.beta * rise_base ** p.zeta_exp)
               * (1.0 / fall_base ** p.t_exp)
               * math.exp(p.zeta_press * P)
               * np.exp(p.nu * T))
    out = _check_finite(out, "SF6 conductivity", p)
    return out if out.ndim else float(out)


def conductivity(model, E_mag, T, pressure: float):
    """Evaluate any of the three conductivity models elementwise."""
    if isinstance(model, EpoxyConductivityParams):
        return epoxy_conductivity(T, E_mag, model)
    if isinstance(model, Sf6ConductivityParams):
        return sf6_conductivity(E_mag, pressure, T, model)
    if isinstance(model, ConstantConductivity):
        return np.full(np.shape(E_mag), model.value, dtype=float)
    raise ConfigError(f"unknown conductivity model {model!r}")


def field_log_slope(model, E_mag, T, pressure: float):
    """d ln(sigma) / d ln|E| of a conductivity model, elementwise."""
    E = np.abs(np.asarray(E_mag, dtype=float))
    if isinstance(model, EpoxyConductivityParams):
        return model.theta * E
    if isinstance(model, Sf6ConductivityParams):
        p = model
        x = E / p.E_x
        base = p.gamma + x
        with np.errstate(divide="ignore", invalid="ignore"):
            rise = p.beta * p.zeta_exp * np.where(base > 0, base ** (p.zeta_exp - 1.0), 0.0) * x
        rise = rise / (p.alpha + p.beta * np.abs(base) ** p.zeta_exp)
        y = p.eps_shape * E / p.E_y
        fall = p.t_exp * y / (p.rho_shape + y)
        return np.nan_to_num(rise - fall)
    return np.zeros_like(E)


def depends_on_field(model) -> bool:
    if isinstance(model, EpoxyConductivityParams):
        return model.theta != 0
    if isinstance(model, Sf6ConductivityParams):
        return model.beta != 0 or (model.t_exp != 0 and model.eps_shape != 0)
    return False


def depends_on_temperature(model) -> bool:
    if isinstance(model, EpoxyConductivityParams):
        return model.W_A != 0
    if isinstance(model, Sf6ConductivityParams):
        return model.nu != 0
    return False


# -- grading profiles -------------------------------------------------------------------

class ProfileKind(str, Enum):
    UNIFORM = "uniform"
    SADDLE = "saddle"
    LINEAR = "linear"
    PIECEWISE = "piecewise"


class Scope(str, Enum):
    PERMITTIVITY = "permittivity"
    CONDUCTIVITY = "conductivity"


@dataclass(frozen=True)
class GradingProfile:
    kind: ProfileKind = ProfileKind.UNIFORM
    scope: Scope = Scope.PERMITTIVITY
    # relative permittivity (PERMITTIVITY) or kappa0 factor (CONDUCTIVITY); None
    # keeps the region's base material value
    base_value: float | None = None
    min_multiplier: float = 1.0
    max_multiplier: float = 1.0
    control_points: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        object.__setattr__(self, "scope", Scope(self.scope))
        pts = tuple((float(u), float(m)) for u, m in self.control_points)
        object.__setattr__(self, "control_points", pts)
        if self.kind is ProfileKind.PIECEWISE:
            us = [u for u, _ in pts]
            if len(pts) < 2 or us[0] != 0.0 or us[-1] != 1.0:
                raise ConfigError("piecewise control points must cover u=0 and u=1")
            if any(b <= a for a, b in zip(us[:-1], us[1:])):
                raise ConfigError("piecewise control points must be strictly increasing in u")
            if any(m <= 0 for _, m in pts):
                raise ConfigError("piecewise multipliers must be positive")
        elif self.kind is not ProfileKind.UNIFORM:
            if not (self.min_multiplier > 0 and self.max_multiplier > 0):
                raise ConfigError("grading multipliers must be positive")


def grading_multiplier(profile: GradingProfile, u):
    """Multiplier at normalized radius ``u`` (0 at the conductor, 1 at the enclosure)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < -1e-12) or np.any(u > 1 + 1e-12):
        raise OutOfRange(f"normalized radius outside [0, 1]: {u.min()}..{u.max()}")
    u = np.clip(u, 0.0, 1.0)
    lo, hi = profile.min_multiplier, profile.max_multiplier
    kind = profile.kind
    if kind is ProfileKind.UNIFORM:
        out = np.ones_like(u)
    elif kind is ProfileKind.SADDLE:
        out = lo + (hi - lo) * (2.0 * u - 1.0) ** 2
    elif kind is ProfileKind.LINEAR:
        out = lo + (hi - lo) * u
    else:
        us, ms = zip(*profile.control_points)
        out = np.interp(u, us, ms)
    return out if out.ndim else float(out)


def export_profile_csv(profile: GradingProfile, path, n: int = 101):
    u = np.linspace(0.0, 1.0, n)
    m = grading_multiplier(profile, u)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "multiplier"])
        for a, b in zip(u, m):
            w.writerow([f"{a:.17g}", f"{b:.17g}"])


# -- assignment ------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionMaterial:
    eps_r: float
    conductivity: object  # EpoxyConductivityParams | Sf6ConductivityParams | ConstantConductivity
    thermal_conductivity: float

    def __post_init__(self):
        if not self.eps_r >= 1.0:
            raise ConfigError(f"eps_r must be >= 1, got {self.eps_r}")
        if not self.thermal_conductivity > 0:
            raise ConfigError("thermal conductivity must be positive")


@dataclass(frozen=True)
class MaterialConfig:
    gas: RegionMaterial
    spacer: RegionMaterial
    pressure: float = 0.6e6  # Pa


@dataclass(frozen=True, eq=False)
class MaterialAssignment:
    """Per-element material data; ``groups`` maps element index arrays to models."""

    eps_r: np.ndarray
    sigma_multiplier: np.ndarray
    thermal_conductivity: np.ndarray
    groups: tuple  # ((element indices, model), ...)
    pressure: float = 0.6e6
    eps_multiplier: np.ndarray | None = None

    @property
    def n_elements(self) -> int:
        return len(self.eps_r)

    @property
    def permittivity(self) -> np.ndarray:
        return EPS0 * self.eps_r

    @property
    def field_dependent(self) -> bool:
        return any(depends_on_field(m) for _, m in self.groups)

    @property
    def temperature_dependent(self) -> bool:
        return any(depends_on_temperature(m) for _, m in self.groups)

    def field_log_slope(self, E_mag, T_elem) -> np.ndarray:
        """Elementwise d ln(sigma) / d ln|E|."""
        E_mag = np.broadcast_to(np.asarray(E_mag, dtype=float), self.eps_r.shape)
        T_elem = np.broadcast_to(np.asarray(T_elem, dtype=float), self.eps_r.shape)
        out = np.zeros(self.n_elements)
        for idx, model in self.groups:
            out[idx] = field_log_slope(model, E_mag[idx], T_elem[idx], self.pressure)
        return out

    def conductivity(self, E_mag, T_elem) -> np.ndarray:
        """Element conductivities (S/m) for element field magnitudes and temperatures."""
        E_mag = np.broadcast_to(np.asarray(E_mag, dtype=float), self.eps_r.shape)
        T_elem = np.broadcast_to(np.asarray(T_elem, dtype=float), self.eps_r.shape)
        out = np.empty(self.n_elements)
        for idx, model in self.groups:
            out[idx] = conductivity(model, E_mag[idx], T_elem[idx], self.pressure)
        return out * self.sigma_multiplier


def uniform_assignment(n_elements: int, eps_r, sigma, thermal_conductivity=1.0, pressure=0.6e6):
    """Assignment with per-element constants, for verification problems."""
    eps_r = np.broadcast_to(np.asarray(eps_r, dtype=float), (n_elements,)).copy()
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n_elements,)).copy()
    lam = np.broadcast_to(np.asarray(thermal_conductivity, dtype=float), (n_elements,)).copy()
    groups = ((np.arange(n_elements), ConstantConductivity(1.0)),)
    return MaterialAssignment(eps_r, sigma, lam, groups, pressure)


def normalized_radius(mesh: Mesh) -> np.ndarray:
    r = mesh.centroids()[:, 0]
    if mesh.geometry is not None:
        r_in, r_out = mesh.geometry.params.r_inner, mesh.geometry.params.r_outer
    else:
        r_in, r_out = mesh.nodes[:, 0].min(), mesh.nodes[:, 0].max()
    return (r - r_in) / (r_out - r_in)


def assign_materials(mesh: Mesh, config: MaterialConfig, profiles=()) -> MaterialAssignment:
    """Per-element materials; profiles grade the spacer radially."""
    if config is None or config.gas is None or config.spacer is None:
        raise ConfigError("material config needs both 'gas' and 'spacer' entries")
    by_scope = {}
    for prof in profiles:
        if prof.scope in by_scope:
            raise ConfigError(f"more than one {prof.scope.value} profile for the spacer")
        by_scope[prof.scope] = prof

    n = mesh.n_triangles
    spacer = mesh.regions == Region.SPACER
    gas = ~spacer
    u = normalized_radius(mesh)

    eps_r = np.where(spacer, config.spacer.eps_r, config.gas.eps_r).astype(float)
    lam = np.where(spacer, config.spacer.thermal_conductivity,
                   config.gas.thermal_conductivity).astype(float)
    sigma_mult = np.ones(n)
    eps_mult = np.ones(n)

    prof = by_scope.get(Scope.PERMITTIVITY)
    if prof is not None:
        base = config.spacer.eps_r if prof.base_value is None else prof.base_value
        eps_mult[spacer] = grading_multiplier(prof, u[spacer])
        eps_r[spacer] = base * eps_mult[spacer]
        if np.any(eps_r[spacer] < 1.0):
            raise ConfigError("graded spacer permittivity drops below eps_r = 1")
    prof = by_scope.get(Scope.CONDUCTIVITY)
    if prof is not None:
        base = 1.0 if prof.base_value is None else prof.base_value
        sigma_mult[spacer] = base * grading_multiplier(prof, u[spacer])

    groups = []
    if np.any(gas):
        groups.append((np.flatnonzero(gas), config.gas.conductivity))
    if np.any(spacer):
        groups.append((np.flatnonzero(spacer), config.spacer.conductivity))
    for arr in (eps_r, lam, sigma_mult, eps_mult):
        arr.setflags(write=False)
    return MaterialAssignment(eps_r, sigma_mult, lam, tuple(groups), config.pressure, eps_mult)
