"""Electro-quasistatic solves: capacitive, resistive DC, phasor and transient.

The transient form is ``div(eps grad dphi/dt) + div(sigma grad phi) = 0``,
integrated with backward Euler:

    (A_eps/dt + A_sigma(phi_new)) phi_new = (A_eps/dt) phi_old

with the conductor potential prescribed at the new time level. The
conductivity nonlinearity in ``|E|`` is resolved by Picard iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import NoConvergence
from .fem import ElementField
from .geometry import Mesh, Region
from .materials import MaterialAssignment

log = logging.getLogger(__name__)

AMBIENT_T = 300.0
DAMPING = 0.5
NONMONOTONE_LIMIT = 10


@dataclass(frozen=True, eq=False)
class FieldState:
    time: float
    phi: np.ndarray
    E: ElementField
    T: np.ndarray
    conductor_voltage: float
    picard_iterations: int = 0

    @property
    def E_mag(self) -> np.ndarray:
        return self.E.magnitude


@dataclass(frozen=True)
class TransientControls:
    dt_initial: float = 1e-4
    dt_max: float = 1e7
    dt_growth: float = 1.3
    picard_tol: float = 1e-6
    picard_max_iters: int = 50
    steady_state_tol: float = 1e-4
    t_end: float = 1e8
    # minimum number of steps spent on a voltage ramp
    ramp_steps: int = 50

    def __post_init__(self):
        if not self.dt_initial > 0:
            raise ValueError("dt_initial must be positive")
        if not self.dt_growth > 1:
            raise ValueError("dt_growth must exceed 1")
        if not (0 < self.picard_tol <= 1e-2):
            raise ValueError("picard_tol must lie in (0, 1e-2]")


def element_temperature(mesh: Mesh, T) -> np.ndarray:
    T = np.broadcast_to(np.asarray(T, dtype=float), (mesh.n_nodes,))
    return T[mesh.triangles].mean(axis=1)


def _temperature(mesh, T):
    if T is None:
        return np.full(mesh.n_nodes, AMBIENT_T)
    return np.array(np.broadcast_to(np.asarray(T, dtype=float), (mesh.n_nodes,)))


def _state(mesh, time, phi, T, V, iterations=0):
    return FieldState(float(time), phi, fem.gradient(mesh, phi), T, float(V), iterations)


def solve_capacitive(mesh: Mesh, materials: MaterialAssignment, V: float, T=None) -> FieldState:
    """Potential of div(eps grad phi) = 0 with phi = V on the conductor, 0 on the enclosure."""
    sys_ = fem.apply_dirichlet(fem.assemble(mesh, materials.permittivity), fem.electrode_bc(mesh, V))
    return _state(mesh, 0.0, fem.solve(sys_), _temperature(mesh, T), V)


class _Picard:
    """Fixed-point loop on the element field magnitude used to evaluate sigma.

    Each element's update is relaxed by ``1 / (1 + s)`` with ``s`` the
    logarithmic field slope of its conductivity; this is the optimal scalar
    relaxation for laws like ``E * exp(theta*E) = J``, where plain substitution
    diverges once ``theta*E > 1``. Elements that are voltage driven are then
    over-relaxed, which Anderson mixing over the last few iterates repairs.
    The history is dropped on any non-monotone iteration, and a global factor
    of 0.5 is engaged after repeated ones.
    """

    depth = 3

    def __init__(self, tol, max_iters, log_slope=None):
        self.tol = tol
        self.max_iters = max_iters
        self.log_slope = log_slope

    def run(self, solve_with, E_start):
        E_eval = np.asarray(E_start, dtype=float)
        omega, prev, nonmono = 1.0, math.inf, 0
        change = math.inf
        xs, fs = [], []  # iterates and relaxed residuals for the mixing
        for it in range(1, self.max_iters + 1):
            phi, E_new = solve_with(E_eval)
            scale = float(np.max(E_new)) if E_new.size else 0.0
            change = float(np.max(np.abs(E_new - E_eval))) / scale if scale > 0 else 0.0
            if change <= self.tol:
                return phi, it, change
            if change > prev:
                nonmono += 1
                xs, fs = [], []
                if nonmono >= NONMONOTONE_LIMIT and omega == 1.0:
                    omega = DAMPING
                    log.debug("picard: damping engaged after %d non-monotone iterations", nonmono)
            prev = change
            local = 1.0
            if self.log_slope is not None:
                local = 1.0 / (1.0 + np.clip(self.log_slope(E_eval), 0.0, None))
            f = omega * local * (E_new - E_eval)
            xs.append(E_eval)
            fs.append(f)
            E_eval = np.maximum(self._mix(xs, fs), 0.0)
            del xs[:-self.depth - 1], fs[:-self.depth - 1]
        raise NoConvergence(f"Picard iteration did not converge in {self.max_iters} iterations "
                            f"(last relative change {change:.3e})", residual=change)

    @staticmethod
    def _mix(xs, fs):
        x, f = xs[-1], fs[-1]
        if len(xs) < 2:
            return x + f
        dF = np.stack([fs[i + 1] - fs[i] for i in range(len(fs) - 1)], axis=1)
        dX = np.stack([xs[i + 1] - xs[i] for i in range(len(xs) - 1)], axis=1)
        gamma = np.linalg.lstsq(dF, f, rcond=None)[0]
        return x + f - (dX + dF) @ gamma


def solve_resistive_dc(mesh: Mesh, materials: MaterialAssignment, V: float, T=None,
                       controls: TransientControls = TransientControls(), E_start=None) -> FieldState:
    """Fixed point of div(sigma(|E|, T) grad phi) = 0."""
    T = _temperature(mesh, T)
    T_elem = element_temperature(mesh, T)
    bc = fem.electrode_bc(mesh, V)

    def solve_with(E_eval):
        sigma = materials.conductivity(E_eval, T_elem)
        phi = fem.solve(fem.apply_dirichlet(fem.assemble(mesh, sigma), bc))
        return phi, fem.gradient(mesh, phi).magnitude

    if not materials.field_dependent:
        if not np.any(materials.conductivity(0.0, T_elem)):
            # no conduction anywhere: the DC potential is the dielectric one
            return _state(mesh, 0.0, solve_capacitive(mesh, materials, V, T).phi, T, V, 1)
        phi, _ = solve_with(np.zeros(mesh.n_triangles))
        return _state(mesh, 0.0, phi, T, V, 1)
    if E_start is None:
        E_start = np.zeros(mesh.n_triangles)
    picard = _Picard(controls.picard_tol, controls.picard_max_iters,
                     lambda E: materials.field_log_slope(E, T_elem))
    phi, iters, _ = picard.run(solve_with, E_start)
    return _state(mesh, 0.0, phi, T, V, iters)


@dataclass(frozen=True, eq=False)
class PhasorState:
    frequency: float
    phi: np.ndarray  # complex amplitude
    E_r: np.ndarray
    E_z: np.ndarray
    conductor_voltage: float

    @property
    def E_mag(self) -> np.ndarray:
        return np.sqrt(np.abs(self.E_r) ** 2 + np.abs(self.E_z) ** 2)


def solve_phasor(mesh: Mesh, materials: MaterialAssignment, V: float, f: float, T=None) -> PhasorState:
    """Complex potential amplitude; sigma frozen at the capacitive field and temperature ``T``."""
    T_elem = element_temperature(mesh, _temperature(mesh, T))
    E_lin = solve_capacitive(mesh, materials, V, T).E_mag
    sigma = materials.conductivity(E_lin, T_elem)
    sys_ = fem.assemble_complex(mesh, materials.permittivity, sigma, f)
    nodes, values = fem.electrode_bc(mesh, V)
    phi = fem.solve(fem.apply_dirichlet(sys_, (nodes, values.astype(complex))))
    E = fem.gradient(mesh, phi)
    return PhasorState(f, phi, E.E_r, E.E_z, float(V))


class TransientStepper:
    """Backward-Euler stepping on a fixed mesh, material set and temperature."""

    def __init__(self, mesh: Mesh, materials: MaterialAssignment, T=None,
                 controls: TransientControls = TransientControls()):
        self.mesh = mesh
        self.materials = materials
        self.controls = controls
        self.set_temperature(T)
        self.A_eps = fem.assemble(mesh, materials.permittivity).matrix
        nodes, template = fem.electrode_bc(mesh, 1.0)
        order = np.argsort(nodes, kind="stable")  # the order apply_dirichlet uses
        self.bc_nodes, self._bc_template = nodes[order], template[order]
        self._factor_cache = None  # (dt, Factorization, reduced system) for linear problems

    def set_temperature(self, T):
        self.T = _temperature(self.mesh, T)
        self.T_elem = element_temperature(self.mesh, self.T)
        self._linear_sigma = None
        self._factor_cache = None

    def _bc(self, V):
        # conductor nodes carry 1.0 in the template, enclosure nodes 0.0
        return self.bc_nodes, self._bc_template * V

    def _system(self, dt, sigma, phi_old, V):
        A_s = fem.assemble(self.mesh, sigma).matrix
        A = self.A_eps / dt + A_s
        rhs = (self.A_eps @ phi_old) / dt
        return fem.apply_dirichlet(fem.SparseSystem(A.tocsr(), rhs), self._bc(V))

    def step(self, state: FieldState, dt: float, V_next: float, E_guess=None) -> FieldState:
        """Advance ``state`` by ``dt``; ``E_guess`` optionally seeds the Picard loop."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        phi_old = state.phi
        if not self.materials.field_dependent:
            return self._linear_step(state, dt, V_next)

        def solve_with(E_eval):
            sigma = self.materials.conductivity(E_eval, self.T_elem)
            phi = fem.solve(self._system(dt, sigma, phi_old, V_next))
            return phi, fem.gradient(self.mesh, phi).magnitude

        c = self.controls
        eps_dt = self.materials.permittivity / dt

        def log_slope(E):
            # slope of the step admittance sigma + eps/dt, not of sigma alone
            sigma = self.materials.conductivity(E, self.T_elem)
            return self.materials.field_log_slope(E, self.T_elem) * sigma / (sigma + eps_dt)

        picard = _Picard(c.picard_tol, c.picard_max_iters, log_slope)
        if E_guess is not None:
            E_guess = np.asarray(E_guess, dtype=float)
        elif state.conductor_voltage != 0 and V_next != state.conductor_voltage:
            # the capacitive part of the field follows the voltage instantly
            E_guess = state.E_mag * abs(V_next / state.conductor_voltage)
        else:
            E_guess = state.E_mag
        phi, iters, _ = picard.run(solve_with, E_guess)
        return _state(self.mesh, state.time + dt, phi, self.T, V_next, iters)

    def _linear_step(self, state, dt, V_next):
        # sigma does not depend on |E|: one solve, factorization reused while dt is unchanged
        if self._linear_sigma is None:
            self._linear_sigma = self.materials.conductivity(0.0, self.T_elem)
        if self._factor_cache is None or self._factor_cache[0] != dt:
            sys_ = self._system(dt, self._linear_sigma, state.phi, V_next)
            coupling = sys_.matrix[sys_.free][:, sys_.fixed].tocsr()
            self._factor_cache = (dt, fem.Factorization(sys_.reduced_matrix), sys_, coupling)
        _, lu, template, coupling = self._factor_cache
        _, values = self._bc(V_next)
        rhs = (self.A_eps @ state.phi) / dt
        x_free = lu.solve(rhs[template.free] - coupling @ values)
        phi = np.empty(self.mesh.n_nodes)
        phi[template.free] = x_free
        phi[template.fixed] = values
        return _state(self.mesh, state.time + dt, phi, self.T, V_next, 1)


def step_transient(mesh: Mesh, materials: MaterialAssignment, state: FieldState, dt: float,
                   V_next: float, controls: TransientControls = TransientControls()) -> FieldState:
    """One implicit Euler step from ``state`` to ``state.time + dt``."""
    return TransientStepper(mesh, materials, state.T, controls).step(state, dt, V_next)


@dataclass(eq=False)
class TransientResult:
    times: list = field(default_factory=list)
    voltages: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)  # name -> list of (E_mag, E_r, E_z, element)
    peaks: dict = field(default_factory=dict)  # region -> list of (E_max, element)
    states: list = field(default_factory=list)
    final_state: FieldState | None = None
    steady_state_time: float | None = None
    error: str | None = None

    def probe_series(self, name) -> np.ndarray:
        return np.array([rec[0] for rec in self.probes[name]])

    def peak_series(self, region) -> np.ndarray:
        return np.array([rec[0] for rec in self.peaks[region]])

    def state_at(self, t: float) -> FieldState:
        """Stored state with the largest time not exceeding ``t``."""
        best = None
        for s in self.states:
            if s.time <= t * (1 + 1e-12):
                best = s
        if best is None:
            raise LookupError(f"no stored state at or before t={t}")
        return best


def _probe_adjacency(mesh: Mesh, probes: dict) -> dict:
    adj = mesh.node_elements()
    return {name: np.array(sorted(adj[node]), dtype=np.int64) for name, node in probes.items()}


def run_transient(mesh: Mesh, materials: MaterialAssignment, waveform,
                  controls: TransientControls = TransientControls(), T=None,
                  thermal_coupling: bool = False, thermal_bc=None, initial_state: FieldState | None = None,
                  t0: float = 0.0, probes: dict | None = None, keep_states=True,
                  stop_at_steady_state: bool = True, on_step=None) -> TransientResult:
    """Adaptive backward-Euler run of the waveform from ``t0`` to ``controls.t_end``.

    The step grows by ``dt_growth`` while Picard needs at most 3 iterations, is
    capped by ``dt_max`` and by the waveform's ramp resolution, and always
    lands on waveform breakpoints, where it is reset to ``dt_initial``.
    ``keep_states`` may be True (all), False (none) or a callable
    ``(state) -> bool``.
    """
    c = controls
    stepper = TransientStepper(mesh, materials, T if initial_state is None else
                               (initial_state.T if T is None else T), c)
    if thermal_coupling:
        from .thermal import ThermalBoundary, joule_source, solve_heat
        thermal_bc = thermal_bc or ThermalBoundary()

    if initial_state is None:
        initial_state = solve_capacitive(mesh, materials, waveform.value(t0), stepper.T)
    state = FieldState(t0, initial_state.phi, initial_state.E, stepper.T,
                       initial_state.conductor_voltage, 0)

    probes = probes or {}
    adjacency = _probe_adjacency(mesh, probes)
    region_elems = {reg: np.flatnonzero(mesh.regions == reg) for reg in Region
                    if np.any(mesh.regions == reg)}
    res = TransientResult(probes={k: [] for k in probes}, peaks={reg: [] for reg in region_elems})
    history = []  # (time, E_mag, V) for steady-state detection

    def keep(s):
        return keep_states(s) if callable(keep_states) else bool(keep_states)

    def record(s, dt):
        Em = s.E_mag
        res.times.append(s.time)
        res.voltages.append(s.conductor_voltage)
        res.dts.append(dt)
        res.iterations.append(s.picard_iterations)
        for name, elems in adjacency.items():
            k = elems[int(np.argmax(Em[elems]))]
            res.probes[name].append((float(Em[k]), float(s.E.E_r[k]), float(s.E.E_z[k]), int(k)))
        for reg, elems in region_elems.items():
            k = elems[int(np.argmax(Em[elems]))]
            res.peaks[reg].append((float(Em[k]), int(k)))
        if keep(s):
            res.states.append(s)
        history.append((s.time, Em, s.conductor_voltage))
        if on_step is not None:
            on_step(s)

    record(state, 0.0)
    breakpoints = [b for b in waveform.breakpoints() if b > t0]
    last_break = max([b for b in waveform.breakpoints() if b <= t0], default=t0)
    dt = c.dt_initial
    t = t0
    eps_t = 1e-12
    next_check = t0

    while t < c.t_end * (1 - eps_t):
        upcoming = [b for b in breakpoints if b > t * (1 + eps_t) + 1e-300]
        next_break = upcoming[0] if upcoming else math.inf
        h = min(dt, c.dt_max, waveform.max_dt(t, c.ramp_steps))
        t_new = t + h
        landed = False
        for target in (next_break, c.t_end):
            if t_new >= target * (1 - 1e-9):
                t_new, landed = target, target == next_break
                break
        h = t_new - t
        V_new = waveform.value(t_new)
        try:
            new = stepper.step(state, h, V_new, _predict(history, h, V_new))
        except NoConvergence:
            h *= 0.5
            t_new, landed = t + h, False
            log.warning("step at t=%.4e s failed, retrying with dt=%.3e s", t, h)
            try:
                new = stepper.step(state, h, waveform.value(t_new))
            except NoConvergence as exc:
                res.error = str(exc)
                res.final_state = state
                exc.partial = res
                raise
        new = FieldState(t_new, new.phi, new.E, new.T, new.conductor_voltage, new.picard_iterations)
        if thermal_coupling:
            sigma = materials.conductivity(new.E_mag, stepper.T_elem)
            T_new = solve_heat(mesh, materials.thermal_conductivity, joule_source(sigma, new.E_mag),
                               thermal_bc)
            stepper.set_temperature(T_new)
            new = FieldState(new.time, new.phi, new.E, stepper.T, new.conductor_voltage,
                             new.picard_iterations)
        state, t = new, t_new
        record(state, h)
        log.info("t=%.6e s dt=%.3e s picard=%d V=%.6g", t, h, state.picard_iterations,
                 state.conductor_voltage)

        if landed:
            last_break = t
            dt = c.dt_initial
        elif state.picard_iterations <= 3:
            dt = h * c.dt_growth
        else:
            dt = h

        if stop_at_steady_state and not upcoming_after(breakpoints, t) and \
                waveform.constant_after(last_break) and t >= next_check:
            if _decade_change(history, t, last_break) < c.steady_state_tol:
                next_check = 2.0 * t
                if _matches_dc(mesh, materials, state, c):
                    res.steady_state_time = t
                    break

    res.final_state = state
    if res.states and res.states[-1] is not state and keep_states is not False:
        res.states.append(state)
    return res


def _predict(history, h, V_new):
    """Polynomial extrapolation of |E| through the last points at constant voltage, else None."""
    pts = []
    for tt, Em, V in reversed(history[-3:]):
        if V != V_new:
            break
        pts.append((tt, Em))
    if len(pts) < 2:
        return None
    t_new = pts[0][0] + h
    out = np.zeros_like(pts[0][1])
    for i, (ti, Ei) in enumerate(pts):
        w = 1.0
        for j, (tj, _) in enumerate(pts):
            if j != i:
                w *= (t_new - tj) / (ti - tj)
        out += w * Ei
    return np.maximum(out, 0.0)


def _matches_dc(mesh, materials, state, controls) -> bool:
    """True when |E| agrees with the resistive DC field to ``steady_state_tol``.

    Guards the per-decade test against early plateaus, where nothing has
    relaxed yet and |E| also changes little per decade.
    """
    dc = solve_resistive_dc(mesh, materials, state.conductor_voltage, state.T, controls,
                            E_start=state.E_mag)
    scale = float(np.max(dc.E_mag))
    if scale == 0:
        return float(np.max(state.E_mag)) == 0
    return float(np.max(np.abs(dc.E_mag - state.E_mag))) / scale < controls.steady_state_tol


def upcoming_after(breakpoints, t) -> bool:
    return any(b > t * (1 + 1e-12) for b in breakpoints)


def _decade_change(history, t, plateau_start) -> float:
    """Relative L-inf change of |E| between t/10 and t, inf if t/10 precedes the plateau."""
    t_ref = t / 10.0
    if t_ref < plateau_start or t_ref <= 0:
        return math.inf
    ref = None
    for tt, Em, _ in reversed(history):
        if tt <= t_ref:
            ref = (tt, Em)
            break
    if ref is None or ref[0] < plateau_start:
        return math.inf
    Em_now = history[-1][1]
    scale = float(np.max(Em_now))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(Em_now - ref[1]))) / scale
