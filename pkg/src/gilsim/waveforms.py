"""Conductor voltage waveforms for DC-on, polarity reversal and impulse on DC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

from scipy.optimize import brentq

from .errors import ConfigError, FitFailure

# the standard front time is 1/0.6 times the 30%-90% rise interval
_FRONT_LO, _FRONT_HI, _HALF = 0.3, 0.9, 0.5


def _shape(s, a):
    """Unnormalized double exponential in units of the tail constant; a = tau_front/tau_tail."""
    return math.exp(-s) - math.exp(-s / a)


def _peak_time(a):
    return a * math.log(a) / (a - 1.0)


def _front_tail(a):
    """Front time and time to half value (units of the tail constant) for ratio ``a``."""
    sp = _peak_time(a)
    gp = _shape(sp, a)

    def crossing(level, lo, hi):
        return brentq(lambda s: _shape(s, a) / gp - level, lo, hi, xtol=1e-15, rtol=1e-15)

    t30 = crossing(_FRONT_LO, 0.0, sp)
    t90 = crossing(_FRONT_HI, 0.0, sp)
    hi = sp + 1.0
    while _shape(hi, a) / gp > _HALF:
        hi *= 2.0
    t50 = crossing(_HALF, sp, hi)
    front = (t90 - t30) / (_FRONT_HI - _FRONT_LO)
    origin = t30 - _FRONT_LO * front
    return front, t50 - origin


@lru_cache(maxsize=64)
def fit_double_exponential(front: float, tail: float):
    """Return ``(k, tau_tail, tau_front)`` of ``k*(exp(-t/tau_tail) - exp(-t/tau_front))``.

    The fitted curve has unit peak, the given front time (30%-90% construction)
    and the given time to half value measured from the virtual origin.
    """
    if not (front > 0 and tail > 0) or front >= tail:
        raise FitFailure(f"front time {front} must be positive and below tail time {tail}")
    target = front / tail
    a_lo, a_hi = 1e-9, 0.5

    def mismatch(a):
        f, t = _front_tail(a)
        return f / t - target

    lo_val, hi_val = mismatch(a_lo), mismatch(a_hi)
    if lo_val * hi_val > 0:
        raise FitFailure(f"front/tail ratio {target:.4g} cannot be bracketed")
    a = brentq(mismatch, a_lo, a_hi, xtol=1e-16, rtol=1e-15, maxiter=500)
    _, half = _front_tail(a)
    tau_tail = tail / half
    tau_front = a * tau_tail
    k = 1.0 / _shape(_peak_time(a), a)
    return k, tau_tail, tau_front


def impulse_shape(t, front, tail):
    """Unit-peak impulse ``k*(exp(-t/tau1) - exp(-t/tau2))`` for ``t >= 0``, 0 before."""
    if t < 0:
        return 0.0
    k, tau1, tau2 = fit_double_exponential(front, tail)
    return k * (math.exp(-t / tau1) - math.exp(-t / tau2))


class Waveform:
    """Interface used by the transient runner."""

    def value(self, t: float) -> float:
        raise NotImplementedError

    def breakpoints(self) -> list:
        return []

    def max_dt(self, t: float, ramp_steps: int) -> float:
        return math.inf

    def constant_after(self, t: float) -> bool:
        return False

    def __call__(self, t):
        return self.value(t)


@dataclass(frozen=True)
class Step(Waveform):
    """Voltage ``V`` held from t = 0 on."""

    V: float

    def value(self, t):
        return float(self.V)

    def constant_after(self, t):
        return True


@dataclass(frozen=True)
class DCOn(Waveform):
    V_dc: float = 320e3
    t_ramp: float = 0.01
    shape: str = "linear"

    def __post_init__(self):
        if not self.t_ramp > 0:
            raise ConfigError("t_ramp must be positive")
        if self.shape not in ("linear", "smoothstep"):
            raise ConfigError(f"unknown ramp shape {self.shape!r}")

    def value(self, t):
        if t >= self.t_ramp:
            return float(self.V_dc)
        x = max(t, 0.0) / self.t_ramp
        if self.shape == "smoothstep":
            x = x * x * (3.0 - 2.0 * x)
        return self.V_dc * x

    def breakpoints(self):
        return [self.t_ramp]

    def max_dt(self, t, ramp_steps):
        return self.t_ramp / ramp_steps if t < self.t_ramp else math.inf

    def constant_after(self, t):
        return t >= self.t_ramp


@dataclass(frozen=True)
class PolarityReversal(Waveform):
    V_dc: float = 320e3
    t_hold: float = 0.0
    t_switch: float = 0.1

    def __post_init__(self):
        if not (self.t_hold >= 0 and self.t_switch > 0):
            raise ConfigError("t_hold must be >= 0 and t_switch > 0")

    def value(self, t):
        if t <= self.t_hold:
            return float(self.V_dc)
        if t >= self.t_hold + self.t_switch:
            return -float(self.V_dc)
        return self.V_dc * (1.0 - 2.0 * (t - self.t_hold) / self.t_switch)

    def breakpoints(self):
        return [self.t_hold, self.t_hold + self.t_switch]

    def max_dt(self, t, ramp_steps):
        if self.t_hold <= t < self.t_hold + self.t_switch:
            return self.t_switch / ramp_steps
        return math.inf

    def constant_after(self, t):
        return t >= self.t_hold + self.t_switch


@dataclass(frozen=True)
class LightningOnDC(Waveform):
    V_dc: float = 320e3
    V_peak: float = 1175e3
    front: float = 1.2e-6
    tail: float = 50e-6
    t_apply: float = 0.0
    # steps per front time while the impulse rises
    front_steps: int = 20
    _fit: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_fit", fit_double_exponential(self.front, self.tail))

    @property
    def peak_time(self) -> float:
        _, tau1, tau2 = self._fit
        return self.t_apply + tau1 * tau2 * math.log(tau1 / tau2) / (tau1 - tau2)

    def value(self, t):
        if t < self.t_apply:
            return float(self.V_dc)
        k, tau1, tau2 = self._fit
        s = t - self.t_apply
        return self.V_dc + self.V_peak * k * (math.exp(-s / tau1) - math.exp(-s / tau2))

    def breakpoints(self):
        # landing on the crest records the exact peak voltage
        return [self.t_apply, self.peak_time]

    def max_dt(self, t, ramp_steps):
        if self.t_apply <= t < self.t_apply + 3.0 * self.front:
            return self.front / self.front_steps
        return math.inf


def waveform_value(w: Waveform, t: float) -> float:
    if t < 0:
        raise ValueError("waveforms are defined for t >= 0")
    return w.value(t)
