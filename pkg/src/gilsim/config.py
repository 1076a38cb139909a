"""JSON scenario configuration: defaults, typed parsing and the canonical hash.

Every physical input is SI. Unknown keys and wrong types raise ``ConfigError``
naming the dotted key path.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import types
import typing
from pathlib import Path

from .eqs import TransientControls
from .errors import ConfigError
from .geometry import GeometryParams, MeshControls
from .materials import (K_B, ConstantConductivity, EpoxyConductivityParams, GradingProfile,
                        MaterialConfig, RegionMaterial, Sf6ConductivityParams, sf6_conductivity)
from .scenarios import ScenarioConfig, ScenarioKind, Variant
from .thermal import ThermalBoundary
from .waveforms import DCOn, LightningOnDC, PolarityReversal

DEFAULTS_NOTE = ("Material constants are plausible reference defaults chosen for illustration; "
                 "they are not measured values.")

_SF6_SHAPE = dict(alpha=0.5, beta=0.5, gamma=1.0, E_x=1e7, zeta_exp=1.0, rho_shape=1.0,
                  eps_shape=1.0, E_y=1e7, t_exp=1.0, zeta_press=1e-7, nu=0.01)
_CONDUCTIVITY_MODELS = {
    "epoxy": EpoxyConductivityParams,
    "sf6": Sf6ConductivityParams,
    "constant": ConstantConductivity,
}
_WAVEFORMS = {
    ScenarioKind.DC_ON: DCOn,
    ScenarioKind.POLARITY_REVERSAL: PolarityReversal,
    ScenarioKind.LIGHTNING: LightningOnDC,
}
_SECTIONS = ("scenario", "geometry", "mesh", "materials", "variants", "waveform", "transient",
             "thermal", "output", "note")


def _reference_sf6_scale(sigma_ref=1e-18, P=0.6e6, T=300.0):
    # prefactor giving sigma_ref at zero field, 0.6 MPa and 300 K
    unit = Sf6ConductivityParams(1.0, **_SF6_SHAPE)
    return sigma_ref / float(sf6_conductivity(0.0, P, T, unit))


def _fields(cls, exclude=()) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name.startswith("_") or f.name in exclude:
            continue
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
    return out


def default_config(kind: str | ScenarioKind = ScenarioKind.DC_ON) -> dict:
    kind = ScenarioKind(kind)
    waveform = _fields(_WAVEFORMS[kind])
    if kind is ScenarioKind.LIGHTNING:
        waveform.pop("front_steps", None)
    transient = _fields(TransientControls)
    return {
        "note": DEFAULTS_NOTE,
        "scenario": {"name": f"{kind.value}-default", "kind": kind.value},
        "geometry": _fields(GeometryParams),
        "mesh": {**_fields(MeshControls), "refine": 0},
        "materials": {
            "pressure": 0.6e6,
            "gas": {
                "eps_r": 1.0,
                "thermal_conductivity": 0.014,
                "conductivity": {"model": "sf6", "kappa_sf6": _reference_sf6_scale(), **_SF6_SHAPE},
            },
            "spacer": {
                "eps_r": 5.0,
                "thermal_conductivity": 0.6,
                # 1e-16 S/m at 300 K and zero field
                "conductivity": {"model": "epoxy", "kappa0": 1e-16 * math.exp(0.095 / (K_B * 300.0)),
                                 "W_A": 0.095, "theta": 1e-7},
            },
        },
        "variants": [
            {"name": "uniform", "profiles": []},
            {"name": "fgm", "profiles": [
                {"kind": "saddle", "scope": "conductivity", "min_multiplier": 1.0, "max_multiplier": 10.0},
                {"kind": "piecewise", "scope": "permittivity",
                 "control_points": [[0.0, 1.6], [0.3, 1.0], [0.7, 1.0], [1.0, 1.6]]},
            ]},
        ],
        "waveform": waveform,
        "transient": transient,
        "thermal": _fields(ThermalBoundary),
        "output": {"snapshots": True, "impulse_window": 500e-6},
    }


# -- typed extraction ----------------------------------------------------------------------

def _coerce(value, tp, path):
    """Check ``value`` against a simple annotation; ints are accepted for floats."""
    origin = typing.get_origin(tp)
    if origin is typing.Union or origin is types.UnionType:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {type(value).__name__}")
        if not math.isfinite(value):
            raise ConfigError(f"{path}: expected a finite number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer, got {type(value).__name__}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected boolean, got {type(value).__name__}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {type(value).__name__}")
        return value
    return value


def _section(data, path) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected object, got {type(data).__name__}")
    return data


def _build(cls, data, path, exclude=()):
    data = _section(data, path)
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls) if not f.name.startswith("_")}
    for key in data:
        if key not in known or key in exclude:
            raise ConfigError(f"{path}.{key}: unknown key (expected one of {sorted(set(known) - set(exclude))})")
    kwargs = {}
    for name, f in known.items():
        if name in exclude:
            continue
        if name in data:
            kwargs[name] = _coerce(data[name], hints[name], f"{path}.{name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{path}.{name}: required key missing")
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _conductivity(data, path):
    data = dict(_section(data, path))
    model = data.pop("model", None)
    if model not in _CONDUCTIVITY_MODELS:
        raise ConfigError(f"{path}.model: expected one of {sorted(_CONDUCTIVITY_MODELS)}, got {model!r}")
    return _build(_CONDUCTIVITY_MODELS[model], data, path)


def _region(data, path):
    data = _section(data, path)
    allowed = {"eps_r", "thermal_conductivity", "conductivity"}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key (expected one of {sorted(allowed)})")
    for key in allowed:
        if key not in data:
            raise ConfigError(f"{path}.{key}: required key missing")
    try:
        return RegionMaterial(_coerce(data["eps_r"], float, f"{path}.eps_r"),
                              _conductivity(data["conductivity"], f"{path}.conductivity"),
                              _coerce(data["thermal_conductivity"], float, f"{path}.thermal_conductivity"))
    except ConfigError as exc:
        if str(exc).startswith(path):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def _profile(data, path):
    data = _section(data, path)
    pts = data.get("control_points", [])
    if not isinstance(pts, list) or not all(isinstance(p, list) and len(p) == 2 for p in pts):
        raise ConfigError(f"{path}.control_points: expected list of [u, multiplier] pairs")
    for i, p in enumerate(pts):
        for j, v in enumerate(p):
            _coerce(v, float, f"{path}.control_points.{i}.{j}")
    return _build(GradingProfile, {**data, "control_points": tuple(tuple(p) for p in pts)}, path)


def _variants(data, path):
    if not isinstance(data, list) or not data:
        raise ConfigError(f"{path}: expected a non-empty list of variants")
    out = []
    for i, v in enumerate(data):
        vp = f"{path}.{i}"
        v = _section(v, vp)
        for key in v:
            if key not in ("name", "profiles"):
                raise ConfigError(f"{vp}.{key}: unknown key (expected one of ['name', 'profiles'])")
        name = _coerce(v.get("name"), str, f"{vp}.name")
        profs = v.get("profiles", [])
        if not isinstance(profs, list):
            raise ConfigError(f"{vp}.profiles: expected list")
        out.append(Variant(name, tuple(_profile(p, f"{vp}.profiles.{j}") for j, p in enumerate(profs))))
    if len({v.name for v in out}) != len(out):
        raise ConfigError(f"{path}: variant names must be unique")
    return tuple(out)


def resolve(data: dict) -> dict:
    """Defaults for the scenario kind, overlaid with ``data`` section by section."""
    data = _section(data, "config")
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section (expected one of {list(_SECTIONS)})")
    scen = _section(data.get("scenario", {}), "scenario")
    kind = scen.get("kind", ScenarioKind.DC_ON.value)
    try:
        kind = ScenarioKind(kind)
    except ValueError:
        raise ConfigError(f"scenario.kind: expected one of {[k.value for k in ScenarioKind]}, "
                          f"got {kind!r}") from None
    out = default_config(kind)
    for key, value in data.items():
        if key in ("variants", "note"):
            out[key] = copy.deepcopy(value)
        elif key == "materials":
            mats = _section(value, "materials")
            for sub, v in mats.items():
                if sub in ("gas", "spacer") and isinstance(v, dict):
                    region = dict(out["materials"][sub])
                    if "conductivity" in v and isinstance(v["conductivity"], dict):
                        cond = v["conductivity"]
                        if cond.get("model", region["conductivity"]["model"]) == region["conductivity"]["model"]:
                            region["conductivity"] = {**region["conductivity"], **cond}
                        else:
                            region["conductivity"] = dict(cond)
                    region.update({k: x for k, x in v.items() if k != "conductivity"})
                    out["materials"][sub] = region
                else:
                    out["materials"][sub] = copy.deepcopy(v)
        else:
            out[key] = {**out[key], **_section(value, key)}
    return out


def parse_config(data: dict, output_dir=None) -> ScenarioConfig:
    cfg = resolve(data)
    scen = cfg["scenario"]
    for key in scen:
        if key not in ("name", "kind"):
            raise ConfigError(f"scenario.{key}: unknown key (expected one of ['kind', 'name'])")
    kind = ScenarioKind(scen["kind"])
    name = _coerce(scen.get("name", kind.value), str, "scenario.name")

    mesh_data = dict(_section(cfg["mesh"], "mesh"))
    refine = _coerce(mesh_data.pop("refine", 0), int, "mesh.refine")
    if refine < 0:
        raise ConfigError("mesh.refine: must be >= 0")
    mats = _section(cfg["materials"], "materials")
    for key in mats:
        if key not in ("pressure", "gas", "spacer"):
            raise ConfigError(f"materials.{key}: unknown key (expected one of ['gas', 'pressure', 'spacer'])")
    pressure = _coerce(mats.get("pressure", 0.6e6), float, "materials.pressure")
    if not pressure > 0:
        raise ConfigError("materials.pressure: must be positive")
    output = _section(cfg["output"], "output")
    for key in output:
        if key not in ("snapshots", "impulse_window"):
            raise ConfigError(f"output.{key}: unknown key (expected one of ['impulse_window', 'snapshots'])")
    window = _coerce(output.get("impulse_window", 500e-6), float, "output.impulse_window")
    if not window > 0:
        raise ConfigError("output.impulse_window: must be positive")

    return ScenarioConfig(
        name=name,
        kind=kind,
        waveform=_build(_WAVEFORMS[kind], cfg["waveform"], "waveform", exclude=("front_steps",)),
        materials=MaterialConfig(_region(mats.get("gas"), "materials.gas"),
                                 _region(mats.get("spacer"), "materials.spacer"), pressure),
        variants=_variants(cfg["variants"], "variants"),
        geometry=_build(GeometryParams, cfg["geometry"], "geometry"),
        mesh=_build(MeshControls, mesh_data, "mesh"),
        controls=_build(TransientControls, cfg["transient"], "transient"),
        thermal=_build(ThermalBoundary, cfg["thermal"], "thermal"),
        refine=refine,
        impulse_window=window,
        output_dir=output_dir,
        write_snapshots=_coerce(output.get("snapshots", True), bool, "output.snapshots"),
    )


def load_json(path) -> dict:
    """Read a config file; syntax errors report line and column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def config_hash(data: dict) -> str:
    """sha256 of the resolved config in canonical JSON form."""
    canon = json.dumps(_numbers_as_float(resolve(data)), sort_keys=True, separators=(",", ":"),
                       allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def _numbers_as_float(obj):
    # 1 and 1.0 are the same input
    if isinstance(obj, dict):
        return {k: _numbers_as_float(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_numbers_as_float(v) for v in obj]
    if isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    return obj


def set_path(data: dict, path: str, value):
    """Copy of ``data`` with the dotted ``path`` (list indices as integers) set to ``value``."""
    out = resolve(data)
    keys = path.split(".")
    node = out
    for i, key in enumerate(keys[:-1]):
        node = _step(node, key, ".".join(keys[:i + 1]))
    last = keys[-1]
    if isinstance(node, list):
        idx = _index(node, last, path)
        old = node[idx]
        node[idx] = value
    elif isinstance(node, dict):
        # a key left at its dataclass default may be absent; parsing validates it
        old = node.get(last, value)
        node[last] = value
    else:
        raise ConfigError(f"{path}: parent is not an object or list")
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise ConfigError(f"{path}: sweep parameter must address a numeric field")
    return out


def _index(node, key, path):
    try:
        idx = int(key)
    except ValueError:
        raise ConfigError(f"{path}: list index expected, got {key!r}") from None
    if not -len(node) <= idx < len(node):
        raise ConfigError(f"{path}: index {idx} out of range")
    return idx


def _step(node, key, path):
    if isinstance(node, list):
        return node[_index(node, key, path)]
    if isinstance(node, dict):
        if key not in node:
            raise ConfigError(f"{path}: no such key")
        return node[key]
    raise ConfigError(f"{path}: not an object or list")
