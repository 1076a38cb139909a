"""Scenario orchestration: DC-on, polarity reversal and lightning impulse on DC.

Each variant (a set of grading profiles) runs on one shared mesh. DC plateaus
use the electrothermal steady temperature, frozen during the transient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import postproc
from .eqs import TransientControls, TransientResult, run_transient, solve_capacitive
from .errors import GilsimError, MeshMismatch
from .fem import ElementField
from .geometry import GeometryParams, MeshControls, Region, build_geometry, generate_mesh, refine_uniform
from .materials import MaterialConfig, assign_materials
from .thermal import ThermalBoundary, couple_electrothermal
from .waveforms import DCOn, LightningOnDC, PolarityReversal

log = logging.getLogger(__name__)

# steady |E| at B may exceed its ramp-end value by this factor before counting as inversion
INVERSION_MARGIN = 1.2
IMPULSE_DT_INITIAL = 1e-8


class ScenarioKind(str, Enum):
    DC_ON = "dc-on"
    POLARITY_REVERSAL = "polarity-reversal"
    LIGHTNING = "lightning"


@dataclass(frozen=True)
class Variant:
    name: str
    profiles: tuple = ()


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: ScenarioKind
    waveform: object
    materials: MaterialConfig
    variants: tuple
    geometry: GeometryParams = GeometryParams()
    mesh: MeshControls = MeshControls()
    controls: TransientControls = TransientControls()
    thermal: ThermalBoundary = ThermalBoundary()
    refine: int = 0
    # impulse runs stop this long after t_apply
    impulse_window: float = 500e-6
    output_dir: Path | None = None
    write_snapshots: bool = True

    def __post_init__(self):
        if not self.variants:
            raise ValueError("a scenario needs at least one variant")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError("variant names must be unique")


@dataclass(eq=False)
class VariantResult:
    name: str
    status: str = "ok"
    error: str | None = None
    transient: TransientResult | None = None
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    # polarity reversal: element |E| from the superposition estimate
    estimate: np.ndarray | None = None


@dataclass(eq=False)
class ScenarioResult:
    config: ScenarioConfig
    mesh: object
    variants: dict  # name -> VariantResult, in config order
    reductions: list
    summary: dict
    files: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v.status == "ok" for v in self.variants.values())

    def report_lines(self) -> list:
        out = [f"scenario {self.config.name} ({self.config.kind.value})"]
        for v in self.variants.values():
            if v.status != "ok":
                out.append(f"  {v.name}: FAILED ({v.error})")
                continue
            s = v.summary
            out.append(f"  {v.name}: max |E| {s['max_E_V_per_m'] / postproc.KV_PER_MM:.2f} kV/mm "
                       f"near {s['location_junction']}")
        for r in self.reductions:
            out.append(f"  {r['test']} vs {r['baseline']}: reduction {r['reduction_percent']:.1f} %")
        return out


def estimate_polarity_reversal(E_AC: ElementField, E_DC: ElementField) -> np.ndarray:
    """Element |E| right after an ideal reversal: ``abs(2 |E_AC| - |E_DC|)``."""
    a = E_AC.magnitude if isinstance(E_AC, ElementField) else np.asarray(E_AC)
    d = E_DC.magnitude if isinstance(E_DC, ElementField) else np.asarray(E_DC)
    if a.shape != d.shape:
        raise MeshMismatch(f"field sizes differ: {a.shape} vs {d.shape}")
    return np.abs(2.0 * a - d)


def nearest_junction(mesh, element: int) -> str:
    c = mesh.centroids()[element]
    if not mesh.junctions:
        return ""
    return min(sorted(mesh.junctions), key=lambda n: float(np.hypot(*(mesh.nodes[mesh.junctions[n]] - c))))


def build_mesh(config: ScenarioConfig):
    mesh = generate_mesh(build_geometry(config.geometry), config.mesh)
    if config.refine:
        mesh = refine_uniform(mesh, config.refine)
    return mesh


def _probes(mesh) -> dict:
    out = {}
    if mesh.triple_point_A is not None:
        out["A"] = mesh.triple_point_A
    if mesh.triple_point_B is not None:
        out["B"] = mesh.triple_point_B
    return out


def _decade_keeper():
    """Keep the first state of each time decade, and t = 0."""
    seen = set()

    def keep(state):
        key = -math.inf if state.time <= 0 else math.floor(math.log10(state.time))
        if key in seen:
            return False
        seen.add(key)
        return True

    return keep


def _peak_over_run(res: TransientResult, mesh, region=None):
    """Largest recorded |E| over all steps (optionally one region): (value, element, step)."""
    best = (-1.0, 0, 0)
    for reg, series in res.peaks.items():
        if region is not None and reg != region:
            continue
        for i, (val, elem) in enumerate(series):
            if val > best[0] or (val == best[0] and elem < best[1]):
                best = (val, elem, i)
    return best


def _location(mesh, elem):
    c = mesh.centroids()[elem]
    return float(c[0]), float(c[1]), nearest_junction(mesh, elem)


def triple_point_label(mesh, junction: str) -> str:
    """'A' or 'B' when ``junction`` is that triple point, else ''."""
    node = mesh.junctions.get(junction)
    if node is None:
        return ""
    if node == mesh.triple_point_A:
        return "A"
    return "B" if node == mesh.triple_point_B else ""


def _spacer_location(res, mesh, i):
    if Region.SPACER not in res.peaks:
        return None
    val, elem = res.peaks[Region.SPACER][i]
    r, z, junction = _location(mesh, elem)
    return {"E_V_per_m": val, "element": elem, "r_m": r, "z_m": z, "junction": junction,
            "triple_point": triple_point_label(mesh, junction)}


def _run_variant(config: ScenarioConfig, mesh, variant: Variant) -> VariantResult:
    mat = assign_materials(mesh, config.materials, variant.profiles)
    probes = _probes(mesh)
    w = config.waveform
    c = config.controls
    extra = {}

    if config.kind is ScenarioKind.DC_ON:
        cs = couple_electrothermal(mesh, mat, w.V_dc, config.thermal, controls=c)
        res = run_transient(mesh, mat, w, c, T=cs.T, probes=probes, keep_states=_decade_keeper())
        extra["thermal_iterations"] = cs.iterations
    else:
        V0 = w.value(0.0)
        cs = couple_electrothermal(mesh, mat, V0, config.thermal, controls=c)
        if config.kind is ScenarioKind.LIGHTNING:
            c = replace(c, dt_initial=IMPULSE_DT_INITIAL, t_end=w.t_apply + config.impulse_window)
            res = run_transient(mesh, mat, w, c, T=cs.T, initial_state=cs.state, probes=probes,
                                keep_states=_decade_keeper(), stop_at_steady_state=False)
        else:
            res = run_transient(mesh, mat, w, c, T=cs.T, initial_state=cs.state, probes=probes,
                                keep_states=_decade_keeper())
            E_ac = solve_capacitive(mesh, mat, w.V_dc, cs.T).E
            est = estimate_polarity_reversal(E_ac, cs.state.E)
            k = int(np.argmax(est))
            t_rev = w.t_hold + w.t_switch
            i_rev = int(np.searchsorted(res.times, t_rev * (1 - 1e-12)))
            extra["estimate_max_E_V_per_m"] = float(est[k])
            extra["estimate_element"] = k
            extra["after_reversal_max_E_V_per_m"] = max(v[i_rev][0] for v in res.peaks.values())
            extra["estimate"] = est
        extra["thermal_iterations"] = cs.iterations

    out = VariantResult(variant.name, transient=res)
    val, elem, step = _peak_over_run(res, mesh)
    r, z, junction = _location(mesh, elem)
    final = res.final_state
    fmax, felem, _ = postproc.max_field(final, mesh)
    s = {
        "name": variant.name,
        "status": "ok",
        "max_E_V_per_m": val,
        "max_E_time_s": res.times[step],
        "location_r_m": r,
        "location_z_m": z,
        "location_junction": junction,
        "final_time_s": final.time,
        "final_max_E_V_per_m": fmax,
        "final_location_junction": nearest_junction(mesh, felem),
        "steady_state_time_s": res.steady_state_time,
        "n_steps": len(res.times) - 1,
        "picard_iterations": int(sum(res.iterations)),
        "thermal_iterations": extra["thermal_iterations"],
        "peak_conductor_voltage_V": float(max(res.voltages, key=abs)),
    }
    for name in probes:
        s[f"E_{name}_final_V_per_m"] = res.probes[name][-1][0]
        s[f"E_{name}_max_V_per_m"] = float(res.probe_series(name).max())
    s["spacer_final"] = _spacer_location(res, mesh, len(res.times) - 1)

    if config.kind is ScenarioKind.DC_ON:
        i_ramp = int(np.searchsorted(res.times, w.t_ramp * (1 - 1e-12)))
        i_ramp = min(i_ramp, len(res.times) - 1)
        s["ramp_end_time_s"] = res.times[i_ramp]
        s["spacer_ramp_end"] = _spacer_location(res, mesh, i_ramp)
        if "B" in probes:
            b_ramp = res.probes["B"][i_ramp][0]
            s["E_B_ramp_end_V_per_m"] = b_ramp
            s["inversion_prevented"] = bool(s["E_B_final_V_per_m"] <= INVERSION_MARGIN * b_ramp)
    elif config.kind is ScenarioKind.POLARITY_REVERSAL:
        for key in ("estimate_max_E_V_per_m", "estimate_element", "after_reversal_max_E_V_per_m"):
            s[key] = extra[key]
        out.estimate = extra["estimate"]
    out.summary = s
    return out


def _export_variant(config, mesh, vr: VariantResult, out_dir: Path):
    res = vr.transient
    probe_name = f"probes_{vr.name}.csv"
    cols = {"time_s": res.times}
    for name in ("A", "B"):
        if name in res.probes:
            cols[f"E_{name}_V_per_m"] = res.probe_series(name)
    cols["V_conductor_V"] = res.voltages
    postproc.export_csv(cols, out_dir / probe_name)
    files = [probe_name]
    if config.write_snapshots:
        snap_dir = out_dir / vr.name
        snap_dir.mkdir(parents=True, exist_ok=True)
        for i, state in enumerate(res.states):
            name = postproc.snapshot_name(i, state.time)
            postproc.export_vtk(state, mesh, snap_dir / name)
            files.append(f"{vr.name}/{name}")
    vr.files = files
    vr.summary["probe_files"] = [probe_name]
    vr.summary["snapshot_files"] = files[1:]


def _reductions(variants: list) -> list:
    ok = [v for v in variants if v.status == "ok"]
    if len(ok) < 2 or ok[0] is not variants[0]:
        return []
    base = ok[0].summary
    out = []
    for v in ok[1:]:
        s = v.summary
        entry = postproc.Comparison(
            base["name"], s["name"], base["max_E_V_per_m"], s["max_E_V_per_m"],
            (base["location_r_m"], base["location_z_m"]), (s["location_r_m"], s["location_z_m"]),
        ).as_dict()
        for probe_name in ("A", "B"):
            key = f"E_{probe_name}_final_V_per_m"
            if key in base and base[key] > 0:
                entry[f"reduction_{key[:-8]}_percent"] = postproc.reduction_percent(base[key], s[key])
        out.append(entry)
    return out


def run_scenario(config: ScenarioConfig, mesh=None) -> ScenarioResult:
    """Run every variant on one mesh; a failing variant is recorded, not raised."""
    mesh = build_mesh(config) if mesh is None else mesh
    out_dir = Path(config.output_dir) if config.output_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for variant in config.variants:
        log.info("scenario %s: variant %s", config.name, variant.name)
        try:
            vr = _run_variant(config, mesh, variant)
            if out_dir is not None:
                _export_variant(config, mesh, vr, out_dir)
        except GilsimError as exc:
            log.error("variant %s failed: %s", variant.name, exc)
            partial = getattr(exc, "partial", None)
            vr = VariantResult(variant.name, "failed", f"{exc.code}: {exc}",
                               partial if isinstance(partial, TransientResult) else None,
                               {"name": variant.name, "status": "failed", "error": f"{exc.code}: {exc}",
                                "error_code": exc.code})
        results.append(vr)

    reductions = _reductions(results)
    summary = {
        "scenario": config.name,
        "kind": config.kind.value,
        "mesh": mesh.stats(),
        "variants": [vr.summary for vr in results],
        "reductions": reductions,
    }
    files = []
    if out_dir is not None:
        postproc.write_json(summary, out_dir / "summary.json")
        files = ["summary.json"] + [f for vr in results for f in vr.files]
    return ScenarioResult(config, mesh, {vr.name: vr for vr in results}, reductions, summary, files)


def default_waveform(kind: ScenarioKind):
    if kind is ScenarioKind.DC_ON:
        return DCOn()
    if kind is ScenarioKind.POLARITY_REVERSAL:
        return PolarityReversal()
    return LightningOnDC()
