"""Probes, peak fields, reduction metrics and file exports (VTK legacy ASCII, CSV, JSON)."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyRegion, ExportError, OutOfDomain
from .geometry import Mesh, Region

KV_PER_MM = 1e6  # V/m per kV/mm
_POINT_TOL = 1e-12
_FLOAT = "%.17g"  # round-trips every finite double


@dataclass(frozen=True)
class ProbeRecord:
    time: float
    probe_id: str
    E_mag: float
    E_r: float
    E_z: float
    region: Region
    element: int


def _containing(mesh: Mesh, point) -> np.ndarray:
    """Elements whose closure contains ``point`` (several on edges and vertices)."""
    r, z = float(point[0]), float(point[1])
    p = mesh.nodes[mesh.triangles]
    scale = max(float(np.ptp(mesh.nodes[:, 0])), float(np.ptp(mesh.nodes[:, 1])))
    tol = -_POINT_TOL * scale * scale
    lam = []
    for i in range(3):
        a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
        lam.append(0.5 * ((b[:, 0] - a[:, 0]) * (z - a[:, 1]) - (b[:, 1] - a[:, 1]) * (r - a[:, 0])))
    lam = np.stack(lam, axis=1)
    return np.flatnonzero(np.all(lam >= tol, axis=1))


def _probe_elements(mesh: Mesh, where) -> np.ndarray:
    if isinstance(where, (int, np.integer)):
        if not 0 <= where < mesh.n_nodes:
            raise OutOfDomain(f"node {where} is not in the mesh")
        return np.array(sorted(mesh.node_elements()[int(where)]), dtype=np.int64)
    elems = _containing(mesh, where)
    if len(elems) == 0:
        raise OutOfDomain(f"point {tuple(map(float, where))} lies outside the mesh")
    return elems


def probe(state, mesh: Mesh, where, probe_id: str = "") -> ProbeRecord:
    """Max |E| over the elements adjacent to a node or containing a point ``(r, z)``.

    Ties go to the lowest element id.
    """
    elems = _probe_elements(mesh, where)
    Em = state.E_mag[elems]
    k = int(elems[int(np.argmax(Em))])
    return ProbeRecord(float(state.time), probe_id, float(state.E_mag[k]), float(state.E.E_r[k]),
                       float(state.E.E_z[k]), Region(int(mesh.regions[k])), k)


def max_field(state, mesh: Mesh, regions=None):
    """``(|E|max, element, centroid)`` over elements in ``regions`` (default: all)."""
    regions = list(Region) if regions is None else [Region(r) for r in np.atleast_1d(regions)]
    elems = np.flatnonzero(np.isin(mesh.regions, [int(r) for r in regions]))
    if len(elems) == 0:
        raise EmptyRegion(f"no elements in regions {[r.name for r in regions]}")
    Em = np.asarray(state.E_mag if hasattr(state, "E_mag") else state)[elems]
    # argmax returns the first maximum, elems is ascending
    k = int(elems[int(np.argmax(Em))])
    return float(Em.max()), k, tuple(float(c) for c in mesh.centroids()[k])


def reduction_percent(baseline: float, test: float) -> float:
    if baseline == 0:
        raise ZeroDivisionError("baseline field is zero")
    return (1.0 - test / baseline) * 100.0


@dataclass(frozen=True)
class Comparison:
    baseline: str
    test: str
    baseline_max: float
    test_max: float
    baseline_location: tuple
    test_location: tuple

    @property
    def reduction(self) -> float:
        return reduction_percent(self.baseline_max, self.test_max)

    def as_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "test": self.test,
            "baseline_max_E_V_per_m": self.baseline_max,
            "test_max_E_V_per_m": self.test_max,
            "baseline_location_m": list(self.baseline_location),
            "test_location_m": list(self.test_location),
            "reduction_percent": self.reduction,
        }


@dataclass
class ReductionReport:
    scenario: str
    comparisons: list = field(default_factory=list)

    def lines(self) -> list:
        out = [f"scenario {self.scenario}"]
        for c in self.comparisons:
            out.append(f"  {c.test} vs {c.baseline}: {c.test_max / KV_PER_MM:.2f} kV/mm vs "
                       f"{c.baseline_max / KV_PER_MM:.2f} kV/mm, reduction {c.reduction:.1f} %")
        return out


def _io_error(path, exc):
    return ExportError(f"cannot write {path}: {exc}")


def _write_grid(fh, mesh: Mesh, title: str):
    n, m = mesh.n_nodes, mesh.n_triangles
    fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {n} double\n")
    np.savetxt(fh, np.column_stack([mesh.nodes, np.zeros(n)]), fmt=_FLOAT)
    fh.write(f"CELLS {m} {4 * m}\n")
    np.savetxt(fh, np.column_stack([np.full(m, 3), mesh.triangles]), fmt="%d")
    fh.write(f"CELL_TYPES {m}\n")
    np.savetxt(fh, np.full(m, 5), fmt="%d")  # VTK_TRIANGLE


def _scalars(fh, name, values, fmt=_FLOAT, kind="double"):
    fh.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
    np.savetxt(fh, np.asarray(values), fmt=fmt)


def export_vtk(state, mesh: Mesh, path, title: str = "gilsim field"):
    """Legacy ASCII unstructured grid with (r, z) as (x, y).

    POINT_DATA phi and T, CELL_DATA E_mag and region. ``state=None`` writes the
    mesh and regions only.
    """
    path = Path(path)
    try:
        with open(path, "w", newline="\n") as fh:
            _write_grid(fh, mesh, title)
            if state is not None:
                T = state.T if getattr(state, "T", None) is not None else np.zeros(mesh.n_nodes)
                fh.write(f"POINT_DATA {mesh.n_nodes}\n")
                _scalars(fh, "phi", np.asarray(state.phi, dtype=float))
                _scalars(fh, "T", np.asarray(T, dtype=float))
            fh.write(f"CELL_DATA {mesh.n_triangles}\n")
            if state is not None:
                _scalars(fh, "E_mag", np.asarray(state.E_mag, dtype=float))
            _scalars(fh, "region", mesh.regions, fmt="%d", kind="int")
    except OSError as exc:
        raise _io_error(path, exc) from exc
    return path


def snapshot_name(index: int, time: float) -> str:
    return f"snapshot_{index:06d}_{time:.6e}.vtk"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    return _FLOAT % float(v)


def export_csv(series: dict, path):
    """Columns of equal length keyed by header name; doubles written losslessly."""
    path = Path(path)
    names = list(series)
    cols = [list(series[k]) for k in names]
    if len({len(c) for c in cols}) > 1:
        raise ValueError("CSV columns differ in length")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise _io_error(path, exc) from exc
    return path


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}


def write_json(obj, path):
    """Write JSON atomically (temp file then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise _io_error(path, exc) from exc
    return path
