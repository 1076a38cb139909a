import math

import numpy as np
import pytest

from gilsim.config import parse_config
from gilsim.geometry import GeometryParams, MeshControls, build_geometry, generate_mesh, layered_annulus_mesh

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}

COARSE = MeshControls(h_max=0.008, triple_point_h=0.001, grading_ratio=1.3)
R_IN, R_OUT = 0.05, 0.125


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def gil_mesh():
    return generate_mesh(build_geometry(GeometryParams()), COARSE)


@pytest.fixture(scope="session")
def reference_materials():
    return parse_config({}).materials


def coax_mesh(n_radial=30, n_axial=4, length=0.012):
    return layered_annulus_mesh((R_IN, R_OUT), length, (n_radial,), n_axial)


def coax_potential(r, V=1.0):
    return V * np.log(R_OUT / np.asarray(r)) / math.log(R_OUT / R_IN)


def coax_field(r, V=1.0):
    return V / (np.asarray(r) * math.log(R_OUT / R_IN))


COARSE_MESH = {"h_max": COARSE.h_max, "triple_point_h": COARSE.triple_point_h,
               "grading_ratio": COARSE.grading_ratio}
SADDLE_SIGMA = {"kind": "saddle", "scope": "conductivity", "min_multiplier": 1.0, "max_multiplier": 10.0}
PIECEWISE_EPS = {"kind": "piecewise", "scope": "permittivity",
                 "control_points": [[0.0, 1.6], [0.3, 1.0], [0.7, 1.0], [1.0, 1.6]]}


def scenario_data(kind="dc-on", variants=None, **sections):
    data = {"scenario": {"kind": kind}, "mesh": dict(COARSE_MESH)}
    if variants is not None:
        data["variants"] = variants
    data.update(sections)
    return data


@pytest.fixture(scope="session")
def dc_on_run(tmp_path_factory):
    """DC-on on the coarse mesh: uniform, saddle-sigma and the sigma/eps FGM."""
    from gilsim.scenarios import run_scenario
    variants = [{"name": "uniform", "profiles": []},
                {"name": "sigma", "profiles": [SADDLE_SIGMA]},
                {"name": "fgm", "profiles": [SADDLE_SIGMA, PIECEWISE_EPS]}]
    out = tmp_path_factory.mktemp("dc_on")
    return run_scenario(parse_config(scenario_data(variants=variants), output_dir=out))


@pytest.fixture(scope="session")
def lightning_run(tmp_path_factory):
    from gilsim.scenarios import run_scenario
    out = tmp_path_factory.mktemp("lightning")
    cfg = parse_config(scenario_data("lightning", [{"name": "uniform", "profiles": []}],
                                     output={"snapshots": False}), output_dir=out)
    return run_scenario(cfg)
