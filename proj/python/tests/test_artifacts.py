"""Artifact formats read by the post-processing side, and an independent recomputation of the audit verdict."""

import numpy as np
import pytest

import thermo
from thermo.artifacts import ArtifactError

DISS = ["diss_maxwell", "diss_stokes", "diss_hyper", "diss_damage", "diss_creep_gradient"]


def recompute_audit(e, outer_tol):
    """Mechanical inequality and total drift from the ledger columns alone."""
    mech = e["kinetic"] + e["stored"] + e["damage_gradient"]
    diss = sum(e[c] for c in DISS)
    slack = (mech[:-1] + e["work_force"][1:] - e["adiabatic"][1:] + e["q_penalty"][1:]) - (mech[1:] + diss[1:])
    scale = np.max(
        np.abs(
            np.vstack(
                [e["total"][:-1], e["total"][1:], e["work_force"][1:], e["adiabatic"][1:], diss[1:], e["q_penalty"][1:]]
            )
        ),
        axis=0,
    )
    scale = np.maximum(scale, 1e-300)
    tol = 10.0 * outer_tol * scale
    drift = (e["total"][1:] - e["total"][:-1]) - e["work_force"][1:] - e["work_heat"][1:]
    tscale = np.maximum(np.maximum(np.abs(e["total"][:-1]), np.abs(e["total"][1:])), 1e-300)
    return slack, scale, tol, drift / tscale


@pytest.fixture(scope="module")
def stefan_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("stefan1d")
    rep = thermo.run_scenario("stefan1d", out_dir=out, steps=60)
    return out, rep


@pytest.fixture(scope="module")
def rest_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("rest")
    rep = thermo.run_scenario("rest", out_dir=out)
    return out, rep


def test_energy_csv_parses_against_frozen_header(stefan_run):
    out, rep = stefan_run
    e = thermo.read_energy_csv(out / "energy.csv")
    assert list(e) == thermo.energy_csv_header().split(",")
    assert len(e["step"]) == rep["steps"] + 1
    np.testing.assert_array_equal(e["step"], np.arange(rep["steps"] + 1))
    np.testing.assert_array_equal(e["total"], e["kinetic"] + e["stored"] + e["damage_gradient"] + e["enthalpy"])


def test_report_matches_the_run(stefan_run):
    out, rep = stefan_run
    on_disk = thermo.read_report(out / "report.json")
    assert on_disk == rep
    assert on_disk["scenario"] == "stefan1d"
    assert len(on_disk["diagnostics"]["stefan"]["front_series"]) == rep["steps"]


@pytest.mark.parametrize("fixture", ["stefan_run", "rest_run"])
def test_audit_verdict_recomputed_from_csv(fixture, request):
    out, rep = request.getfixturevalue(fixture)
    e = thermo.read_energy_csv(out / "energy.csv")
    slack, scale, tol, rel_drift = recompute_audit(e, rep["outer_tol"])
    # Columns are written at full precision; the recomputed slack agrees to rounding of the energy scale.
    assert np.all(np.abs(slack - e["mech_slack"][1:]) <= 1e-13 * scale)
    assert bool(np.all(slack >= -tol)) == rep["audit"]["mech_pass"]
    worst = float(np.min(np.append(e["mech_slack"][1:] / tol, 0.0)))
    assert worst == pytest.approx(rep["audit"]["worst_slack_ratio"], rel=1e-12, abs=1e-12)
    if rep["audit"]["conserving_checked"]:
        assert float(np.max(np.abs(rel_drift))) == pytest.approx(rep["audit"]["max_relative_drift"], abs=1e-12)
    bounds = rep["bounds"]
    assert e["min_alpha"].min() == bounds["min_alpha"]
    assert e["max_chi"].max() == bounds["max_chi"]
    assert e["min_theta"].min() == bounds["min_theta"]


def test_rest_vtk_fields_are_constant(rest_run):
    out, _ = rest_run
    dims, spacing, f = thermo.read_vtk(out / "fields_0010.vtk")
    assert dims == (17, 17, 1)
    assert spacing[0] == pytest.approx(1.0 / 16)
    assert set(f) == {"theta", "chi", "alpha", "enthalpy", "dev_strain", "sph_strain", "creep_rate", "velocity"}
    assert f["theta"].shape == (16, 16)
    assert f["velocity"].shape == (16, 16, 3)
    np.testing.assert_array_equal(f["theta"], 0.5)
    np.testing.assert_array_equal(f["velocity"], 0.0)


def test_stefan_vtk_is_one_dimensional(stefan_run):
    out, _ = stefan_run
    dims, _, f = thermo.read_vtk(out / "fields_0000.vtk")
    assert dims == (401, 2, 1)
    assert f["chi"].shape == (1, 400)
    assert np.all((f["chi"] >= 0) & (f["chi"] <= 1))


def test_readers_reject_bad_input(tmp_path):
    bad = tmp_path / "energy.csv"
    bad.write_text("step,time\n0,0\n")
    with pytest.raises(ArtifactError, match="header"):
        thermo.read_energy_csv(bad)
    short = tmp_path / "short.csv"
    short.write_text(thermo.energy_csv_header() + "\n")
    with pytest.raises(ArtifactError, match="no data"):
        thermo.read_energy_csv(short)
    vtk = tmp_path / "x.vtk"
    vtk.write_bytes(b"# vtk DataFile Version 3.0\nt\nASCII\n")
    with pytest.raises(ArtifactError, match="BINARY"):
        thermo.read_vtk(vtk)
