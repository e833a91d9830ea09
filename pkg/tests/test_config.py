"""Tests for JSON loading/serialization: project data, controllers,
scenarios, and the path-qualified error messages."""

import json
import math

import pytest

from gemservo.config import (
    ConfigError,
    bundled_scenario_names,
    controller_from_json,
    controller_to_json,
    geometry_from_json,
    limits_from_json,
    load_project,
    load_scenario,
    model_report_to_json,
    requirement_from_json,
    tf_from_json,
    tf_to_json,
)
from gemservo.controllers import PidGains, StateFeedbackGains, place_poles
from gemservo.lti import TransferFunction
from gemservo.sysid import FitReport


# ---------------------------------------------------------------------------
# bundled project


def test_bundled_project_contents():
    proj = load_project()
    assert proj.ts == 0.01
    assert proj.band_pct == 2.0
    assert proj.limits.u_min == 0.0
    assert proj.limits.u_max == 350_000.0
    assert proj.plants["ascension_velocity"].num == (0.09809,)
    assert proj.plants["ascension_velocity"].den == (1.0, 52.0, 1566.5)
    assert proj.plants["declination_velocity"].num == (0.1267,)
    assert proj.plants["declination_velocity"].den == (1.0, 34.72, 2018.0)
    # position plants are the velocity plants with an extra integrator
    assert proj.plants["ascension_position"].den == (1.0, 52.0, 1566.5, 0.0)
    assert proj.plants["declination_position"].den == (1.0, 34.72, 2018.0, 0.0)
    req = proj.requirements["ascension_velocity"]
    assert (req.amplitude, req.tss_max, req.os_max, req.ess_max) == (10.0, 0.2, 5.0, 0.0)
    assert req.units == "deg/s"
    assert req.label == "ascension_velocity"
    assert proj.requirements["ascension_position"].tss_max == 60.0
    assert proj.requirements["declination_velocity"].tss_max == 0.5
    assert proj.requirements["declination_position"].amplitude == 180.0
    assert set(proj.controllers) == {
        "ascension_velocity_pid", "ascension_position_pid",
        "declination_velocity_pid", "declination_position_pid",
        "ascension_velocity_sf", "ascension_position_sf",
        "declination_velocity_sf", "declination_position_sf",
    }
    assert isinstance(proj.controllers["ascension_velocity_pid"], PidGains)
    assert isinstance(proj.controllers["ascension_velocity_sf"], StateFeedbackGains)
    assert proj.geometry.l1 == 1.0
    assert proj.geometry.alpha == pytest.approx(math.radians(4.6), rel=1e-15)
    assert "tracking" in proj.reference_results


def test_load_project_from_path_and_errors(tmp_path):
    with pytest.raises(ConfigError, match="no such file"):
        load_project(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match=r"bad\.json: invalid JSON"):
        load_project(bad)
    small = tmp_path / "small.json"
    small.write_text(json.dumps({
        "defaults": {"ts": 0.02, "band_pct": 5.0,
                     "limits": {"umin": -1.0, "umax": 1.0}},
        "geometry": {"l1": 2.0, "l2": 1.0, "alpha_deg": 0.0},
        "plants": {"p": {"num": [1.0], "den": [1.0, 1.0]}},
        "requirements": {"p": {"amplitude": 1.0, "tss_max": 1.0, "os_max": 5.0}},
        "controllers": {"c": {"type": "pid", "kp": 1.0, "ki": 0.0}},
    }))
    proj = load_project(small)
    assert proj.ts == 0.02
    assert proj.plants["p"].den == (1.0, 1.0)
    assert proj.reference_results == {}


def test_project_missing_section_is_path_qualified(tmp_path):
    p = tmp_path / "partial.json"
    p.write_text(json.dumps({"defaults": {"ts": 0.01, "band_pct": 2.0,
                                          "limits": {"umin": 0.0, "umax": 1.0}}}))
    with pytest.raises(ConfigError, match="missing key 'plants'"):
        load_project(p)


# ---------------------------------------------------------------------------
# element serializers


def test_tf_json_round_trip():
    tf = TransferFunction((2.0, 1.0), (1.0, 3.0, 5.0))
    back = tf_from_json(tf_to_json(tf), "ctx")
    assert back.num == tf.num
    assert back.den == tf.den


def test_tf_from_json_error_paths():
    with pytest.raises(ConfigError, match=r"ctx: missing key 'num'"):
        tf_from_json({"den": [1.0]}, "ctx")
    with pytest.raises(ConfigError, match=r"ctx\.den: expected a non-empty array"):
        tf_from_json({"num": [1.0], "den": []}, "ctx")
    with pytest.raises(ConfigError, match=r"ctx\.num\[1\]: expected a number"):
        tf_from_json({"num": [1.0, "x"], "den": [1.0]}, "ctx")
    with pytest.raises(ConfigError, match="ctx:"):
        tf_from_json({"num": [1.0, 1.0], "den": [1.0]}, "ctx")  # improper


def test_pid_controller_json_defaults_and_round_trip():
    g = controller_from_json({"type": "pid", "kp": 1.5, "ki": 2.5}, "c")
    assert g == PidGains(kp=1.5, ki=2.5, kd=0.0, deriv_filter_n=100.0,
                         u_min=0.0, u_max=350_000.0)
    out = controller_to_json(g)
    assert "umin" not in out and "umax" not in out
    custom = PidGains(kp=1.0, ki=0.0, kd=0.0, u_min=-5.0, u_max=5.0)
    out = controller_to_json(custom)
    assert out["umin"] == -5.0 and out["umax"] == 5.0
    assert controller_from_json(out, "c") == custom


def test_sf_controller_json_forms():
    g = controller_from_json({"type": "sf", "k1": [1.0, 2.0], "k2": 3.0}, "c")
    assert g == StateFeedbackGains(k1=(1.0, 2.0), k2=3.0)
    back = controller_from_json(controller_to_json(g), "c")
    assert back == g
    plant = TransferFunction((0.09809,), (1.0, 52.0, 1566.5))
    want = [complex(-25.0, 18.75), complex(-25.0, -18.75), -125.0]
    designed = controller_from_json(
        {"type": "sf", "poles": [[-25.0, 18.75], [-25.0, -18.75], [-125.0, 0.0]]},
        "c", plant=plant,
    )
    direct = place_poles(plant, want)
    assert designed.k1 == pytest.approx(direct.k1, rel=1e-12)
    assert designed.k2 == pytest.approx(direct.k2, rel=1e-12)


def test_controller_json_error_paths():
    with pytest.raises(ConfigError, match="expected 'pid' or 'sf'"):
        controller_from_json({"type": "lqr"}, "c")
    with pytest.raises(ConfigError, match="need a plant"):
        controller_from_json({"type": "sf", "poles": [[-1.0, 0.0]]}, "c")
    with pytest.raises(ConfigError, match=r"c\.poles\[0\]: expected \[real, imag\]"):
        controller_from_json({"type": "sf", "poles": [[-1.0]]}, "c",
                             plant=TransferFunction((1.0,), (1.0, 1.0)))
    with pytest.raises(ConfigError, match="c:"):
        controller_from_json(
            {"type": "pid", "kp": 1.0, "ki": 0.0, "kd": 1.0, "n": 0.0}, "c"
        )  # derivative needs a positive filter coefficient


def test_requirement_limits_geometry_from_json():
    req = requirement_from_json(
        {"amplitude": 10.0, "tss_max": 0.2, "os_max": 5.0, "units": "deg/s"},
        "r", label="row",
    )
    assert req.label == "row" and req.units == "deg/s" and req.ess_max == 0.0
    with pytest.raises(ConfigError, match=r"r: missing key 'tss_max'"):
        requirement_from_json({"amplitude": 1.0, "os_max": 5.0}, "r")
    lim = limits_from_json({"umin": -2.0, "umax": 2.0}, "l")
    assert (lim.u_min, lim.u_max) == (-2.0, 2.0)
    with pytest.raises(ConfigError, match=r"l: missing key 'umin'"):
        limits_from_json({"umax": 2.0}, "l")
    geom = geometry_from_json({"l1": 1.0, "l2": 0.5, "alpha_deg": 90.0 / math.pi}, "g")
    assert geom.alpha == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ConfigError, match="g:"):
        geometry_from_json({"l1": -1.0, "l2": 0.5, "alpha_deg": 0.0}, "g")


# ---------------------------------------------------------------------------
# scenarios


def test_bundled_scenario_names_sorted():
    names = bundled_scenario_names()
    assert names == sorted(names)
    assert "ascension_velocity_sf" in names
    assert "declination_velocity_pid" in names
    assert "sidereal_tracking_sf" in names


def test_load_bundled_scenario_resolves_pole_design():
    loaded = load_scenario("ascension_velocity_sf")
    assert loaded.name == "ascension_velocity_sf"
    scen = loaded.scenario
    assert isinstance(scen.controller, StateFeedbackGains)
    assert loaded.requirement is not None
    assert loaded.requirement.label == "ascension_velocity"
    assert scen.duration == 2.0
    assert scen.ts == 0.01  # project default
    again = load_scenario("ascension_velocity_sf.json")  # extension optional
    assert again.scenario.controller == scen.controller


def test_load_scenario_ts_override():
    loaded = load_scenario("declination_velocity_pid", ts_override=0.002)
    assert loaded.scenario.ts == 0.002


def test_load_scenario_unknown_name_lists_bundled():
    with pytest.raises(ConfigError, match="no bundled scenario.*ascension_velocity_sf"):
        load_scenario("never_heard_of_it")


def test_load_scenario_from_file_with_inline_everything(tmp_path):
    spec = {
        "label": "inline case",
        "plant": {"num": [1.0], "den": [1.0, 2.0]},
        "controller": {"type": "pid", "kp": 3.0, "ki": 1.0},
        "reference": {"shape": "step", "amplitude": 2.0},
        "disturbance": {"shape": "step", "amplitude": 0.5, "start": 1.0,
                        "inject": "output"},
        "requirement": {"amplitude": 2.0, "tss_max": 5.0, "os_max": 20.0},
        "limits": {"umin": -10.0, "umax": 10.0},
        "ts": 0.005,
        "duration": 4.0,
    }
    p = tmp_path / "case.json"
    p.write_text(json.dumps(spec))
    loaded = load_scenario(p)
    scen = loaded.scenario
    assert loaded.name == "case"
    assert scen.label == "inline case"
    assert scen.plant.den == (1.0, 2.0)
    assert scen.controller.kp == 3.0
    assert scen.disturbance.inject == "output"
    assert scen.limits.u_max == 10.0
    assert scen.ts == 0.005
    assert loaded.requirement.tss_max == 5.0


def test_load_scenario_references_project_entries(tmp_path):
    spec = {
        "plant": "declination_velocity",
        "controller": "declination_velocity_pid",
        "reference": {"shape": "step", "amplitude": 10.0},
        "requirement": "declination_velocity",
        "duration": 2.0,
    }
    p = tmp_path / "byname.json"
    p.write_text(json.dumps(spec))
    proj = load_project()
    loaded = load_scenario(p, project=proj)
    assert loaded.scenario.plant == proj.plants["declination_velocity"]
    assert loaded.scenario.controller == proj.controllers["declination_velocity_pid"]
    assert loaded.requirement == proj.requirements["declination_velocity"]


def test_load_scenario_error_paths(tmp_path):
    base = {
        "plant": "no_such_plant",
        "controller": {"type": "pid", "kp": 1.0, "ki": 0.0},
        "reference": {"shape": "step", "amplitude": 1.0},
        "duration": 1.0,
    }
    p = tmp_path / "s.json"
    p.write_text(json.dumps(base))
    with pytest.raises(ConfigError, match="unknown plant 'no_such_plant'"):
        load_scenario(p)
    base["plant"] = "ascension_velocity"
    base["controller"] = "mystery"
    p.write_text(json.dumps(base))
    with pytest.raises(ConfigError, match="unknown controller 'mystery'"):
        load_scenario(p)
    base["controller"] = {"type": "pid", "kp": 1.0, "ki": 0.0}
    del base["duration"]
    p.write_text(json.dumps(base))
    with pytest.raises(ConfigError, match="missing key 'duration'"):
        load_scenario(p)
    base["duration"] = 1.0
    base["reference"] = {"shape": "wiggle"}
    p.write_text(json.dumps(base))
    with pytest.raises(ConfigError, match="reference"):
        load_scenario(p)


# ---------------------------------------------------------------------------
# model reports


def test_model_report_to_json():
    report = FitReport(
        model=TransferFunction((0.1,), (1.0, 2.0, 3.0)),
        fit_pct=97.5, mse=0.01, fpe=0.011,
        converged=True, iterations=12, stable=True, label="run1",
    )
    doc = model_report_to_json(report)
    assert doc["num"] == [0.1]
    assert doc["den"] == [1.0, 2.0, 3.0]
    assert doc["fit"]["label"] == "run1"
    assert doc["fit"]["fit_pct"] == 97.5
    assert doc["fit"]["converged"] is True
    assert doc["fit"]["stable"] is True
    json.dumps(doc)  # must be directly serializable
