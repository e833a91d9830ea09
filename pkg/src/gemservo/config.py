"""JSON serialization for plants, controllers, requirements and scenarios.

Format reference
----------------
Transfer function: ``{"num": [...], "den": [...]}`` - coefficient arrays in
descending powers of s.

Controller: ``{"type": "pid", "kp": .., "ki": .., "kd": .., "n": ..}`` with
kd and n optional (defaults 0 and 100 rad/s) and optional ``umin``/``umax``
actuator limits (defaults 0 and 350000 Hz), or
``{"type": "sf", "k1": [..], "k2": ..}``, or
``{"type": "sf", "poles": [[re, im], ...]}`` - the pole-design form, resolved
with the scenario's plant via pole placement on load. Scenario files may also
name a project controller with a plain string.

Limits: ``{"umin": .., "umax": ..}``.

Requirement: ``{"amplitude": .., "tss_max": .., "os_max": .., "ess_max": ..,
"units": ".."}``.

Geometry: ``{"l1": .., "l2": .., "alpha_deg": ..}``.

Scenario files combine those: plant and requirement may be given inline or by
bundled name; reference and disturbance are signal specs
(``{"shape": "step"|"ramp", "amplitude"|"rate": .., "start": ..}``, the
disturbance adds ``"inject": "input"|"output"``).

All loader errors name the offending file and JSON path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

from .controllers import ActuatorLimits, PidGains, StateFeedbackGains, place_poles
from .kinematics import MountGeometry
from .lti import TransferFunction
from .metrics import CONSTANTS, Requirement
from .simloop import DisturbanceSpec, Scenario, SignalSpec

__all__ = [
    "ConfigError",
    "Project",
    "LoadedScenario",
    "load_project",
    "load_scenario",
    "bundled_scenario_names",
    "tf_from_json",
    "tf_to_json",
    "controller_from_json",
    "controller_to_json",
    "requirement_from_json",
    "limits_from_json",
    "geometry_from_json",
    "model_report_to_json",
]


class ConfigError(ValueError):
    """A config file is missing, malformed, or inconsistent."""


def _data_root():
    return files("gemservo") / "data"


def _get(obj: dict, key: str, ctx: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{ctx}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise ConfigError(f"{ctx}: missing key {key!r}")
    return obj[key]


def _num(value, ctx: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{ctx}: expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"{ctx}: value must be finite, got {v}")
    return v


def _num_list(value, ctx: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{ctx}: expected a non-empty array")
    return [_num(v, f"{ctx}[{i}]") for i, v in enumerate(value)]


def tf_from_json(obj, ctx: str) -> TransferFunction:
    num = _num_list(_get(obj, "num", ctx), f"{ctx}.num")
    den = _num_list(_get(obj, "den", ctx), f"{ctx}.den")
    try:
        return TransferFunction(tuple(num), tuple(den))
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


def tf_to_json(tf: TransferFunction) -> dict:
    return {"num": list(tf.num), "den": list(tf.den)}


def controller_from_json(
    obj, ctx: str, plant: TransferFunction | None = None
) -> PidGains | StateFeedbackGains:
    kind = _get(obj, "type", ctx)
    if kind == "pid":
        try:
            return PidGains(
                kp=_num(_get(obj, "kp", ctx), f"{ctx}.kp"),
                ki=_num(_get(obj, "ki", ctx), f"{ctx}.ki"),
                kd=_num(obj.get("kd", 0.0), f"{ctx}.kd"),
                deriv_filter_n=_num(obj.get("n", 100.0), f"{ctx}.n"),
                u_min=_num(obj.get("umin", 0.0), f"{ctx}.umin"),
                u_max=_num(
                    obj.get("umax", CONSTANTS.actuator_max_hz), f"{ctx}.umax"
                ),
            )
        except ValueError as exc:
            raise ConfigError(f"{ctx}: {exc}") from None
    if kind == "sf":
        if "poles" in obj:
            if plant is None:
                raise ConfigError(
                    f"{ctx}: pole-design controllers need a plant to resolve against"
                )
            raw = obj["poles"]
            if not isinstance(raw, list) or not raw:
                raise ConfigError(f"{ctx}.poles: expected a non-empty array")
            want = []
            for i, pair in enumerate(raw):
                if not isinstance(pair, list) or len(pair) != 2:
                    raise ConfigError(
                        f"{ctx}.poles[{i}]: expected [real, imag] pair"
                    )
                want.append(
                    complex(
                        _num(pair[0], f"{ctx}.poles[{i}][0]"),
                        _num(pair[1], f"{ctx}.poles[{i}][1]"),
                    )
                )
            try:
                return place_poles(plant, want)
            except ValueError as exc:
                raise ConfigError(f"{ctx}: {exc}") from None
        try:
            return StateFeedbackGains(
                k1=tuple(_num_list(_get(obj, "k1", ctx), f"{ctx}.k1")),
                k2=_num(_get(obj, "k2", ctx), f"{ctx}.k2"),
            )
        except ValueError as exc:
            raise ConfigError(f"{ctx}: {exc}") from None
    raise ConfigError(f"{ctx}.type: expected 'pid' or 'sf', got {kind!r}")


def controller_to_json(controller: PidGains | StateFeedbackGains) -> dict:
    if isinstance(controller, PidGains):
        out = {
            "type": "pid",
            "kp": controller.kp,
            "ki": controller.ki,
            "kd": controller.kd,
            "n": controller.deriv_filter_n,
        }
        if controller.u_min != 0.0 or controller.u_max != CONSTANTS.actuator_max_hz:
            out["umin"] = controller.u_min
            out["umax"] = controller.u_max
        return out
    return {"type": "sf", "k1": list(controller.k1), "k2": controller.k2}


def requirement_from_json(obj, ctx: str, label: str = "") -> Requirement:
    try:
        return Requirement(
            amplitude=_num(_get(obj, "amplitude", ctx), f"{ctx}.amplitude"),
            tss_max=_num(_get(obj, "tss_max", ctx), f"{ctx}.tss_max"),
            os_max=_num(_get(obj, "os_max", ctx), f"{ctx}.os_max"),
            ess_max=_num(obj.get("ess_max", 0.0), f"{ctx}.ess_max"),
            units=str(obj.get("units", "")),
            label=label,
        )
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


def limits_from_json(obj, ctx: str) -> ActuatorLimits:
    try:
        return ActuatorLimits(
            u_min=_num(_get(obj, "umin", ctx), f"{ctx}.umin"),
            u_max=_num(_get(obj, "umax", ctx), f"{ctx}.umax"),
        )
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


def geometry_from_json(obj, ctx: str) -> MountGeometry:
    try:
        return MountGeometry(
            l1=_num(_get(obj, "l1", ctx), f"{ctx}.l1"),
            l2=_num(_get(obj, "l2", ctx), f"{ctx}.l2"),
            alpha=math.radians(_num(_get(obj, "alpha_deg", ctx), f"{ctx}.alpha_deg")),
        )
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


def _signal_from_json(obj, ctx: str) -> SignalSpec:
    try:
        return SignalSpec(
            shape=str(_get(obj, "shape", ctx)),
            amplitude=_num(obj.get("amplitude", 0.0), f"{ctx}.amplitude"),
            rate=_num(obj.get("rate", 0.0), f"{ctx}.rate"),
            start=_num(obj.get("start", 0.0), f"{ctx}.start"),
        )
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


def _disturbance_from_json(obj, ctx: str) -> DisturbanceSpec:
    try:
        return DisturbanceSpec(
            shape=str(_get(obj, "shape", ctx)),
            amplitude=_num(obj.get("amplitude", 0.0), f"{ctx}.amplitude"),
            rate=_num(obj.get("rate", 0.0), f"{ctx}.rate"),
            start=_num(obj.get("start", 0.0), f"{ctx}.start"),
            inject=str(obj.get("inject", "input")),
        )
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


@dataclass(frozen=True)
class Project:
    """Bundled (or user-supplied) project data: plants, controllers,
    requirements, defaults, geometry and published reference results."""

    plants: dict[str, TransferFunction]
    requirements: dict[str, Requirement]
    controllers: dict[str, PidGains | StateFeedbackGains]
    reference_results: dict
    geometry: MountGeometry
    ts: float
    band_pct: float
    limits: ActuatorLimits


def load_project(path: str | Path | None = None) -> Project:
    """Load a project JSON; ``None`` loads the bundled one."""
    if path is None:
        name = "gemservo/data/project.json"
        text = (_data_root() / "project.json").read_text()
    else:
        name = str(path)
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"{name}: no such file")
        text = p.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid JSON: {exc}") from None

    defaults = _get(raw, "defaults", name)
    ts = _num(_get(defaults, "ts", f"{name}.defaults"), f"{name}.defaults.ts")
    band = _num(
        _get(defaults, "band_pct", f"{name}.defaults"), f"{name}.defaults.band_pct"
    )
    limits = limits_from_json(
        _get(defaults, "limits", f"{name}.defaults"), f"{name}.defaults.limits"
    )
    plants = {
        key: tf_from_json(val, f"{name}.plants.{key}")
        for key, val in _get(raw, "plants", name).items()
    }
    requirements = {
        key: requirement_from_json(val, f"{name}.requirements.{key}", label=key)
        for key, val in _get(raw, "requirements", name).items()
    }
    controllers = {
        key: controller_from_json(val, f"{name}.controllers.{key}")
        for key, val in _get(raw, "controllers", name).items()
    }
    geometry = geometry_from_json(_get(raw, "geometry", name), f"{name}.geometry")
    return Project(
        plants=plants,
        requirements=requirements,
        controllers=controllers,
        reference_results=raw.get("reference_results", {}),
        geometry=geometry,
        ts=ts,
        band_pct=band,
        limits=limits,
    )


@dataclass(frozen=True)
class LoadedScenario:
    """A scenario file resolved against the project: ready to simulate."""

    name: str
    scenario: Scenario
    requirement: Requirement | None


def bundled_scenario_names() -> list[str]:
    root = _data_root() / "scenarios"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(
    path: str | Path,
    project: Project | None = None,
    ts_override: float | None = None,
) -> LoadedScenario:
    """Load a scenario JSON from a filesystem path or a bundled name."""
    if project is None:
        project = load_project()
    p = Path(path)
    if p.exists():
        name = str(path)
        text = p.read_text()
        stem = p.stem
    else:
        stem = str(path)
        if stem.endswith(".json"):
            stem = stem[: -len(".json")]
        candidate = _data_root() / "scenarios" / f"{stem}.json"
        if not candidate.is_file():
            raise ConfigError(
                f"{path}: no such file and no bundled scenario of that name "
                f"(bundled: {', '.join(bundled_scenario_names())})"
            )
        name = f"bundled:{stem}"
        text = candidate.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid JSON: {exc}") from None

    plant_spec = _get(raw, "plant", name)
    if isinstance(plant_spec, str):
        if plant_spec not in project.plants:
            raise ConfigError(
                f"{name}.plant: unknown plant {plant_spec!r} "
                f"(known: {', '.join(sorted(project.plants))})"
            )
        plant = project.plants[plant_spec]
    else:
        plant = tf_from_json(plant_spec, f"{name}.plant")

    ctrl_spec = _get(raw, "controller", name)
    if isinstance(ctrl_spec, str):
        if ctrl_spec not in project.controllers:
            raise ConfigError(
                f"{name}.controller: unknown controller {ctrl_spec!r} "
                f"(known: {', '.join(sorted(project.controllers))})"
            )
        controller = project.controllers[ctrl_spec]
    else:
        controller = controller_from_json(
            ctrl_spec, f"{name}.controller", plant=plant
        )
    reference = _signal_from_json(_get(raw, "reference", name), f"{name}.reference")
    disturbance = None
    if "disturbance" in raw and raw["disturbance"] is not None:
        disturbance = _disturbance_from_json(raw["disturbance"], f"{name}.disturbance")

    requirement = None
    if "requirement" in raw and raw["requirement"] is not None:
        req_spec = raw["requirement"]
        if isinstance(req_spec, str):
            if req_spec not in project.requirements:
                raise ConfigError(
                    f"{name}.requirement: unknown requirement {req_spec!r} "
                    f"(known: {', '.join(sorted(project.requirements))})"
                )
            requirement = project.requirements[req_spec]
        else:
            requirement = requirement_from_json(req_spec, f"{name}.requirement")

    limits = project.limits
    if "limits" in raw and raw["limits"] is not None:
        limits = limits_from_json(raw["limits"], f"{name}.limits")
    ts = _num(raw.get("ts", project.ts), f"{name}.ts")
    if ts_override is not None:
        ts = ts_override
    duration = _num(_get(raw, "duration", name), f"{name}.duration")
    label = str(raw.get("label", stem))
    try:
        scenario = Scenario(
            plant=plant,
            controller=controller,
            reference=reference,
            duration=duration,
            ts=ts,
            limits=limits,
            disturbance=disturbance,
            loop_delay=bool(raw.get("loop_delay", False)),
            label=label,
        )
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return LoadedScenario(name=stem, scenario=scenario, requirement=requirement)


def model_report_to_json(report) -> dict:
    """Serialize a sysid FitReport as a model JSON with a fit summary."""
    return {
        "num": list(report.model.num),
        "den": list(report.model.den),
        "fit": {
            "label": report.label,
            "fit_pct": report.fit_pct,
            "mse": report.mse,
            "fpe": report.fpe,
            "converged": report.converged,
            "stable": report.stable,
        },
    }
