"""Acceptance gate: the eleven shipping criteria for this package.

Each test pins one externally-checkable claim about the toolkit with explicit
tolerances, from the model constants through identification, control design,
replay of the published gain sets, kinematics and the anti-windup contract.
Where a criterion carries a runtime budget the test enforces it with a wall
clock. Replay rows whose sampled loops are unstable at the 10 ms control rate
(or that sit on an actuator limit) are excluded from equality assertions and
reported instead; the sets below pin exactly which rows those are, so any
regression that changes the classification fails loudly here.
"""

import math
import time

import numpy as np
import pytest

from gemservo.config import load_project
from gemservo.controllers import (
    ActuatorLimits,
    PidGains,
    PidState,
    pid_step,
    place_poles,
    tune_pid,
)
from gemservo.kinematics import DEFAULT_GEOMETRY, JointAngles, direct, inverse, workspace
from gemservo.lti import (
    dc_gain,
    discretize_zoh,
    is_bibo_stable,
    second_order_character,
    simulate,
    system_type,
    tf_to_ss,
)
from gemservo.metrics import analyze_step, check_requirements
from gemservo.simloop import (
    Scenario,
    SignalSpec,
    TrackingCase,
    discrete_loop_matrix,
    run,
    run_disturbance_suite,
    run_tracking_suite,
)
from gemservo.sysid import DataSet, fit_metrics, fit_second_order

PROJECT = load_project()
ASC_VEL = PROJECT.plants["ascension_velocity"]
DECL_VEL = PROJECT.plants["declination_velocity"]
ASC_POS = PROJECT.plants["ascension_position"]
DECL_POS = PROJECT.plants["declination_position"]
TS = PROJECT.ts
HUGE = ActuatorLimits(-1e15, 1e15)


def test_acceptance_01_model_constants():
    t0 = time.perf_counter()
    asc = dc_gain(ASC_VEL)
    decl = dc_gain(DECL_VEL)
    elapsed = time.perf_counter() - t0
    assert asc == pytest.approx(0.09809 / 1566.5, rel=1e-9)
    assert decl == pytest.approx(0.1267 / 2018.0, rel=1e-9)
    assert elapsed < 1e-3


def test_acceptance_02_damping_inside_the_design_band():
    asc = second_order_character(ASC_VEL)
    decl = second_order_character(DECL_VEL)
    assert asc.zeta == pytest.approx(0.6569, abs=1e-3)
    assert decl.zeta == pytest.approx(0.3865, abs=1e-3)
    for zeta in (asc.zeta, decl.zeta):
        assert 0.2 <= zeta <= 0.7


def test_acceptance_03_type_and_stability():
    for plant in (ASC_VEL, DECL_VEL):
        assert system_type(plant) == 0
        assert is_bibo_stable(plant) is True
    for plant in (ASC_POS, DECL_POS):
        assert system_type(plant) == 1
        assert is_bibo_stable(plant) is False


def test_acceptance_04_unity_feedback_steady_state():
    unity = PidGains(kp=1.0, ki=0.0, kd=0.0, u_min=-1e15, u_max=1e15)
    t0 = time.perf_counter()
    # type-1 position plant: unity feedback tracks a step exactly; the loop
    # time constant is 1/dc_gain of the velocity stage, hence the long window
    pos_trace = run(Scenario(
        plant=ASC_POS, controller=unity,
        reference=SignalSpec(shape="step", amplitude=1.0),
        duration=2e5, ts=10.0, limits=HUGE,
    ))
    pos_ess = analyze_step(pos_trace).ess
    # type-0 velocity plant: offset is exactly 1/(1 + dc gain)
    vel_trace = run(Scenario(
        plant=ASC_VEL, controller=unity,
        reference=SignalSpec(shape="step", amplitude=1.0),
        duration=2.0, ts=0.01, limits=HUGE,
    ))
    vel_ess = analyze_step(vel_trace, band_pct=100.0).ess
    elapsed = time.perf_counter() - t0
    assert pos_ess < 1e-3
    assert vel_ess == pytest.approx(1.0 / (1.0 + dc_gain(ASC_VEL)), rel=1e-6)
    assert elapsed < 1.0


def test_acceptance_05_identification_recovery_ten_seeds():
    t0 = time.perf_counter()
    ts, n = 0.004, 250
    for plant in (ASC_VEL, DECL_VEL):
        b0_true = plant.num[0]
        _, a1_true, a0_true = plant.den
        dss = discretize_zoh(tf_to_ss(plant), ts)
        t = np.arange(n) * ts
        for seed in range(10):
            rng = np.random.default_rng(seed)
            u = 250_000.0 * rng.standard_normal(n)
            y_clean, _ = simulate(dss, u)
            span = float(np.max(y_clean) - np.min(y_clean))
            y = y_clean + 0.01 * span * rng.standard_normal(n)
            report = fit_second_order(DataSet(t, u, y, label=f"seed{seed}"))
            b0, a1, a0 = report.model.num[0], report.model.den[1], report.model.den[2]
            assert b0 == pytest.approx(b0_true, rel=0.05)
            assert a1 == pytest.approx(a1_true, rel=0.05)
            assert a0 == pytest.approx(a0_true, rel=0.05)
            # noiseless validation on an input the fit never saw
            rng_val = np.random.default_rng(seed + 1000)
            u_val = 250_000.0 * rng_val.standard_normal(n)
            y_val, _ = simulate(dss, u_val)
            y_hat, _ = simulate(discretize_zoh(tf_to_ss(report.model), ts), u_val)
            assert fit_metrics(y_val, y_hat, 3).fit_pct >= 90.0
    assert time.perf_counter() - t0 < 30.0


def test_acceptance_06_metric_formulas():
    # two-sample worked example: residual 2, deviation-from-mean sqrt(2)
    m = fit_metrics(np.array([0.0, 2.0]), np.array([0.0, 0.0]), 1)
    assert m.mse == 2.0
    assert m.fpe == 6.0
    assert m.fit_pct == pytest.approx(100.0 * (1.0 - math.sqrt(2.0)), rel=1e-14)
    # analytic second-order overshoot at zeta = 0.5
    zeta, wn, ts = 0.5, 10.0, 1e-3
    from gemservo.lti import TransferFunction
    dss = discretize_zoh(
        tf_to_ss(TransferFunction((wn * wn,), (1.0, 2.0 * zeta * wn, wn * wn))), ts
    )
    npts = int(round(3.0 / ts))
    y, _ = simulate(dss, np.ones(npts))
    t = np.arange(npts) * ts
    from types import SimpleNamespace
    sm = analyze_step(SimpleNamespace(t=t, r=np.ones(npts), y=y, diverged=False))
    assert sm.os_pct == pytest.approx(16.30, abs=0.5)
    # first-order exponential: tss = ln(50) = 3.912 s, within one sample
    ts1 = 0.001
    t1 = np.arange(0.0, 8.0 + 1e-9, ts1)
    y1 = 1.0 - np.exp(-t1)
    fm = analyze_step(SimpleNamespace(t=t1, r=np.ones_like(t1), y=y1, diverged=False))
    assert fm.settled
    assert abs(fm.tss - 3.912) <= ts1 * 1.000001


def _verify_case(plant, controller, req, limits, duration, ts=TS, band=PROJECT.band_pct):
    trace = run(Scenario(
        plant=plant, controller=controller,
        reference=SignalSpec(shape="step", amplitude=req.amplitude),
        duration=duration, ts=ts, limits=limits,
    ))
    assert not trace.diverged
    return check_requirements(analyze_step(trace, band), req)


def test_acceptance_07_rederived_controllers_pass_all_rows():
    t0 = time.perf_counter()
    reqs = PROJECT.requirements
    wide = ActuatorLimits(-350_000.0, 350_000.0)

    # pole placement: velocity rows get a fast dominant pair, position rows a
    # slow dominant real pole plus the velocity-stage pair left in place
    vel_poles = [complex(-25.0, 18.75), complex(-25.0, -18.75), -125.0]
    for plant, name in ((ASC_VEL, "ascension_velocity"),
                        (DECL_VEL, "declination_velocity")):
        gains = place_poles(plant, vel_poles)
        verdict = _verify_case(plant, gains, reqs[name], PROJECT.limits, 2.0)
        assert verdict.passed, f"place_poles {name}: {verdict}"
    for plant, vel_plant, name in ((ASC_POS, ASC_VEL, "ascension_position"),
                                   (DECL_POS, DECL_VEL, "declination_position")):
        _, a1, a0 = vel_plant.den
        pair_im = math.sqrt(a0 - 0.25 * a1 * a1)
        pos_poles = [-0.15, -1.0, complex(-0.5 * a1, pair_im),
                     complex(-0.5 * a1, -pair_im)]
        gains = place_poles(plant, pos_poles)
        verdict = _verify_case(plant, gains, reqs[name], PROJECT.limits, 120.0)
        assert verdict.passed, f"place_poles {name}: {verdict}"

    # deterministic tuner: velocity rows under the one-sided actuator,
    # position rows under the symmetric wide limits they need
    for plant, name, limits in (
        (ASC_VEL, "ascension_velocity", PROJECT.limits),
        (DECL_VEL, "declination_velocity", PROJECT.limits),
        (ASC_POS, "ascension_position", wide),
        (DECL_POS, "declination_position", wide),
    ):
        req = reqs[name]
        gains = tune_pid(plant, req, ts=TS, limits=limits)
        phi = discrete_loop_matrix(plant, gains, TS)
        rho = float(np.max(np.abs(np.linalg.eigvals(phi))))
        assert rho < 1.0
        rate = -math.log(rho) / TS
        duration = min(max(2.0 * req.tss_max, 20.0 / rate), 600.0)
        verdict = _verify_case(plant, gains, req, limits, duration)
        assert verdict.passed, f"tune_pid {name}: {verdict}"
    assert time.perf_counter() - t0 < 60.0


def _replay_cases():
    cases = []
    for system in ("ascension_velocity", "declination_velocity",
                   "ascension_position", "declination_position"):
        for kind in ("pid", "sf"):
            cases.append(TrackingCase(
                label=f"{system}_{kind}",
                plant=PROJECT.plants[system],
                controller=PROJECT.controllers[f"{system}_{kind}"],
                requirement=PROJECT.requirements[system],
                ts=TS, limits=PROJECT.limits, band_pct=PROJECT.band_pct,
            ))
    return cases


def test_acceptance_08_published_gain_replay():
    rows = {row.label: row for row in run_tracking_suite(_replay_cases())}

    # rows whose 10 ms sampled loop is stable; everything else is reported only
    expected_stable = {
        "ascension_velocity_pid": False,   # spectral radius 1.013 at 10 ms
        "declination_velocity_pid": True,
        "ascension_position_pid": True,
        "declination_position_pid": True,
        "ascension_velocity_sf": False,    # stable only near 0.1 ms sampling
        "declination_velocity_sf": False,
        "ascension_position_sf": False,
        "declination_position_sf": False,
    }
    for label, want in expected_stable.items():
        assert rows[label].linearly_stable is want, label

    # converged loops: stable AND settled; the one-sided actuator pins the
    # position PID loops below their references, so only one row converges
    converged = {label for label, row in rows.items()
                 if row.linearly_stable and row.metrics.settled}
    assert converged == {"declination_velocity_pid"}
    for label in converged:
        system = label.rsplit("_", 1)[0]
        req_amp = PROJECT.requirements[system].amplitude
        assert rows[label].metrics.ess <= 1e-6 * abs(req_amp), label

    # every saturating PID replay reports the 350 kHz ceiling exactly
    saturated_pid = {label for label, row in rows.items()
                     if label.endswith("_pid") and row.upper_saturated}
    assert saturated_pid == {"ascension_velocity_pid", "ascension_position_pid",
                             "declination_position_pid"}
    for label in saturated_pid:
        assert rows[label].max_control == 350_000.0, label
    assert rows["declination_velocity_pid"].max_control < 350_000.0


def test_acceptance_09_disturbance_rejection_property():
    # replayed loops: only the converging row is evaluated, and it rejects
    drows = {row.label: row for row in run_disturbance_suite(_replay_cases())}
    decl = drows["declination_velocity_pid"]
    assert decl.evaluated
    assert decl.metrics.final_error <= 1e-6 * 10.0
    for label, row in drows.items():
        if label != "declination_velocity_pid":
            assert not row.evaluated, label

    # a freshly designed integral-action loop rejects as well
    gains = place_poles(ASC_VEL, [complex(-25.0, 18.75), complex(-25.0, -18.75),
                                  -125.0])
    case = TrackingCase(
        label="designed", plant=ASC_VEL, controller=gains,
        requirement=PROJECT.requirements["ascension_velocity"],
        ts=TS, limits=PROJECT.limits, band_pct=PROJECT.band_pct,
    )
    (row,) = run_disturbance_suite([case])
    assert row.evaluated
    assert row.metrics.final_error <= 1e-6 * 10.0


def test_acceptance_10_kinematics_round_trip_and_sphere():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        j = JointAngles(
            theta1=float(rng.uniform(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)),
            theta2=float(rng.uniform(0.0, math.pi)),
        )
        back = inverse(DEFAULT_GEOMETRY, direct(DEFAULT_GEOMETRY, j))
        assert abs(back.theta1 - j.theta1) <= 1e-9
        assert abs(back.theta2 - j.theta2) <= 1e-9
    pts = workspace(DEFAULT_GEOMETRY, 100, 100)
    rr = np.sum(pts[:, 2:] ** 2, axis=1)
    np.testing.assert_allclose(rr, DEFAULT_GEOMETRY.radius_sq, rtol=1e-9)
    assert time.perf_counter() - t0 < 5.0


def test_acceptance_11_anti_windup_bounded_and_recovering():
    gains = PidGains(kp=0.5, ki=2.0, kd=0.0, u_min=-1.0, u_max=1.0)
    ts = 0.01
    state = PidState()
    max_integral = 0.0
    u_sat = 0.0
    for _ in range(100_000):
        _, u_sat, state = pid_step(gains, state, error=1.0, ts=ts)
        max_integral = max(max_integral, abs(state.integral))
    # conditional integration froze the accumulator near the value that
    # fills the headroom between kp*e and the limit: (1 - 0.5)/2 = 0.25
    assert u_sat == 1.0
    assert max_integral <= 0.26
    # after the error reverses, the command must leave the rail immediately
    recovery = None
    for k in range(20):
        _, u_sat, state = pid_step(gains, state, error=-1.0, ts=ts)
        if u_sat < 1.0:
            recovery = k
            break
    assert recovery is not None and recovery < 20
