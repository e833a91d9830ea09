"""Closed-loop simulation of saturated servo loops, plus batch study suites.

The plant runs on its exact zero-order-hold discretization; the controller
executes once per sample on the sampled output (ideal sampling by default, an
optional one-sample loop delay for sensitivity studies). Disturbances inject
either at the plant input (load) or the plant output (measurement offset).
Simulations are bit-deterministic: same scenario, same trace.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

import numpy as np

from .controllers import (
    DEFAULT_LIMITS,
    ActuatorLimits,
    PidGains,
    PidState,
    StateFeedbackGains,
    pid_step,
    sf_step,
)
from .lti import StateSpace, TransferFunction, discretize_zoh, tf_to_ss
from .metrics import (
    CONSTANTS,
    DisturbanceMetrics,
    Requirement,
    RequirementVerdict,
    StepMetrics,
    analyze_disturbance,
    analyze_step,
    check_requirements,
)

__all__ = [
    "SignalSpec",
    "DisturbanceSpec",
    "Scenario",
    "SimTrace",
    "run",
    "max_control",
    "write_trace_csv",
    "read_trace_csv",
    "TrackingCase",
    "TrackingRow",
    "DisturbanceRow",
    "run_tracking_suite",
    "run_disturbance_suite",
]

# Output magnitude beyond which the loop is declared diverged and the trace
# truncated. Physical signals here are degrees and degrees/second.
DIVERGENCE_LIMIT = 1e12

_MAX_SAMPLES = 10_000_000


@dataclass(frozen=True)
class SignalSpec:
    """Reference signal: a step of ``amplitude`` or a ramp of slope ``rate``,
    both starting at ``start`` seconds (zero before)."""

    shape: str = "step"
    amplitude: float = 0.0
    rate: float = 0.0
    start: float = 0.0

    def __post_init__(self) -> None:
        if self.shape not in ("step", "ramp"):
            raise ValueError(f"shape must be 'step' or 'ramp', got {self.shape!r}")
        for name in ("amplitude", "rate", "start"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.start < 0.0:
            raise ValueError(f"start must be nonnegative, got {self.start}")

    def values(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.shape == "step":
            return np.where(t >= self.start, self.amplitude, 0.0)
        return self.rate * np.maximum(t - self.start, 0.0)


@dataclass(frozen=True)
class DisturbanceSpec(SignalSpec):
    """Signal injected at the plant input (load) or plant output (offset)."""

    inject: str = "input"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.inject not in ("input", "output"):
            raise ValueError(
                f"inject must be 'input' or 'output', got {self.inject!r}"
            )


@dataclass(frozen=True)
class Scenario:
    """One closed-loop run: plant, controller, reference, optional disturbance.

    ``limits`` left as None means: a PID runs with the limits carried by its
    gains, a state-feedback law runs with the default actuator range. An
    explicit value overrides both for this run.
    """

    plant: TransferFunction | StateSpace
    controller: PidGains | StateFeedbackGains
    reference: SignalSpec
    duration: float
    ts: float = CONSTANTS.default_ts
    limits: ActuatorLimits | None = None
    disturbance: DisturbanceSpec | None = None
    loop_delay: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not (math.isfinite(self.ts) and self.ts > 0.0):
            raise ValueError(f"ts must be positive, got {self.ts}")
        n = self.duration / self.ts
        if n > _MAX_SAMPLES:
            raise ValueError(
                f"scenario would need {n:.3g} samples; limit is {_MAX_SAMPLES}"
            )
        if not isinstance(self.controller, (PidGains, StateFeedbackGains)):
            raise ValueError(
                "controller must be PidGains or StateFeedbackGains, got "
                f"{type(self.controller).__name__}"
            )
        if self.reference.start > self.duration:
            raise ValueError(
                f"reference starts at {self.reference.start}s, after the "
                f"{self.duration}s run ends"
            )
        if self.disturbance is not None and self.disturbance.start > self.duration:
            raise ValueError(
                f"disturbance starts at {self.disturbance.start}s, after the "
                f"{self.duration}s run ends"
            )

    def effective_limits(self) -> ActuatorLimits:
        if self.limits is not None:
            return self.limits
        if isinstance(self.controller, PidGains):
            return self.controller.limits
        return DEFAULT_LIMITS


@dataclass(frozen=True)
class SimTrace:
    """Recorded closed-loop trajectory.

    ``u`` is the raw controller command, ``u_sat`` the clamped command the
    plant received. ``x`` holds the plant state (one row per sample).
    ``saturation_fraction`` is the fraction of samples where the command was
    clamped at either limit; ``diverged`` marks truncation at the divergence
    guard. The last sample of a diverged trace records the runaway output;
    its command columns carry the previous command over, since the controller
    does not run on a diverged measurement.
    """

    t: np.ndarray
    r: np.ndarray
    e: np.ndarray
    u: np.ndarray
    u_sat: np.ndarray
    y: np.ndarray
    x: np.ndarray
    ts: float
    saturation_fraction: float
    diverged: bool

    def __len__(self) -> int:
        return self.t.size


def run(scenario: Scenario) -> SimTrace:
    """Simulate the scenario and return the full trace."""
    plant = scenario.plant
    ss = tf_to_ss(plant) if isinstance(plant, TransferFunction) else plant
    if not ss.is_siso:
        raise ValueError("closed-loop simulation needs a SISO plant")
    if np.any(ss.D != 0.0):
        raise ValueError(
            "plants with direct feedthrough (D != 0) would close an algebraic "
            "loop and are not supported"
        )
    dss = discretize_zoh(ss, scenario.ts)
    n = dss.order
    gains = scenario.controller
    is_pid = isinstance(gains, PidGains)
    if not is_pid and len(gains.k1) != n:
        raise ValueError(
            f"k1 has {len(gains.k1)} entries but the plant has {n} states"
        )

    N = int(round(scenario.duration / scenario.ts)) + 1
    t = np.arange(N) * scenario.ts
    r = scenario.reference.values(t)
    dist = scenario.disturbance
    d = dist.values(t) if dist is not None else None
    d_in = d is not None and dist.inject == "input"
    d_out = d is not None and dist.inject == "output"

    Ad = dss.Ad
    bd = dss.Bd[:, 0]
    c = dss.C[0, :]
    limits = scenario.effective_limits()
    if is_pid and (gains.u_min != limits.u_min or gains.u_max != limits.u_max):
        gains = replace(gains, u_min=limits.u_min, u_max=limits.u_max)
    ts = scenario.ts

    x = np.zeros(n)
    xi = 0.0
    state = PidState()
    e_arr = np.empty(N)
    u_arr = np.empty(N)
    us_arr = np.empty(N)
    y_arr = np.empty(N)
    xs = np.empty((N, n))
    u_prev = 0.0
    diverged = False
    end = N
    for k in range(N):
        yk = float(c @ x)
        if d_out:
            yk += d[k]
        xs[k] = x
        y_arr[k] = yk
        rk = r[k]
        ek = rk - yk
        e_arr[k] = ek
        if not math.isfinite(yk) or abs(yk) > DIVERGENCE_LIMIT:
            u_arr[k] = u_prev
            us_arr[k] = limits.clamp(u_prev)
            diverged = True
            end = k + 1
            break
        if is_pid:
            u_cmd, u_sat, state = pid_step(gains, state, ek, ts)
        else:
            u_cmd, u_sat, xi = sf_step(gains, x, xi, rk, yk, ts, limits)
        u_arr[k] = u_cmd
        us_arr[k] = u_sat
        u_in = u_prev if scenario.loop_delay else u_sat
        if d_in:
            u_in = u_in + d[k]
        x = Ad @ x + bd * u_in
        u_prev = u_sat

    t = t[:end]
    r = r[:end]
    e_arr = e_arr[:end]
    u_arr = u_arr[:end]
    us_arr = us_arr[:end]
    y_arr = y_arr[:end]
    xs = xs[:end]
    sat_frac = float(np.mean(u_arr != us_arr)) if end else 0.0
    for arr in (t, r, e_arr, u_arr, us_arr, y_arr, xs):
        arr.setflags(write=False)
    return SimTrace(
        t=t,
        r=r,
        e=e_arr,
        u=u_arr,
        u_sat=us_arr,
        y=y_arr,
        x=xs,
        ts=ts,
        saturation_fraction=sat_frac,
        diverged=diverged,
    )


def max_control(trace: SimTrace) -> float:
    """Largest clamped command seen in the trace (signed maximum)."""
    return float(np.max(trace.u_sat))


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    """Write the trace as a t,r,e,u,u_sat,y CSV (deterministic formatting)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("t,r,e,u,u_sat,y\n")
        for k in range(len(trace)):
            fh.write(
                f"{trace.t[k]:.12g},{trace.r[k]:.12g},{trace.e[k]:.12g},"
                f"{trace.u[k]:.12g},{trace.u_sat[k]:.12g},{trace.y[k]:.12g}\n"
            )


def read_trace_csv(path: str | Path) -> SimTrace:
    """Read a trace CSV produced by :func:`write_trace_csv`."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        expected = ["t", "r", "e", "u", "u_sat", "y"]
        if [h.strip().lower() for h in header] != expected:
            raise ValueError(
                f"{path}:1: expected header {','.join(expected)!r}, got "
                f"{','.join(header)!r}"
            )
        cols: list[list[float]] = [[] for _ in expected]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise ValueError(
                    f"{path}:{lineno}: expected 6 columns, got {len(row)}"
                )
            for i, cell in enumerate(row):
                try:
                    cols[i].append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: could not parse {cell.strip()!r} "
                        "as a number"
                    ) from None
    if len(cols[0]) < 2:
        raise ValueError(f"{path}: trace needs at least 2 samples")
    t, r, e, u, us, y = (np.array(col) for col in cols)
    dt = np.diff(t)
    ts = float(dt[0])
    if ts <= 0.0 or np.any(np.abs(dt - ts) > 1e-6 * ts):
        raise ValueError(f"{path}: t column must be uniformly increasing")
    sat = float(np.mean(u != us))
    return SimTrace(
        t=t, r=r, e=e, u=u, u_sat=us, y=y,
        x=np.zeros((t.size, 0)), ts=ts,
        saturation_fraction=sat, diverged=False,
    )


@dataclass(frozen=True)
class TrackingCase:
    """One plant/controller/requirement combination for the study suites."""

    label: str
    plant: TransferFunction
    controller: PidGains | StateFeedbackGains
    requirement: Requirement
    ts: float = CONSTANTS.default_ts
    limits: ActuatorLimits = DEFAULT_LIMITS
    band_pct: float = CONSTANTS.default_band_pct


@dataclass(frozen=True)
class TrackingRow:
    """Tracking-study outcome for one case."""

    label: str
    controller_kind: str
    linearly_stable: bool
    diverged: bool
    metrics: StepMetrics | None
    verdict: RequirementVerdict | None
    max_control: float
    saturation_fraction: float
    upper_saturated: bool
    clipped_negative: bool
    duration: float


@dataclass(frozen=True)
class DisturbanceRow:
    """Disturbance-study outcome for one case."""

    label: str
    controller_kind: str
    evaluated: bool
    amplitude: float
    onset: float
    metrics: DisturbanceMetrics | None
    rejected: bool
    diverged: bool


def discrete_loop_matrix(
    plant: TransferFunction,
    controller: PidGains | StateFeedbackGains,
    ts: float = CONSTANTS.default_ts,
) -> np.ndarray:
    """One-step transition matrix of the sampled closed loop, saturation off.

    For a PID the state is [plant x, integral, filtered derivative, previous
    error]; for state feedback it is [plant x, integral]. The spectral radius
    of this matrix decides whether the loop the simulator actually runs is
    stable — which the continuous-time pole helpers cannot, since aggressive
    gains that look fine in continuous time can destabilize the 10 ms loop.
    """
    ss = tf_to_ss(plant)
    dss = discretize_zoh(ss, ts)
    n = ss.order
    Ad = dss.Ad
    bd = dss.Bd[:, 0]
    c = ss.C[0, :]
    if isinstance(controller, PidGains):
        g = controller
        m = n + 3
        # z = [x, I_prev, D_prev, e_prev]; rows below express the updated
        # quantities as linear forms over z (reference held at zero)
        e_row = np.concatenate([-c, [0.0, 0.0, 0.0]])
        i_row = np.concatenate([-0.5 * ts * c, [1.0, 0.0, 0.5 * ts]])
        if g.kd != 0.0:
            tf_c = 1.0 / g.deriv_filter_n
            a = 1.0 / (tf_c + ts)
            d_row = np.concatenate([-a * c, [0.0, a * tf_c, -a]])
        else:
            d_row = np.zeros(m)
        u_row = g.kp * e_row + g.ki * i_row + g.kd * d_row
        phi = np.zeros((m, m))
        phi[:n, :n] = Ad
        phi[:n, :] += np.outer(bd, u_row)
        phi[n, :] = i_row
        phi[n + 1, :] = d_row
        phi[n + 2, :] = e_row
        return phi
    g = controller
    if len(g.k1) != n:
        raise ValueError(f"k1 has {len(g.k1)} entries but the plant has {n} states")
    k1 = np.asarray(g.k1, dtype=float)
    m = n + 1
    phi = np.zeros((m, m))
    # u_k = k2 (xi_k + ts (r - y_k)) - k1 x_k with r = 0
    u_row = np.concatenate([-(k1 + ts * g.k2 * c), [g.k2]])
    phi[:n, :n] = Ad
    phi[:n, :] += np.outer(bd, u_row)
    phi[n, :n] = -ts * c
    phi[n, n] = 1.0
    return phi


def _case_duration(case: TrackingCase) -> tuple[bool, float]:
    """(sampled-loop stable, simulation length). Stable loops get windows long
    enough to expose the true steady state; unstable ones a fixed 60 s."""
    phi = discrete_loop_matrix(case.plant, case.controller, case.ts)
    rho = float(np.max(np.abs(np.linalg.eigvals(phi))))
    if rho < 1.0 - 1e-9:
        rate = -math.log(rho) / case.ts
        duration = min(max(2.2 * case.requirement.tss_max, 30.0 / rate), 600.0)
        return True, duration
    return False, 60.0


def _controller_kind(controller) -> str:
    return "pid" if isinstance(controller, PidGains) else "sf"


def _run_tracking_case(case: TrackingCase) -> tuple[TrackingRow, SimTrace]:
    stable, duration = _case_duration(case)
    scen = Scenario(
        plant=case.plant,
        controller=case.controller,
        reference=SignalSpec(shape="step", amplitude=case.requirement.amplitude),
        duration=duration,
        ts=case.ts,
        limits=case.limits,
        label=case.label,
    )
    trace = run(scen)
    metrics = verdict = None
    if len(trace) >= 2:
        metrics = analyze_step(trace, case.band_pct)
        verdict = check_requirements(metrics, case.requirement)
    row = TrackingRow(
        label=case.label,
        controller_kind=_controller_kind(case.controller),
        linearly_stable=stable,
        diverged=trace.diverged,
        metrics=metrics,
        verdict=verdict,
        max_control=max_control(trace),
        saturation_fraction=trace.saturation_fraction,
        upper_saturated=bool(np.any(trace.u > case.limits.u_max)),
        clipped_negative=bool(np.any(trace.u < case.limits.u_min)),
        duration=duration,
    )
    return row, trace


def run_tracking_suite(cases: list[TrackingCase]) -> list[TrackingRow]:
    """Step-tracking study: simulate each case and collect metrics.

    Cases are independent, so they run concurrently; results come back in
    input order, keeping reports deterministic.
    """
    if not cases:
        return []
    with ThreadPoolExecutor(max_workers=min(8, len(cases))) as pool:
        return [row for row, _ in pool.map(_run_tracking_case, cases)]


def run_disturbance_suite(
    cases: list[TrackingCase],
    magnitude_fraction: float = 0.1,
    inject: str = "input",
) -> list[DisturbanceRow]:
    """Disturbance-rejection study.

    Each case first runs its tracking scenario; loops that settle then get a
    constant disturbance stepping in at twice the measured settling time,
    sized as a fraction of the steady-state control effort. Loops that never
    settle are reported as not evaluated.
    """
    if not (math.isfinite(magnitude_fraction) and magnitude_fraction >= 0.0):
        raise ValueError(
            f"magnitude_fraction must be nonnegative, got {magnitude_fraction}"
        )
    if not cases:
        return []
    worker = partial(
        _run_disturbance_case,
        magnitude_fraction=magnitude_fraction,
        inject=inject,
    )
    with ThreadPoolExecutor(max_workers=min(8, len(cases))) as pool:
        return list(pool.map(worker, cases))


def _run_disturbance_case(
    case: TrackingCase, magnitude_fraction: float, inject: str
) -> DisturbanceRow:
    track_row, track_trace = _run_tracking_case(case)
    kind = _controller_kind(case.controller)
    m = track_row.metrics
    if track_row.diverged or m is None or not m.settled:
        return DisturbanceRow(
            label=case.label,
            controller_kind=kind,
            evaluated=False,
            amplitude=0.0,
            onset=0.0,
            metrics=None,
            rejected=False,
            diverged=track_row.diverged,
        )
    tss = m.tss if m.tss and m.tss > 0.0 else 10.0 * case.ts
    onset = max(2.0 * tss, 20.0 * case.ts)
    n_tail = max(1, int(round(0.05 * len(track_trace))))
    u_ss = float(np.mean(track_trace.u_sat[-n_tail:]))
    amp = magnitude_fraction * u_ss
    duration = onset + track_row.duration
    scen = Scenario(
        plant=case.plant,
        controller=case.controller,
        reference=SignalSpec(shape="step", amplitude=case.requirement.amplitude),
        duration=duration,
        ts=case.ts,
        limits=case.limits,
        disturbance=DisturbanceSpec(
            shape="step", amplitude=amp, start=onset, inject=inject
        ),
        label=case.label,
    )
    trace = run(scen)
    if trace.diverged or len(trace) < 2:
        return DisturbanceRow(
            label=case.label,
            controller_kind=kind,
            evaluated=True,
            amplitude=amp,
            onset=onset,
            metrics=None,
            rejected=False,
            diverged=True,
        )
    dm = analyze_disturbance(trace, onset, case.band_pct)
    rejected = dm.final_error <= 1e-6 * abs(case.requirement.amplitude)
    return DisturbanceRow(
        label=case.label,
        controller_kind=kind,
        evaluated=True,
        amplitude=amp,
        onset=onset,
        metrics=dm,
        rejected=rejected,
        diverged=False,
    )
