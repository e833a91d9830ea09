"""Continuous- and discrete-time LTI plant models.

Transfer functions use descending powers of s. State-space realizations
produced by :func:`tf_to_ss` follow the phase-variable controllable canonical
convention: the state is the output integrator chain (x2 = dx1/dt, ...), the
companion row sits at the bottom of A, B = [0, ..., 0, 1]^T and C holds the
numerator coefficients in ascending order. Feedback gain vectors are only
meaningful relative to this ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "TransferFunction",
    "StateSpace",
    "DiscreteStateSpace",
    "SecondOrderCharacter",
    "tf_to_ss",
    "discretize_zoh",
    "simulate",
    "dc_gain",
    "poles",
    "system_type",
    "is_bibo_stable",
    "second_order_character",
]

# Relative tolerance used to decide that a trailing denominator coefficient
# is an exact zero (a pole at the origin) rather than numerical dust.
_ORIGIN_RTOL = 1e-9


def _as_float_tuple(values, name: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} must be a sequence of real numbers") from exc
    if not out:
        raise ValueError(f"{name} must not be empty")
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f"{name} coefficients must be finite")
    return out


@dataclass(frozen=True)
class TransferFunction:
    """Proper SISO rational transfer function, coefficients in descending powers.

    The denominator is normalized to be monic on construction.
    """

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __post_init__(self) -> None:
        num = _as_float_tuple(self.num, "num")
        den = _as_float_tuple(self.den, "den")
        # strip leading zeros, always keeping at least one coefficient
        while len(num) > 1 and num[0] == 0.0:
            num = num[1:]
        while len(den) > 1 and den[0] == 0.0:
            den = den[1:]
        if den[0] == 0.0:
            raise ValueError("den must have a nonzero leading coefficient")
        if len(num) > len(den):
            raise ValueError(
                "improper transfer function: numerator degree "
                f"{len(num) - 1} exceeds denominator degree {len(den) - 1}"
            )
        lead = den[0]
        object.__setattr__(self, "num", tuple(c / lead for c in num))
        object.__setattr__(self, "den", tuple(c / lead for c in den))

    @property
    def order(self) -> int:
        """Denominator degree."""
        return len(self.den) - 1

    def __str__(self) -> str:
        return f"({_poly_str(self.num)}) / ({_poly_str(self.den)})"


def _poly_str(coeffs: tuple[float, ...]) -> str:
    terms = []
    n = len(coeffs) - 1
    for i, c in enumerate(coeffs):
        if c == 0.0 and len(coeffs) > 1:
            continue
        p = n - i
        if p == 0:
            terms.append(f"{c:g}")
        elif p == 1:
            terms.append("s" if c == 1.0 else f"{c:g} s")
        else:
            terms.append(f"s^{p}" if c == 1.0 else f"{c:g} s^{p}")
    return " + ".join(terms) if terms else "0"


def _as_matrix(value, name: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class StateSpace:
    """Continuous-time state-space model dx/dt = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        C = _as_matrix(self.C, "C")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        D = _as_matrix(self.D, "D", (C.shape[0], B.shape[1]))
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def is_siso(self) -> bool:
        return self.B.shape[1] == 1 and self.C.shape[0] == 1


@dataclass(frozen=True)
class DiscreteStateSpace:
    """Discrete-time model x[k+1] = Ad x[k] + Bd u[k], y[k] = C x[k] + D u[k]."""

    Ad: np.ndarray
    Bd: np.ndarray
    C: np.ndarray
    D: np.ndarray
    ts: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.ts) and self.ts > 0.0):
            raise ValueError(f"ts must be positive and finite, got {self.ts}")
        Ad = _as_matrix(self.Ad, "Ad")
        n = Ad.shape[0]
        if Ad.shape != (n, n):
            raise ValueError(f"Ad must be square, got {Ad.shape}")
        Bd = _as_matrix(self.Bd, "Bd")
        if Bd.shape[0] != n:
            raise ValueError(f"Bd must have {n} rows, got {Bd.shape}")
        C = _as_matrix(self.C, "C")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        D = _as_matrix(self.D, "D", (C.shape[0], Bd.shape[1]))
        for name, arr in (("Ad", Ad), ("Bd", Bd), ("C", C), ("D", D)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def order(self) -> int:
        return self.Ad.shape[0]


@dataclass(frozen=True)
class SecondOrderCharacter:
    """Natural frequency and damping ratio of a second-order denominator."""

    wn: float
    zeta: float


def tf_to_ss(tf: TransferFunction) -> StateSpace:
    """Realize a transfer function in phase-variable controllable canonical form.

    For den = s^n + a_{n-1} s^{n-1} + ... + a_0 the bottom row of A is
    [-a_0, -a_1, ..., -a_{n-1}], the superdiagonal is ones, B = e_n, and C
    lists the (strictly proper part's) numerator coefficients in ascending
    powers. A biproper function contributes its high-frequency gain to D.
    """
    n = tf.order
    den = np.asarray(tf.den)
    num = np.asarray(tf.num)
    if len(num) == len(den):
        d = num[0]
        rem = num - d * den
        rem = rem[1:]  # degree drops by construction
    else:
        d = 0.0
        rem = num
    if n == 0:
        return StateSpace(
            np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]]
        )
    A = np.zeros((n, n))
    if n > 1:
        A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[:0:-1]  # ascending a_0..a_{n-1}, negated
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, n))
    C[0, : len(rem)] = rem[::-1]
    return StateSpace(A, B, C, [[d]])


def discretize_zoh(ss: StateSpace, ts: float) -> DiscreteStateSpace:
    """Zero-order-hold discretization via one exponential of the augmented block.

    exp([[A, B], [0, 0]] * ts) = [[Ad, Bd], [0, I]], which is exact for
    inputs held constant over each sample period.
    """
    if not (math.isfinite(ts) and ts > 0.0):
        raise ValueError(f"ts must be positive and finite, got {ts}")
    n = ss.order
    m = ss.B.shape[1]
    if n == 0:
        return DiscreteStateSpace(np.zeros((0, 0)), np.zeros((0, m)), ss.C, ss.D, ts)
    block = np.block(
        [
            [ss.A, ss.B],
            [np.zeros((m, n)), np.zeros((m, m))],
        ]
    )
    phi = expm(block * ts)
    return DiscreteStateSpace(phi[:n, :n], phi[:n, n:], ss.C, ss.D, ts)


def simulate(
    dss: DiscreteStateSpace,
    u: np.ndarray,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate a SISO discrete model over an input sequence.

    Returns ``(y, x)`` where ``y[k]`` is the output at sample k and ``x[k]``
    the state at sample k (before the update). The state trajectory has one
    row per input sample.
    """
    if dss.Bd.shape[1] != 1 or dss.C.shape[0] != 1:
        raise ValueError("simulate expects a single-input single-output model")
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError(f"u must be a 1-D sequence, got shape {u.shape}")
    if u.size == 0:
        raise ValueError("u must contain at least one sample")
    if not np.all(np.isfinite(u)):
        raise ValueError("u must contain only finite values")
    n = dss.order
    if x0 is None:
        x = np.zeros(n)
    else:
        x = np.asarray(x0, dtype=float).reshape(-1)
        if x.shape != (n,):
            raise ValueError(f"x0 must have length {n}, got {x.shape[0]}")
    Ad = dss.Ad
    bd = dss.Bd[:, 0]
    c = dss.C[0, :]
    d = float(dss.D[0, 0])
    N = u.size
    y = np.empty(N)
    xs = np.empty((N, n))
    for k in range(N):
        xs[k] = x
        y[k] = c @ x + d * u[k]
        x = Ad @ x + bd * u[k]
    return y, xs


def system_type(tf: TransferFunction) -> int:
    """Number of poles at the origin (trailing zero denominator coefficients).

    A coefficient counts as zero when its magnitude is below 1e-9 times the
    largest denominator coefficient magnitude.
    """
    scale = max(abs(c) for c in tf.den)
    tol = _ORIGIN_RTOL * scale
    k = 0
    for c in reversed(tf.den):
        if abs(c) <= tol:
            k += 1
        else:
            break
    return min(k, tf.order)


def poles(tf: TransferFunction) -> list[complex]:
    """Denominator roots, multiplicity respected, sorted by (real, imag).

    Poles at the origin are factored out exactly before the numerical root
    finder runs, so integrators come back as exact zeros.
    """
    k = system_type(tf)
    trimmed = tf.den[: len(tf.den) - k] if k else tf.den
    roots = list(np.roots(trimmed)) if len(trimmed) > 1 else []
    roots.extend([0.0] * k)
    roots = [complex(r) for r in roots]
    roots.sort(key=lambda p: (p.real, p.imag))
    return roots


def dc_gain(tf: TransferFunction) -> float:
    """Steady-state gain num(0)/den(0); inf for systems with integrators."""
    num0 = tf.num[-1]
    den0 = tf.den[-1]
    den_scale = max(abs(c) for c in tf.den)
    num_scale = max(abs(c) for c in tf.num)
    if abs(den0) <= _ORIGIN_RTOL * den_scale:
        if num_scale == 0.0 or abs(num0) <= _ORIGIN_RTOL * num_scale:
            raise ValueError(
                "dc gain is indeterminate: numerator and denominator both "
                "vanish at s = 0"
            )
        return math.inf
    return num0 / den0


def is_bibo_stable(tf: TransferFunction) -> bool:
    """True iff every pole has a strictly negative real part."""
    return all(p.real < 0.0 for p in poles(tf))


def second_order_character(tf: TransferFunction) -> SecondOrderCharacter:
    """Extract (wn, zeta) from a second-order denominator s^2 + a1 s + a0.

    Requires a0 > 0 so that wn = sqrt(a0) is real; zeta = a1 / (2 wn) and may
    be negative for unstable systems.
    """
    if tf.order != 2:
        raise ValueError(
            f"second_order_character needs a 2nd-order denominator, got order {tf.order}"
        )
    a1 = tf.den[1]
    a0 = tf.den[2]
    if a0 <= 0.0:
        raise ValueError(
            f"constant denominator coefficient must be positive, got {a0}"
        )
    wn = math.sqrt(a0)
    return SecondOrderCharacter(wn=wn, zeta=a1 / (2.0 * wn))
