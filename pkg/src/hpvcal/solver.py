"""Adaptive Dormand-Prince 5(4) integration.

A plain-numpy embedded Runge-Kutta pair with proportional step control,
first-same-as-last stage reuse, exact hitting of requested save times and
typed failures: StiffnessError when the controller would need a step below
the configured minimum, DivergenceError when the state or derivative stops
being finite.  The jitted model integrator mirrors this controller exactly;
this implementation is the readable reference and serves generic test
problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# classic Dormand-Prince coefficients
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = np.zeros((7, 7))
DP_A[1, 0] = 1 / 5
DP_A[2, :2] = (3 / 40, 9 / 40)
DP_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
DP_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
DP_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
DP_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
DP_B5 = DP_A[6].copy()  # 5th-order weights (FSAL: last stage row)
DP_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                   -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
ORDER_EXP = 1 / 5


class SolverError(RuntimeError):
    """Base class for integration failures."""


class StiffnessError(SolverError):
    """Step control demanded a step below min_step."""

    def __init__(self, t: float, step: float):
        self.t = t
        self.step = step
        super().__init__(
            f"step control underflow at t={t:.6g}: required step {step:.3e} "
            f"is below the configured minimum; the problem is too stiff for "
            f"this tolerance")


class DivergenceError(SolverError):
    """State or derivative became non-finite, or left the physical region."""

    def __init__(self, t: float, detail: str = "state is not finite"):
        self.t = t
        super().__init__(f"integration diverged at t={t:.6g}: {detail}")


@dataclass(frozen=True)
class SolverConfig:
    """Step-control settings.

    abs_tol None means an automatic floor of 1e-9 * max(1, |y0|_inf),
    keeping the control effectively relative for order-1 test problems
    while protecting exactly-zero components of large-population states.
    """

    rel_tol: float = 1e-3
    abs_tol: float | None = None
    initial_step: float = 1e-6
    min_step: float = 1e-10
    max_step: float = 0.25

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.initial_step > 0
                and self.min_step > 0 and self.max_step > 0):
            raise ValueError("tolerances and step bounds must be positive")
        if self.abs_tol is not None and self.abs_tol < 0:
            raise ValueError("abs_tol must be non-negative")
        if self.min_step > self.max_step:
            raise ValueError("min_step exceeds max_step")

    def resolve_abs_tol(self, y0: np.ndarray) -> float:
        if self.abs_tol is not None:
            return self.abs_tol
        return 1e-9 * max(1.0, float(np.max(np.abs(y0))))


@dataclass
class SolveResult:
    """Dense snapshots at the requested save times plus step statistics."""

    times: np.ndarray
    states: np.ndarray
    n_accepted: int
    n_rejected: int
    n_evals: int

    @property
    def mean_step(self) -> float:
        span = float(self.times[-1] - self.times[0])
        return span / max(self.n_accepted, 1)


def dormand_prince(f, t0: float, t1: float, y0: np.ndarray,
                   config: SolverConfig | None = None,
                   save_times: np.ndarray | None = None,
                   clip_negative: float | None = None) -> SolveResult:
    """Integrate dy/dt = f(t, y) from t0 to t1.

    save_times defaults to (t0, t1); it must be strictly increasing and lie
    inside [t0, t1].  Save points are hit exactly by clamping the step, so
    snapshots are solution values, not interpolants.  When clip_negative is
    given, snapshot components in (-clip_negative, 0) are set to 0 and
    anything at or below -clip_negative raises DivergenceError.
    """
    config = config or SolverConfig()
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    t1 = float(t1)
    if not t1 > t:
        raise ValueError("t1 must exceed t0")

    if save_times is None:
        save_times = np.array([t0, t1], dtype=float)
    else:
        save_times = np.asarray(save_times, dtype=float)
        if save_times.ndim != 1 or save_times.size == 0:
            raise ValueError("save_times must be a non-empty 1-d array")
        if np.any(np.diff(save_times) <= 0):
            raise ValueError("save_times must be strictly increasing")
        if save_times[0] < t0 - 1e-12 or save_times[-1] > t1 + 1e-12:
            raise ValueError("save_times must lie within [t0, t1]")

    abs_tol = config.resolve_abs_tol(y)
    states = np.empty((save_times.size, y.size))
    next_save = 0
    if _close(save_times[0], t):
        states[0] = _snapshot(y, t, clip_negative)
        next_save = 1

    h_ctrl = min(config.initial_step, config.max_step)
    k1 = np.asarray(f(t, y), dtype=float)
    n_evals = 1
    n_accepted = n_rejected = 0
    k = np.empty((7, y.size))

    while t < t1 and not _close(t, t1):
        if h_ctrl < config.min_step:
            raise StiffnessError(t, h_ctrl)
        target = save_times[next_save] if next_save < save_times.size else t1
        h = min(h_ctrl, target - t)
        hit_target = h < h_ctrl or _close(t + h_ctrl, target)
        if hit_target:
            h = target - t

        k[0] = k1
        for i in range(1, 7):
            yi = y + h * (DP_A[i, :i] @ k[:i])
            k[i] = f(t + DP_C[i] * h, yi)
        n_evals += 6
        y_new = y + h * (DP_B5 @ k)  # identical to stage 7 input by FSAL
        err = h * (DP_ERR @ k)

        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(err))):
            raise DivergenceError(t, "state or error estimate is not finite")

        scale = abs_tol + config.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))

        if err_norm <= 1.0:
            t_new = target if hit_target else t + h
            y = y_new
            k1 = k[6]
            t = t_new
            n_accepted += 1
            if next_save < save_times.size and _close(t, save_times[next_save]):
                states[next_save] = _snapshot(y, t, clip_negative)
                next_save += 1
            factor = MAX_FACTOR if err_norm == 0.0 else min(
                MAX_FACTOR, max(MIN_FACTOR, SAFETY * err_norm ** -ORDER_EXP))
        else:
            n_rejected += 1
            factor = max(MIN_FACTOR, SAFETY * err_norm ** -ORDER_EXP)
        h_ctrl = min(config.max_step, h_ctrl * factor)

    if next_save < save_times.size:
        raise AssertionError("integration ended before all save times")
    return SolveResult(times=save_times.copy(), states=states,
                       n_accepted=n_accepted, n_rejected=n_rejected,
                       n_evals=n_evals)


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def _snapshot(y: np.ndarray, t: float, clip_negative: float | None) -> np.ndarray:
    snap = y.copy()
    if clip_negative is not None:
        low = float(snap.min())
        if low <= -clip_negative:
            raise DivergenceError(
                t, f"component {low:.3e} fell below -{clip_negative:.1e}")
        np.clip(snap, 0.0, None, out=snap)
    return snap
