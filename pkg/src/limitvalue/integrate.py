"""Fixed-step RK4 rollouts under piecewise-constant codebook controls."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .problem import ControlProblem


class IntegrationError(RuntimeError):
    pass


class BoxExitError(IntegrationError):
    def __init__(self, time, state):
        self.time = float(time)
        self.state = np.asarray(state)
        super().__init__(f"trajectory left the box at t={self.time:.6g}, y={self.state.tolist()}")


class BlowUpError(IntegrationError):
    def __init__(self, time):
        self.time = float(time)
        super().__init__(f"non-finite state at t={self.time:.6g}")


@dataclass(frozen=True, eq=False)
class PiecewiseConstantControl:
    step: float
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if self.step <= 0:
            raise ValueError("control step must be positive")
        if idx.size < 1:
            raise ValueError("control needs at least one step")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    @property
    def duration(self) -> float:
        return self.step * len(self.indices)

    def validate(self, problem: ControlProblem):
        if self.indices.min() < 0 or self.indices.max() >= problem.n_controls:
            raise ValueError("control index outside the codebook")

    def concat(self, other: "PiecewiseConstantControl") -> "PiecewiseConstantControl":
        if not np.isclose(self.step, other.step, rtol=0, atol=1e-15):
            raise ValueError("cannot concatenate controls with different steps")
        return PiecewiseConstantControl(self.step, np.concatenate([self.indices, other.indices]))

    def head(self, n_steps: int) -> "PiecewiseConstantControl":
        return PiecewiseConstantControl(self.step, self.indices[:n_steps])

    def extend_to(self, n_steps: int, block: np.ndarray | None = None) -> "PiecewiseConstantControl":
        """Pad to ``n_steps`` by repeating ``block`` (default: the whole word)."""
        block = self.indices if block is None else np.asarray(block, dtype=np.int64)
        if len(self.indices) >= n_steps:
            return self.head(n_steps)
        reps = int(np.ceil((n_steps - len(self.indices)) / len(block)))
        tail = np.tile(block, reps)[: n_steps - len(self.indices)]
        return PiecewiseConstantControl(self.step, np.concatenate([self.indices, tail]))

    @classmethod
    def constant(cls, step, index, n_steps):
        return cls(step, np.full(n_steps, index, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    control_index_per_step: np.ndarray
    cumulative_cost: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def to_csv(self, path):
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"y_{i + 1}" for i in range(d)] + ["control_index", "cumulative_cost"])
            for k, t in enumerate(self.times):
                # the control row index refers to the step starting at this time
                ci = int(self.control_index_per_step[k]) if k < len(self.control_index_per_step) else ""
                w.writerow([repr(float(t))] + [repr(float(v)) for v in self.states[k]] + [ci, repr(float(self.cumulative_cost[k]))])


def rk4_step(problem: ControlProblem, Y, U, step, n_sub):
    """Advance a batch of states by one control step.

    Returns (new states, trapezoidal cost integrated over the step).
    """
    hs = step / n_sub
    cost = np.zeros(len(Y))
    # overflow is reported by the callers as a blow-up
    with np.errstate(over="ignore", invalid="ignore"):
        c0 = problem.h(Y, U)
        for _ in range(n_sub):
            k1 = problem.g(Y, U)
            k2 = problem.g(Y + 0.5 * hs * k1, U)
            k3 = problem.g(Y + 0.5 * hs * k2, U)
            k4 = problem.g(Y + hs * k3, U)
            Y = Y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            c1 = problem.h(Y, U)
            cost = cost + 0.5 * hs * (c0 + c1)
            c0 = c1
    return Y, cost


def _n_steps(T, step):
    k = int(round(T / step))
    if abs(k * step - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"horizon {T} is not a multiple of the control step {step}")
    return k


def rollout(problem: ControlProblem, control: PiecewiseConstantControl, y_start=None, T=None,
            n_sub: int | None = None, check_box: bool | None = None) -> Trajectory:
    """Integrate the dynamics under ``control`` up to time ``T``."""
    control.validate(problem)
    y = problem.y0 if y_start is None else np.asarray(y_start, dtype=float)
    T = control.duration if T is None else T
    K = _n_steps(T, control.step)
    if K > len(control):
        raise ValueError(f"horizon {T} exceeds control duration {control.duration}")
    check_box = problem.strict_box if check_box is None else check_box
    if check_box and not problem.in_box(y[None])[0]:
        raise BoxExitError(0.0, y)
    n_sub = problem.substep(control.step) if n_sub is None else n_sub
    states = np.empty((K + 1, problem.dim))
    cum = np.zeros(K + 1)
    states[0] = y
    Y = y[None].astype(float)
    for k in range(K):
        U = problem.codebook[control.indices[k]][None]
        Y, c = rk4_step(problem, Y, U, control.step, n_sub)
        if not np.all(np.isfinite(Y)):
            raise BlowUpError((k + 1) * control.step)
        if check_box and not problem.in_box(Y, slack=1e-12)[0]:
            raise BoxExitError((k + 1) * control.step, Y[0])
        states[k + 1] = Y[0]
        cum[k + 1] = cum[k] + c[0]
    times = np.arange(K + 1) * control.step
    return Trajectory(times, states, control.indices[:K].copy(), cum)


def rollout_batch(problem: ControlProblem, words: np.ndarray, step: float, y_start=None,
                  record_every: int = 1, n_sub: int | None = None):
    """Roll out many control words at once.

    ``words`` is (N, K) codebook indices. Returns (states at recorded steps
    (N, R, d), cumulative cost at recorded steps (N, R), exit step per word
    (K + 1 when the word never left the box or the box is not strict)).
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    N, K = words.shape
    y = problem.y0 if y_start is None else np.asarray(y_start, dtype=float)
    n_sub = problem.substep(step) if n_sub is None else n_sub
    rec_steps = np.arange(0, K + 1, record_every)
    if rec_steps[-1] != K:
        rec_steps = np.append(rec_steps, K)
    R = len(rec_steps)
    states = np.empty((N, R, problem.dim))
    cum_rec = np.empty((N, R))
    Y = np.tile(y, (N, 1)).astype(float)
    cum = np.zeros(N)
    exit_step = np.full(N, K + 1, dtype=np.int64)
    states[:, 0] = Y
    cum_rec[:, 0] = 0.0
    r = 1
    for k in range(K):
        U = problem.codebook[words[:, k]]
        Y, c = rk4_step(problem, Y, U, step, n_sub)
        cum = cum + c
        bad = ~np.all(np.isfinite(Y), axis=1)
        if problem.strict_box:
            bad |= ~problem.in_box(Y, slack=1e-12)
        newly = bad & (exit_step > K)
        exit_step[newly] = k + 1
        if bad.any():
            Y[bad] = np.nan_to_num(Y[bad], nan=0.0, posinf=0.0, neginf=0.0)
        if r < R and rec_steps[r] == k + 1:
            states[:, r] = Y
            cum_rec[:, r] = cum
            r += 1
    return states, cum_rec, exit_step


def snap(x: float, spacing: float) -> int:
    """Nearest grid index; ties round half to even (numpy rounding)."""
    return int(np.rint(x / spacing))


def average_cost(traj: Trajectory, m: float, t: float) -> float:
    """(1/t) * integral of the running cost over [m, m + t], snapped to the time grid."""
    if t <= 0:
        raise ValueError("t must be positive")
    dt = traj.spacing
    km, kt = snap(m, dt), max(1, snap(t, dt))
    if km + kt > len(traj.times) - 1:
        raise ValueError(f"window [{m}, {m + t}] exceeds trajectory length {traj.final_time}")
    return float((traj.cumulative_cost[km + kt] - traj.cumulative_cost[km]) / (kt * dt))
