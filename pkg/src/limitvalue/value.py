"""Finite-horizon values, shifted values V_{m,t}, sup-averages W_{m,n} and V*.

Two independent routes feed the V_{m,t} tables:

* the grid route: backward dynamic programming on a node grid (ValueField)
  combined with the exact-time reach layers (value_shifted);
* the rollout route: a shared pool of candidate control words rolled out
  from the start state; every pool entry gives a realizable upper bound.

Tables report the pointwise minimum and keep both routes for inspection.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .controls import (
    SearchBudget,
    beam_search_sup,
    candidate_pool,
    refine_word,
    sup_average_from_cumulative,
)
from .grid import GridSpec
from .integrate import PiecewiseConstantControl, rk4_step, rollout, rollout_batch, snap
from .problem import ControlProblem
from .reach import ReachSet, transition_table


class UndefinedValueError(ValueError):
    pass


# --------------------------------------------------------------------------
# value field


@dataclass(eq=False)
class ValueField:
    grid: GridSpec
    step: float
    horizon_steps: int
    record_steps: np.ndarray  # k of each stored layer
    values: np.ndarray  # (R, C) total remaining cost over k steps
    increment_min: float
    increment_max: float
    escape_fraction: float
    contaminated: bool
    layer_min: np.ndarray = field(repr=False, default=None)
    layer_max: np.ndarray = field(repr=False, default=None)

    def layer_index(self, t: float) -> int:
        k = snap(t, self.step)
        hit = np.flatnonzero(self.record_steps == k)
        if abs(k * self.step - t) > 1e-9 * max(1.0, t) or not hit.size:
            raise KeyError(f"horizon {t} is not a stored layer (stride {self.stride_time})")
        return int(hit[0])

    @property
    def stride_time(self) -> float:
        return float((self.record_steps[1] - self.record_steps[0]) * self.step) if len(self.record_steps) > 1 else 0.0

    @property
    def times(self) -> np.ndarray:
        return self.record_steps * self.step

    def total(self, t: float, Y) -> np.ndarray:
        return self.grid.interpolate(self.values[self.layer_index(t)], Y)

    def V(self, t: float, Y) -> np.ndarray:
        """Average value V_t at states Y (multilinear interpolation)."""
        if t <= 0:
            raise ValueError("t must be positive")
        return self.total(t, np.atleast_2d(Y)) / t

    def V_nodes(self, t: float) -> np.ndarray:
        return self.values[self.layer_index(t)] / t

    def lipschitz_estimate(self, times) -> float:
        """Largest finite-difference slope of V_t over the grid, for t in ``times``."""
        best = 0.0
        for t in times:
            v = self.V_nodes(t).reshape(self.grid.shape)
            for ax, w in enumerate(self.grid.width):
                best = max(best, float(np.max(np.abs(np.diff(v, axis=ax)))) / w)
        return best

    def greedy_word(self, problem: ControlProblem, y, n_steps: int) -> np.ndarray:
        """Control word from one-step lookahead on the stored layers."""
        y = np.asarray(y, dtype=float)[None]
        n_sub = problem.substep(self.step)
        nu = problem.n_controls
        word = np.empty(n_steps, dtype=np.int64)
        for s in range(n_steps):
            remaining = n_steps - s - 1
            r = int(np.searchsorted(self.record_steps, min(remaining, self.horizon_steps), side="right") - 1)
            Yn, c = rk4_step(problem, np.repeat(y, nu, axis=0), problem.codebook, self.step, n_sub)
            score = c + self.grid.interpolate(self.values[max(r, 0)], Yn)
            if problem.strict_box:
                score = np.where(problem.in_box(Yn, slack=1e-12), score, np.inf)
            u = int(np.argmin(score))
            word[s] = u
            y = Yn[[u]]
        return word

    def to_csv(self, path, y=None):
        """One row per stored layer: t, V_t(y) (y defaults to none: min/max summary only)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["t", "layer_min", "layer_max"] + (["V_t"] if y is not None else [])
            w.writerow(cols)
            for r, k in enumerate(self.record_steps):
                if k == 0:
                    continue
                t = k * self.step
                row = [repr(float(t)), repr(float(self.layer_min[r] / t)), repr(float(self.layer_max[r] / t))]
                if y is not None:
                    row.append(repr(float(self.V(t, y)[0])))
                w.writerow(row)


def value_backward(problem: ControlProblem, grid: GridSpec, T: float, step: float,
                   stride: int | None = None, max_records: int = 1000, n_threads: int = 1) -> ValueField:
    """Backward dynamic programming for the finite-horizon totals.

    values[k+1](c) = min_u { cost of one step from c under u
                              + interp(values[k], foot point of c under u) }

    Foot points outside the box are clamped to it; when more than 5% escape
    the field is flagged ``contaminated``.
    """
    if not problem.normalized:
        raise ValueError("normalize the cost first (normalize_cost)")
    K = snap(T, step)
    if K < 1 or abs(K * step - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T} must be a positive multiple of step = {step}")
    C, nu = grid.n_cells, problem.n_controls
    Y = np.repeat(grid.centers(), nu, axis=0)
    U = np.tile(problem.codebook, (C, 1))
    F, cost = rk4_step(problem, Y, U, step, problem.substep(step))
    outside = ~problem.in_box(F, slack=1e-12)
    idx, w = grid.interp_weights(F)
    J = idx.shape[1]
    if stride is None:
        stride = max(1, int(np.ceil(K / max_records)))
    values, inc_min, inc_max = kernels.backward_sweep(
        np.zeros(C), np.ascontiguousarray(cost.reshape(C, nu)),
        np.ascontiguousarray(idx.reshape(C, nu, J).astype(np.int64)),
        np.ascontiguousarray(w.reshape(C, nu, J)), int(K), int(stride), int(n_threads),
    )
    rec = np.arange(0, K + 1, stride)
    if rec[-1] != K:
        rec = np.append(rec, K)
    frac = float(outside.mean())
    return ValueField(
        grid=grid, step=step, horizon_steps=K, record_steps=rec, values=np.asarray(values),
        increment_min=float(inc_min), increment_max=float(inc_max),
        escape_fraction=frac, contaminated=frac > 0.05,
        layer_min=np.asarray(values).min(axis=1), layer_max=np.asarray(values).max(axis=1),
    )


def value_shifted(problem: ControlProblem, field: ValueField, reach: ReachSet, m: float, t: float) -> float:
    """V_{m,t}(y0): best V_t over the cells reachable at exactly time m."""
    cells = reach.layer_at_time(m)
    if cells.size == 0:
        raise UndefinedValueError(f"reach layer at m={m} is empty (all escaped)")
    return float(np.min(field.V_nodes(t)[cells]))


# --------------------------------------------------------------------------
# sup-averages


def nu_sup_average(problem: ControlProblem, z, control: PiecewiseConstantControl, m: float, n: float):
    """max over grid times t in [1, n] of gamma_{m,t}(z, control).

    Returns (value, error bar); the bar bounds the gap to the sup over the
    continuum (h in [0, 1] and t >= 1 make gamma Lipschitz in t with constant 2).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    traj = rollout(problem, control, z, m + n)
    dt = traj.spacing
    km, kn, k1 = snap(m, dt), snap(n, dt), int(np.ceil(1.0 / dt - 1e-9))
    val = sup_average_from_cumulative(traj.cumulative_cost[None], km, kn, k1, dt)[0]
    return float(val), 2.0 * dt


def _field_heuristic(field: ValueField, m_steps, n_steps, step):
    if field is None:
        return None
    n_time = n_steps * step
    t_lookup = field.times[field.times > 0]

    def nearest(t):
        return float(t_lookup[np.argmin(np.abs(t_lookup - t))])

    tn = nearest(n_time)

    def h(Y, s, cum, m_steps_=m_steps):
        if s < m_steps:
            return field.V(tn, Y)
        rem = (m_steps + n_steps - s) * step
        inwin = cum[:, s] - cum[:, m_steps]
        if rem <= 0:
            return inwin / n_time
        return (inwin + rem * field.V(nearest(rem), Y)) / n_time
    return h


def W_min_sup(problem: ControlProblem, z, m: float, n: float, step: float,
              budget: SearchBudget = SearchBudget(), field: ValueField | None = None):
    """Upper estimate of W_{m,n}(z) = inf_u nu_{m,n}(z, u) and a witness control.

    Beam search over codebook words (when the word is short enough), seeded
    with constant, two-phase, random and value-greedy words. Always an upper
    bound (up to the sup-over-t grid error).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.asarray(z, dtype=float)
    m_steps, n_steps = snap(m, step), snap(n, step)
    one = int(np.ceil(1.0 / step - 1e-9))
    L = m_steps + n_steps
    extra = []
    if field is not None:
        factor = snap(field.step, step)
        if factor >= 1 and abs(factor * step - field.step) < 1e-12:
            g = field.greedy_word(problem, z, int(np.ceil(L / factor)))
            extra.append(refine_word(g, factor)[:L])
    words = candidate_pool(problem, L, budget, extra)
    beam_val, beam_word = np.inf, None
    if L <= budget.max_beam_steps and budget.beam_width > 0:
        beam_val, beam_word = beam_search_sup(problem, z, m_steps, n_steps, one, step, budget.beam_width,
                                              _field_heuristic(field, m_steps, n_steps, step))
    _, cum, exit_step = rollout_batch(problem, words, step, z)
    vals = sup_average_from_cumulative(cum, m_steps, n_steps, one, step)
    vals = np.where(exit_step > L, vals, np.inf)
    i = int(np.argmin(vals))  # first minimum: lexicographically smallest word
    best_val, best_word = float(vals[i]), words[i]
    if beam_val < best_val or (beam_val == best_val and tuple(beam_word) < tuple(best_word)):
        best_val, best_word = beam_val, beam_word
    if not np.isfinite(best_val):
        raise RuntimeError("no candidate control stayed admissible over the horizon")
    return best_val, PiecewiseConstantControl(step, best_word)


# --------------------------------------------------------------------------
# tables


@dataclass(eq=False)
class AuxValueTables:
    z: np.ndarray
    m_grid: np.ndarray
    t_grid: np.ndarray
    Vmt: np.ndarray
    Wmn: np.ndarray | None
    v_star: float
    bracket: tuple
    vplus: float
    vminus: float
    tau_disc: float
    record_step: float
    Vmt_rollout: np.ndarray | None = None
    Vmt_grid: np.ndarray | None = None
    words: np.ndarray | None = field(default=None, repr=False)
    witness: dict = field(default_factory=dict, repr=False)  # (kind, i, j) -> row of ``words``
    rollout_step: float | None = None

    def witness_control(self, kind: str, i: int, j: int) -> PiecewiseConstantControl:
        return PiecewiseConstantControl(self.rollout_step, self.words[self.witness[(kind, i, j)]])

    @property
    def n_mask(self) -> np.ndarray:
        """Columns of t_grid usable as n for W (n >= 1)."""
        return self.t_grid >= 1.0 - 1e-12

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.where(np.isfinite(a), a, None).tolist()
        return {
            "z": self.z.tolist(), "m_grid": self.m_grid.tolist(), "t_grid": self.t_grid.tolist(),
            "Vmt": arr(self.Vmt), "Wmn": arr(self.Wmn), "v_star": self.v_star, "bracket": list(self.bracket),
            "vplus": self.vplus, "vminus": self.vminus, "tau_disc": self.tau_disc,
            "record_step": self.record_step, "Vmt_rollout": arr(self.Vmt_rollout), "Vmt_grid": arr(self.Vmt_grid),
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "t", "V_mt", "W_mn", "V_mt_rollout", "V_mt_grid"])
            for i, m in enumerate(self.m_grid):
                for j, t in enumerate(self.t_grid):
                    def f(a):
                        return "" if a is None or not np.isfinite(a[i, j]) else repr(float(a[i, j]))
                    w.writerow([repr(float(m)), repr(float(t)), f(self.Vmt), f(self.Wmn),
                                f(self.Vmt_rollout), f(self.Vmt_grid)])


def _as_grid(values):
    return np.array(sorted(float(v) for v in values))


def _record_every(values, step, record_dt):
    counts = [snap(v, step) for v in values]
    for v, c in zip(values, counts):
        if abs(c * step - v) > 1e-9 * max(1.0, v):
            raise ValueError(f"grid value {v} is not a multiple of the rollout step {step}")
    g = max(1, snap(record_dt, step))
    for c in counts:
        g = int(np.gcd(g, c)) if c else g
    return max(1, g)


def build_tables(problem: ControlProblem, z, m_grid, t_grid, rollout_step: float,
                 budget: SearchBudget = SearchBudget(), field: ValueField | None = None,
                 reach: ReachSet | None = None, words: np.ndarray | None = None,
                 record_dt: float = 0.25, with_W: bool = True) -> AuxValueTables:
    """Assemble V_{m,t}(z) and W_{m,n}(z) on m_grid x t_grid.

    ``words`` replaces the candidate pool (e.g. the full word set for an
    exhaustive oracle). The grid route is used when ``field`` and ``reach``
    (propagated from z) are both given.
    """
    z = np.asarray(z, dtype=float)
    m_grid, t_grid = _as_grid(m_grid), _as_grid(t_grid)
    if not len(m_grid) or not len(t_grid):
        raise ValueError("empty m or t grid")
    if m_grid[0] != 0.0:
        raise ValueError("m_grid must contain 0")
    re = _record_every(list(m_grid) + list(t_grid) + [1.0], rollout_step, record_dt)
    rdt = re * rollout_step
    L = snap(m_grid[-1] + t_grid[-1], rollout_step)
    if words is None:
        extra = []
        if field is not None:
            factor = snap(field.step, rollout_step)
            if factor >= 1 and abs(factor * rollout_step - field.step) < 1e-12:
                g = field.greedy_word(problem, z, int(np.ceil(L / factor)))
                extra.append(refine_word(g, factor)[:L])
        words = candidate_pool(problem, L, budget, extra)
    words = np.asarray(words, dtype=np.int64)
    if words.shape[1] < L:
        raise ValueError("candidate words shorter than max(m) + max(t)")
    words = words[:, :L]
    _, cum, exit_step = rollout_batch(problem, words, rollout_step, z, record_every=re)
    exit_rec = exit_step / re  # in record units; admissible up to floor

    mi = np.array([snap(m, rdt) for m in m_grid])
    ti = np.array([snap(t, rdt) for t in t_grid])
    Vroll = np.full((len(m_grid), len(t_grid)), np.inf)
    witness = {}
    for a, m in enumerate(mi):
        for b, t in enumerate(ti):
            ok = exit_rec > m + t
            vals = np.where(ok, (cum[:, m + t] - cum[:, m]) / (t * rdt), np.inf)
            k = int(np.argmin(vals))
            Vroll[a, b] = vals[k]
            witness[("V", a, b)] = k
    Wmn = None
    if with_W:
        Wmn = np.full_like(Vroll, np.nan)
        one = snap(1.0, rdt) if abs(snap(1.0, rdt) * rdt - 1.0) < 1e-12 else int(np.ceil(1.0 / rdt))
        nmax = ti.max()
        for a, m in enumerate(mi):
            ts = np.arange(one, nmax + 1)
            seg = (cum[:, m + ts] - cum[:, [m]]) / (ts[None, :] * rdt)
            run = np.maximum.accumulate(seg, axis=1)
            for b, t in enumerate(ti):
                if t < one:
                    continue
                ok = exit_rec > m + t
                vals = np.where(ok, run[:, t - one], np.inf)
                k = int(np.argmin(vals))
                Wmn[a, b] = vals[k]
                witness[("W", a, b)] = k

    Vgrid = None
    if field is not None and reach is not None:
        Vgrid = np.full_like(Vroll, np.inf)
        for a, m in enumerate(m_grid):
            try:
                cells = reach.layer_at_time(m)
            except ValueError:
                continue
            if not cells.size:
                continue
            for b, t in enumerate(t_grid):
                try:
                    Vgrid[a, b] = float(np.min(field.V_nodes(t)[cells]))
                except KeyError:
                    pass
    Vmt = Vroll if Vgrid is None else np.minimum(Vroll, Vgrid)
    if not np.all(np.isfinite(Vmt)):
        raise UndefinedValueError("some V_{m,t} entries have no admissible candidate")

    step_for_tau = field.step if field is not None else rollout_step
    tau = 2.0 * step_for_tau
    if field is not None:
        ts = [t for t in t_grid if t >= 1.0 and _has_layer(field, t)]
        tau += 2.0 * float(np.max(field.grid.width)) * field.lipschitz_estimate(ts)
    tables = AuxValueTables(
        z=z, m_grid=m_grid, t_grid=t_grid, Vmt=Vmt, Wmn=Wmn, v_star=np.nan, bracket=(np.nan, np.nan),
        vplus=np.nan, vminus=np.nan, tau_disc=tau, record_step=rdt, Vmt_rollout=Vroll, Vmt_grid=Vgrid,
        words=words, witness=witness, rollout_step=rollout_step,
    )
    top = t_grid >= t_grid[-1] / 10.0
    tables.vplus = float(np.max(Vmt[0, top]))
    tables.vminus = float(np.min(Vmt[0, top]))
    tables.v_star, tables.bracket = value_star(problem, tables)
    return tables


def _has_layer(field, t):
    try:
        field.layer_index(t)
        return True
    except KeyError:
        return False


def value_star(problem: ControlProblem, tables: AuxValueTables):
    """V* = max over t of min over m of V_{m,t}; bracket upper end from W when available."""
    if tables.Vmt.size == 0:
        raise ValueError("empty tables")
    lo = float(np.max(np.min(tables.Vmt, axis=0)))
    if tables.Wmn is not None and np.any(tables.n_mask):
        hi = float(np.min(np.max(tables.Wmn[:, tables.n_mask], axis=1)))
    else:
        hi = lo + tables.tau_disc
    return lo, (lo, hi)


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class Check:
    name: str
    passed: bool
    worst: float  # worst residual (positive = violation beyond slack)
    slack: float
    witness: dict

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "worst": float(self.worst),
                "slack": float(self.slack), "witness": self.witness}


@dataclass
class ConvergenceReport:
    tau_disc: float
    checks: list
    summary: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        return next(c for c in self.checks if c.name == name)

    def to_dict(self):
        return {"tau_disc": self.tau_disc, "passed": self.passed, "summary": self.summary,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self):
        lines = [f"tau_disc = {self.tau_disc:.6g}"]
        for k, v in self.summary.items():
            lines.append(f"{k} = {v}")
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: worst residual {c.worst:+.3e} "
                         f"(slack {c.slack:.3e}) witness {c.witness}")
        return "\n".join(lines)


def _on_grid(values, x):
    hit = np.flatnonzero(np.abs(values - x) < 1e-9)
    return int(hit[0]) if hit.size else None


def limit_diagnostics(problem: ControlProblem, tables: AuxValueTables, field: ValueField | None = None,
                      tau: float | None = None) -> ConvergenceReport:
    """Grid-level checks of the limit-value inequalities, each with an explicit slack."""
    tau = tables.tau_disc if tau is None else tau
    V, W = tables.Vmt, tables.Wmn
    mg, tg = tables.m_grid, tables.t_grid
    checks = []

    # (a) ordering chain sup_t inf_{m<=m0} V >= V+ >= V- >= sup_t inf_m V
    t_max = tg[-1]
    worst, wit = -np.inf, {}
    for i, m0 in enumerate(mg):
        if m0 > t_max / 10.0:
            break
        left = float(np.max(np.min(V[: i + 1], axis=0)))
        r = tables.vplus - left - 2.0 * m0 / t_max
        if r > worst:
            worst, wit = r, {"m0": float(m0), "sup_t_inf_m_le_m0": left, "vplus": tables.vplus}
    checks.append(Check("chain_upper", worst <= tau, worst, tau, wit))
    top = tg >= t_max / 10.0
    t_at_vminus = float(tg[top][np.argmin(V[0, top])])
    inf_m = np.min(V, axis=0)
    res = inf_m - tg / t_at_vminus - tables.vminus
    j = int(np.argmax(res))
    checks.append(Check("chain_lower", res[j] <= tau, float(res[j]), tau,
                        {"t": float(tg[j]), "inf_m_V": float(inf_m[j]), "vminus": tables.vminus,
                         "T_of_vminus": t_at_vminus, "gap_vminus_minus_sup_inf": tables.vminus - float(np.max(inf_m))}))
    checks.append(Check("vplus_ge_vminus", tables.vplus >= tables.vminus, tables.vminus - tables.vplus, 0.0, {}))

    # (c) inf_m V_{m,t} <= inf_m V_{m,2t}
    worst, wit = -np.inf, {}
    for j, t in enumerate(tg):
        j2 = _on_grid(tg, 2 * t)
        if j2 is None:
            continue
        rows = [i for i, m in enumerate(mg) if _on_grid(mg, m + t) is not None]
        if not rows:
            continue
        r = float(np.min(V[:, j]) - np.min(V[rows, j2]))
        if r > worst:
            worst, wit = r, {"t": float(t)}
    if wit:
        checks.append(Check("inf_m_V_doubling", worst <= tau, worst, tau, wit))

    if W is not None:
        nm = tables.n_mask
        Wn, Vn, ng = W[:, nm], V[:, nm], tg[nm]
        d = Vn - Wn
        i, j = np.unravel_index(np.argmax(d), d.shape)
        checks.append(Check("W_ge_V", d[i, j] <= tau, float(d[i, j]), tau, {"m": float(mg[i]), "n": float(ng[j])}))
        if Wn.shape[1] > 1:
            dn = Wn[:, :-1] - Wn[:, 1:]
            i, j = np.unravel_index(np.argmax(dn), dn.shape)
            checks.append(Check("W_nondecreasing_in_n", dn[i, j] <= tau, float(dn[i, j]), tau,
                                {"m": float(mg[i]), "n": float(ng[j])}))
        if len(mg) > 1:
            dm = np.abs(Wn[:, None, :] - Wn[None, :, :]) - np.abs(mg[:, None, None] - mg[None, :, None])
            i, i2, j = np.unravel_index(np.argmax(dm), dm.shape)
            checks.append(Check("W_lipschitz_in_m", dm[i, i2, j] <= tau, float(dm[i, i2, j]), tau,
                                {"m": float(mg[i]), "m_prime": float(mg[i2]), "n": float(ng[j])}))
        # shift-average bound: V_{m,n} >= min_{m <= l <= m+n} W_{l,k} - k/n
        full = np.allclose(np.diff(mg), tables.record_step) if len(mg) > 1 else True
        extra = 0.0 if full else float(np.max(np.diff(mg))) if len(mg) > 1 else 0.0
        worst, wit = -np.inf, {}
        for i, m in enumerate(mg):
            for j, n in enumerate(ng):
                if m + n > mg[-1] + 1e-9:
                    continue
                ls = (mg >= m - 1e-12) & (mg <= m + n + 1e-12)
                for kk, k in enumerate(ng):
                    r = float(np.min(Wn[ls, kk]) - k / n - Vn[i, j])
                    if r > worst:
                        worst, wit = r, {"m": float(m), "n": float(n), "k": float(k)}
        if wit:
            checks.append(Check("shift_average_bound", worst <= tau + extra, worst, tau + extra, wit))
        # h_m profile: min_{m' <= m} max_n W_{m',n}
        prof = np.minimum.accumulate(np.max(Wn, axis=1))
        mono = float(np.max(np.diff(prof))) if len(prof) > 1 else 0.0
        checks.append(Check("h_m_profile_nonincreasing", mono <= 0.0, mono, 0.0,
                            {"profile": prof.tolist(), "final_minus_vstar": float(prof[-1] - tables.v_star)}))
    lo, hi = tables.bracket
    checks.append(Check("bracket_consistent", lo <= hi + tau, lo - hi, tau, {"lo": lo, "hi": hi}))
    summary = {
        "v_star": tables.v_star, "bracket": list(tables.bracket), "vplus_empirical": tables.vplus,
        "vminus_empirical": tables.vminus, "sup_t_inf_m_V": float(np.max(inf_m)),
    }
    if field is not None:
        summary["field_escape_fraction"] = field.escape_fraction
        summary["field_contaminated"] = field.contaminated
    return ConvergenceReport(tau, checks, summary)


# --------------------------------------------------------------------------
# V* at arbitrary states


class VStarOracle:
    """V*(z) at arbitrary states, combining both routes.

    Grid route: V_t closed under the one-step reach graph (best V_t over all
    grid-reachable cells), interpolated at z. Rollout route: a candidate pool
    from z over the (m, t) grids. Results are cached by state.
    """

    def __init__(self, problem, m_grid, t_grid, rollout_step, budget=SearchBudget(), field=None,
                 record_dt=0.25):
        self.problem = problem
        self.m_grid, self.t_grid = _as_grid(m_grid), _as_grid(t_grid)
        self.rollout_step = rollout_step
        self.budget = budget
        self.field = field
        self.record_dt = record_dt
        self._cache = {}
        self._closed = None
        if field is not None:
            table = transition_table(problem, field.grid, field.step)
            closed = []
            for t in self.t_grid:
                if _has_layer(field, t):
                    q, _ = kernels.min_closure(np.ascontiguousarray(field.V_nodes(t)), table, 10 ** 9)
                    closed.append(np.asarray(q))
                else:
                    closed.append(None)
            self._closed = closed

    def inf_m(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        key = tuple(np.round(z, 12))
        if key in self._cache:
            return self._cache[key]
        tabs = build_tables(self.problem, z, self.m_grid, self.t_grid, self.rollout_step, self.budget,
                            field=None, record_dt=self.record_dt, with_W=False)
        best = np.min(tabs.Vmt, axis=0)
        if self._closed is not None:
            for j, q in enumerate(self._closed):
                if q is not None:
                    best[j] = min(best[j], float(self.field.grid.interpolate(q, z[None])[0]))
        self._cache[key] = best
        return best

    def __call__(self, z) -> float:
        return float(np.max(self.inf_m(z)))
