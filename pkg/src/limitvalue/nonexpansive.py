"""Sampled checks of the nonexpansivity conditions and greedy shadow controls.

Scalar condition, for every sampled pair (y1, y2):

    max over u of min over v of <y1 - y2, g(y1, u) - g(y2, v)>  <=  tol

Delta condition, for every pair and every u, some v must satisfy both

    forward-difference Dini quotient of delta along (g(y1, u), g(y2, v)) <= tol
    h(y2, v) - h(y1, u) <= modulus(delta(y1, y2)) + tol
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .integrate import PiecewiseConstantControl, rk4_step
from .problem import ControlProblem, sample_states
from .reach import ReachSet

DEFAULT_TAUS = (1e-2, 1e-3, 1e-4)


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True, eq=False)
class DeltaMetric:
    """A symmetric function vanishing on the diagonal plus a cost modulus.

    ``delta`` takes batches (..., d) x (..., d) -> (...). ``modulus`` is
    nondecreasing with modulus(0) = 0 and bounds cost mismatches by delta.
    """

    delta: Callable
    modulus: Callable
    name: str
    locally_lipschitz: bool = True

    def __call__(self, a, b):
        return self.delta(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def _sq_euclid(a, b):
    return np.sum((a - b) ** 2, axis=-1)


def _l1(a, b):
    return np.sum(np.abs(a - b), axis=-1)


def cost_slope(problem: ControlProblem, samples: int = 4000, seed: int = 0) -> float:
    """Sampled sup of |h(x, u) - h(y, u)| / |x - y| over far and local pairs."""
    rng = np.random.default_rng(seed)
    X = sample_states(problem, samples, rng)
    width = problem.box[:, 1] - problem.box[:, 0]
    Yfar = sample_states(problem, samples, rng)
    Ynear = np.clip(X + (rng.random(X.shape) - 0.5) * 1e-3 * width, problem.box[:, 0], problem.box[:, 1])
    best = 0.0
    for Y in (Yfar, Ynear):
        dist = np.linalg.norm(X - Y, axis=1)
        ok = dist > 1e-14
        for u in problem.codebook:
            U = np.tile(u, (samples, 1))
            dh = np.abs(problem.h(X, U) - problem.h(Y, U))
            best = max(best, float(np.max(dh[ok] / dist[ok])) if ok.any() else 0.0)
    return best


def squared_euclidean_metric(problem: ControlProblem, samples: int = 4000, seed: int = 0,
                             safety: float = 1.05) -> DeltaMetric:
    """delta = |y1 - y2|^2 with modulus min(1, K sqrt(s)).

    K is the sampled cost slope times ``safety``; for a discontinuous cost it
    is large, as it should be.
    """
    K = safety * cost_slope(problem, samples, seed)

    def modulus(s):
        return np.minimum(1.0, K * np.sqrt(np.maximum(np.asarray(s, dtype=float), 0.0)))
    return DeltaMetric(_sq_euclid, modulus, f"squared_euclidean(K={K:.6g})")


def l1_metric(modulus: Callable | None = None) -> DeltaMetric:
    """delta = |y1 - y2|_1; the default modulus min(s, 1) suits costs with unit L1 slope."""
    if modulus is None:
        def modulus(s):
            return np.minimum(np.asarray(s, dtype=float), 1.0)
    return DeltaMetric(_l1, modulus, "l1")


def zero_metric() -> DeltaMetric:
    return DeltaMetric(lambda a, b: np.zeros(np.broadcast_shapes(a.shape, b.shape)[:-1]),
                       lambda s: np.zeros_like(np.asarray(s, dtype=float)), "zero")


def metric_axioms(metric: DeltaMetric, problem: ControlProblem, samples: int = 200, seed: int = 0) -> dict:
    """Sampled diagonal, symmetry and modulus-monotonicity residuals."""
    rng = np.random.default_rng(seed)
    A, B = sample_states(problem, samples, rng), sample_states(problem, samples, rng)
    s = np.sort(np.concatenate([[0.0], rng.random(samples) * 4.0]))
    m = np.asarray(metric.modulus(s))
    return {
        "diagonal": float(np.max(np.abs(metric(A, A)))),
        "symmetry": float(np.max(np.abs(metric(A, B) - metric(B, A)))),
        "modulus_at_zero": float(metric.modulus(np.array(0.0))),
        "modulus_decrease": float(max(0.0, -np.min(np.diff(m)))),
    }


# --------------------------------------------------------------------------
# pair sampling


def sample_pairs(problem: ControlProblem, reach: ReachSet | None = None, n_reach: int = 200,
                 n_random: int = 100, seed: int = 0) -> np.ndarray:
    """(P, 2, d) state pairs: all distinct pairs of up to ``n_reach`` reach-set
    cell centers plus ``n_random`` uniform in-box pairs (seeded)."""
    rng = np.random.default_rng(seed)
    parts = []
    if reach is not None:
        cells = reach.cumulative
        if len(cells) > n_reach:
            cells = np.sort(rng.choice(cells, n_reach, replace=False))
        C = reach.grid.centers(cells)
        i, j = np.triu_indices(len(C), k=1)
        parts.append(np.stack([C[i], C[j]], axis=1))
    if n_random:
        parts.append(np.stack([sample_states(problem, n_random, rng), sample_states(problem, n_random, rng)], axis=1))
    if not parts:
        return np.empty((0, 2, problem.dim))
    return np.concatenate(parts, axis=0)


def _pairs(problem, pairs) -> np.ndarray:
    if isinstance(pairs, ReachSet):
        return sample_pairs(problem, pairs)
    P = np.asarray(pairs, dtype=float)
    if P.ndim == 2:
        P = P[None]
    if P.ndim != 3 or P.shape[1:] != (2, problem.dim):
        raise ValueError(f"pairs must have shape (P, 2, {problem.dim})")
    return P


# --------------------------------------------------------------------------
# reports


@dataclass
class NonexpansionReport:
    condition: str  # scalar | delta
    max_violation: float
    witness: dict
    samples: int
    tolerance: float
    all_valid: bool = True
    metric: str = ""
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance and self.all_valid)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        head = f"[{'PASS' if self.passed else 'FAIL'}] {self.condition}"
        if self.metric:
            head += f" ({self.metric})"
        lines = [head, f"  max violation {self.max_violation:+.6e} (tol {self.tolerance:.1e}) over {self.samples} samples",
                 f"  witness {self.witness}"]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def scalar_matrix(problem: ControlProblem, y1, y2) -> np.ndarray:
    """<y1 - y2, g(y1, u) - g(y2, v)> for every (pair, u, v): shape (P, nu, nu)."""
    Y1, Y2 = np.atleast_2d(y1), np.atleast_2d(y2)
    P, nu = len(Y1), problem.n_controls
    U = np.tile(problem.codebook, (P, 1))
    G1 = problem.g(np.repeat(Y1, nu, axis=0), U).reshape(P, nu, -1)
    G2 = problem.g(np.repeat(Y2, nu, axis=0), U).reshape(P, nu, -1)
    D = Y1 - Y2
    a = np.einsum("pd,pud->pu", D, G1)
    b = np.einsum("pd,pvd->pv", D, G2)
    return a[:, :, None] - b[:, None, :]


def check_scalar(problem: ControlProblem, pairs, tol: float = 1e-9) -> NonexpansionReport:
    P = _pairs(problem, pairs)
    M = scalar_matrix(problem, P[:, 0], P[:, 1])
    inner = M.min(axis=2)  # best v per (pair, u)
    vals = inner.max(axis=1)
    p = int(np.argmax(vals))
    u = int(np.argmax(inner[p]))
    v = int(np.argmin(M[p, u]))
    wit = {"y1": P[p, 0].tolist(), "y2": P[p, 1].tolist(), "u": u, "v": v, "value": float(vals[p])}
    return NonexpansionReport("scalar", float(vals[p]), wit, len(P), tol)


def dini_forward(metric: DeltaMetric, y1, y2, g1, g2, tau_list=DEFAULT_TAUS):
    """Forward-difference proxy of the contingent epiderivative of delta.

    Returns (min over tau of the quotients, quotients per tau). Works on
    batches: inputs broadcast over leading axes.
    """
    taus = tuple(float(t) for t in tau_list)
    if not taus or any(t <= 0 for t in taus) or any(a <= b for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be positive and strictly decreasing")
    y1, y2, g1, g2 = (np.asarray(x, dtype=float) for x in (y1, y2, g1, g2))
    base = metric(y1, y2)
    qs = []
    for t in taus:
        q = (metric(y1 + t * g1, y2 + t * g2) - base) / t
        if not np.all(np.isfinite(q)):
            raise FloatingPointError("non-finite delta evaluation")
        qs.append(q)
    qs = np.stack(qs)
    return qs.min(axis=0), qs


def delta_residuals(problem: ControlProblem, metric: DeltaMetric, y1, y2, tau_list=DEFAULT_TAUS):
    """Per (pair, u, v): (dini proxy, cost gap minus modulus), each shaped (P, nu, nu)."""
    Y1, Y2 = np.atleast_2d(y1), np.atleast_2d(y2)
    P, nu = len(Y1), problem.n_controls
    U = np.tile(problem.codebook, (P, 1))
    R1, R2 = np.repeat(Y1, nu, axis=0), np.repeat(Y2, nu, axis=0)
    G1 = problem.g(R1, U).reshape(P, nu, 1, -1)
    G2 = problem.g(R2, U).reshape(P, 1, nu, -1)
    H1 = problem.h(R1, U).reshape(P, nu, 1)
    H2 = problem.h(R2, U).reshape(P, 1, nu)
    a, b = Y1[:, None, None, :], Y2[:, None, None, :]
    dini, _ = dini_forward(metric, np.broadcast_to(a, G1.shape[:1] + (nu, nu, a.shape[-1])),
                           np.broadcast_to(b, G1.shape[:1] + (nu, nu, b.shape[-1])),
                           np.broadcast_to(G1, (P, nu, nu, G1.shape[-1])),
                           np.broadcast_to(G2, (P, nu, nu, G2.shape[-1])), tau_list)
    gap = (H2 - H1) - np.asarray(metric.modulus(metric(Y1, Y2)))[:, None, None]
    return dini, gap


def check_delta(problem: ControlProblem, metric: DeltaMetric, pairs, tol: float = 1e-6,
                tau_list=DEFAULT_TAUS) -> NonexpansionReport:
    P = _pairs(problem, pairs)
    dini, gap = delta_residuals(problem, metric, P[:, 0], P[:, 1], tau_list)
    res = np.maximum(dini, gap)
    best_v = res.min(axis=2)  # (P, nu)
    worst_u = best_v.max(axis=1)
    p = int(np.argmax(worst_u))
    u = int(np.argmax(best_v[p]))
    v = int(np.argmin(res[p, u]))
    wit = {"y1": P[p, 0].tolist(), "y2": P[p, 1].tolist(), "u": u, "v": v, "value": float(worst_u[p]),
           "dini": float(dini[p, u, v]), "cost_gap_minus_modulus": float(gap[p, u, v])}
    valid = bool(np.all(best_v <= tol))
    notes = [] if metric.locally_lipschitz else ["delta is not locally Lipschitz; the proxy may overestimate"]
    return NonexpansionReport("delta", float(worst_u[p]), wit, len(P), tol, valid, metric.name, notes)


# --------------------------------------------------------------------------
# shadow controls


@dataclass
class ShadowResult:
    control: PiecewiseConstantControl
    times: np.ndarray
    trace: np.ndarray  # delta between the two trajectories at each grid time
    cost_gap: np.ndarray  # per-step mean cost difference (second minus first) minus modulus
    success: bool
    first_exceedance: float | None
    gamma_first: np.ndarray = field(repr=False, default=None)
    gamma_second: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"success": self.success, "first_exceedance": self.first_exceedance,
                "max_trace": float(self.trace.max()), "delta0": float(self.trace[0]),
                "max_cost_gap": float(self.cost_gap.max()) if self.cost_gap.size else 0.0,
                "control": self.control.indices.tolist()}


def shadow_control(problem: ControlProblem, metric: DeltaMetric, y1, y2, u: PiecewiseConstantControl,
                   T: float | None = None, tol: float = 1e-6) -> ShadowResult:
    """Greedy shadow of ``u`` from y2: each step picks the codebook control
    minimizing delta between the next states, ties broken by the smaller cost
    gap and then the smaller index."""
    T = u.duration if T is None else T
    K = int(round(T / u.step))
    if K > len(u) or abs(K * u.step - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a multiple of the control step and at most its duration")
    step, nu = u.step, problem.n_controls
    n_sub = problem.substep(step)
    a = np.asarray(y1, dtype=float)[None]
    b = np.asarray(y2, dtype=float)[None]
    d0 = float(metric(a[0], b[0]))
    trace = [d0]
    gaps, chosen = [], []
    c1_hist, c2_hist = [0.0], [0.0]
    first = None
    for k in range(K):
        dk = float(metric(a[0], b[0]))
        a_next, c1 = rk4_step(problem, a, problem.codebook[[u.indices[k]]], step, n_sub)
        B, c2 = rk4_step(problem, np.repeat(b, nu, axis=0), problem.codebook, step, n_sub)
        d = metric(np.repeat(a_next, nu, axis=0), B)
        gap = (c2 - c1[0]) / step
        best = np.flatnonzero(d <= d.min() + 1e-12)
        v = int(best[np.argmin(gap[best])])
        chosen.append(v)
        a, b = a_next, B[[v]]
        trace.append(float(d[v]))
        gaps.append(float(gap[v] - metric.modulus(np.array(dk))))
        c1_hist.append(c1_hist[-1] + c1[0])
        c2_hist.append(c2_hist[-1] + c2[v])
        if first is None and (trace[-1] > d0 + tol or gaps[-1] > tol):
            first = (k + 1) * step
    trace, gaps = np.array(trace), np.array(gaps)
    times = np.arange(K + 1) * step
    ok = bool(trace.max() <= d0 + tol and (gaps.size == 0 or gaps.max() <= tol))
    t = np.maximum(times[1:], 1e-300)
    return ShadowResult(PiecewiseConstantControl(step, np.array(chosen, dtype=np.int64)), times, trace, gaps,
                        ok, first, np.array(c1_hist)[1:] / t, np.array(c2_hist)[1:] / t)
