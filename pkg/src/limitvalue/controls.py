"""Candidate control words and the beam search used for sup-average values.

All searches are deterministic: randomness comes from an explicit seed and
ties are broken by the lexicographic order of the control word.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .integrate import rk4_step
from .problem import ControlProblem


@dataclass(frozen=True)
class SearchBudget:
    beam_width: int = 32
    n_random: int = 32
    n_switch: int = 40
    seed: int = 0
    # beam search is skipped above this many control steps
    max_beam_steps: int = 400
    # word spaces up to this size are enumerated in full
    exhaustive_limit: int = 4096


def switch_counts(n_steps: int, n_switch: int) -> np.ndarray:
    if n_steps <= 1:
        return np.array([], dtype=np.int64)
    counts = np.unique(np.rint(np.geomspace(1, n_steps - 1, n_switch)).astype(np.int64))
    return counts[(counts >= 1) & (counts < n_steps)]


def constant_words(n_controls: int, n_steps: int) -> np.ndarray:
    return np.repeat(np.arange(n_controls, dtype=np.int64)[:, None], n_steps, axis=1)


def switch_words(n_controls: int, n_steps: int, n_switch: int) -> np.ndarray:
    """Two-phase words: control a for s steps, then control b, for all a != b."""
    words = []
    for s in switch_counts(n_steps, n_switch):
        for a in range(n_controls):
            for b in range(n_controls):
                if a != b:
                    w = np.full(n_steps, b, dtype=np.int64)
                    w[:s] = a
                    words.append(w)
    if not words:
        return np.empty((0, n_steps), dtype=np.int64)
    return np.array(words)


def random_words(n_controls: int, n_steps: int, n: int, seed: int) -> np.ndarray:
    """Block-random words: runs of geometric length with uniform codebook entries."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, n_steps), dtype=np.int64)
    for i in range(n):
        mean_run = max(1.0, n_steps / rng.integers(1, 9))
        k = 0
        while k < n_steps:
            run = int(rng.geometric(1.0 / mean_run))
            out[i, k:k + run] = rng.integers(n_controls)
            k += run
    return out


def refine_word(word, factor: int) -> np.ndarray:
    """Re-express a word on a control grid ``factor`` times finer."""
    return np.repeat(np.asarray(word, dtype=np.int64), factor, axis=-1)


def candidate_pool(problem: ControlProblem, n_steps: int, budget: SearchBudget,
                   extra: list | None = None) -> np.ndarray:
    """Constant, two-phase and seeded random words, plus any extra words, deduplicated.

    When the whole word space has at most ``budget.exhaustive_limit`` words it
    is returned in full, so small instances are solved exactly.
    """
    nu = problem.n_controls
    if n_steps * np.log(max(nu, 1)) <= np.log(max(budget.exhaustive_limit, 1)) + 1e-12:
        return np.array(list(itertools.product(range(nu), repeat=n_steps)), dtype=np.int64).reshape(-1, n_steps)
    parts = [constant_words(nu, n_steps), switch_words(nu, n_steps, budget.n_switch)]
    if budget.n_random and nu > 1:
        parts.append(random_words(nu, n_steps, budget.n_random, budget.seed))
    for w in extra or []:
        parts.append(np.asarray(w, dtype=np.int64).reshape(1, n_steps))
    words = np.unique(np.vstack(parts), axis=0)  # sorted: lexicographic order
    return words


def sup_average_from_cumulative(cum, m_idx, n_idx, one_idx, step):
    """max over t in [1, n] (grid) of (C[m + t] - C[m]) / t, for each row of ``cum``.

    Indices are in units of the grid spacing ``step``; ``one_idx`` is the index of t = 1.
    Returns (N,) values.
    """
    ts = np.arange(one_idx, n_idx + 1)
    seg = cum[:, m_idx + ts] - cum[:, [m_idx]]
    return np.max(seg / (ts[None, :] * step), axis=1)


def beam_search_sup(problem: ControlProblem, z, m_steps: int, n_steps: int, one_steps: int,
                    step: float, width: int, heuristic=None):
    """Beam search over codebook words of length m_steps + n_steps minimizing

        nu = max over t in [1, n] (grid) of gamma_{m, t}(z, word).

    Partial words are ranked by the running maximum of the window averages
    seen so far (a lower bound on the final value), raised to ``heuristic``'s
    estimate when one is given, then by the word itself. With
    ``width >= |codebook| ** length`` nothing is pruned and the result is exact.
    """
    z = np.asarray(z, dtype=float)
    nu = problem.n_controls
    L = m_steps + n_steps
    n_sub = problem.substep(step)
    words = np.empty((1, 0), dtype=np.int64)
    Y = z[None].copy()
    cum_hist = np.zeros((1, 1))
    partial = np.zeros(1)
    alive = np.ones(1, dtype=bool)
    for s in range(1, L + 1):
        B = len(words)
        W = np.hstack([np.repeat(words, nu, axis=0), np.tile(np.arange(nu), B)[:, None]])
        Yc = np.repeat(Y, nu, axis=0)
        U = problem.codebook[W[:, -1]]
        Yn, c = rk4_step(problem, Yc, U, step, n_sub)
        ok = np.repeat(alive, nu) & np.all(np.isfinite(Yn), axis=1)
        if problem.strict_box:
            ok &= problem.in_box(Yn, slack=1e-12)
        ch = np.repeat(cum_hist, nu, axis=0)
        ch = np.hstack([ch, (ch[:, -1] + c)[:, None]])
        par = np.repeat(partial, nu)
        t_steps = s - m_steps
        if t_steps >= one_steps:
            ratio = (ch[:, s] - ch[:, m_steps]) / (t_steps * step)
            par = np.maximum(par, ratio)
        key = par.copy()
        if heuristic is not None:
            key = np.maximum(key, heuristic(Yn, s, ch, m_steps))
        key = np.where(ok, key, np.inf)
        if len(W) > width:
            # lexsort: last key is primary; the word columns break ties
            order = np.lexsort(tuple(W[:, j] for j in range(W.shape[1] - 1, -1, -1)) + (key,))
            keep = order[:width]
        else:
            keep = np.arange(len(W))
        words, Y, cum_hist, partial, alive = W[keep], Yn[keep], ch[keep], par[keep], ok[keep]
        Y = np.where(alive[:, None], Y, z[None])
    final = np.where(alive, partial, np.inf)
    order = np.lexsort(tuple(words[:, j] for j in range(words.shape[1] - 1, -1, -1)) + (final,))
    best = order[0]
    return float(final[best]), words[best]
