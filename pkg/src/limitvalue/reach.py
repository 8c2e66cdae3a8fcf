"""Grid approximation of the reachable sets G^m(y0) and their exact-time slices."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec
from .integrate import rk4_step
from .problem import ControlProblem


@dataclass(eq=False)
class ReachSet:
    grid: GridSpec
    step: float
    layers: list  # layers[k]: sorted cell indices reachable at exactly k * step
    escaped: list = field(default_factory=list)  # (layer, source cell, control index)
    coarse_warning: bool = False

    @property
    def n_layers(self) -> int:
        return len(self.layers) - 1

    def cumulative_at(self, k: int) -> np.ndarray:
        return np.unique(np.concatenate(self.layers[: k + 1]))

    @property
    def cumulative(self) -> np.ndarray:
        return self.cumulative_at(self.n_layers)

    def layer_at_time(self, m: float) -> np.ndarray:
        k = int(np.rint(m / self.step))
        if abs(k * self.step - m) > 1e-9 * max(1.0, m) or not 0 <= k <= self.n_layers:
            raise ValueError(f"time {m} is not a layer time of this reach set")
        return self.layers[k]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = self.grid.dim
            w.writerow(["layer"] + [f"i_{j + 1}" for j in range(d)] + [f"c_{j + 1}" for j in range(d)])
            for k, layer in enumerate(self.layers):
                multi = np.array(np.unravel_index(layer, self.grid.shape)).T
                for cell, mi, c in zip(layer, multi, self.grid.centers(layer)):
                    w.writerow([k] + mi.tolist() + [repr(float(x)) for x in c])


def _n_layers(m, step):
    k = int(np.rint(m / step))
    if abs(k * step - m) > 1e-12 * max(1.0, m):
        raise ValueError(f"step {step} does not divide m = {m}")
    return k


def transition_table(problem: ControlProblem, grid: GridSpec, step: float) -> np.ndarray:
    """Destination cell of every (cell, control) one-step image; -1 when it escapes."""
    C, nu = grid.n_cells, problem.n_controls
    Y = np.repeat(grid.centers(), nu, axis=0)
    U = np.tile(problem.codebook, (C, 1))
    F, _ = rk4_step(problem, Y, U, step, problem.substep(step))
    return grid.cell_of(F).reshape(C, nu)


def propagate_reach(problem: ControlProblem, grid: GridSpec, m: float, step: float,
                    table: np.ndarray | None = None) -> ReachSet:
    """Breadth-first layer propagation from the cell containing y0."""
    if not np.allclose(grid.box, problem.box):
        raise ValueError("grid box must equal the problem box")
    K = _n_layers(m, step)
    start = grid.cell_of(problem.y0[None])
    layers = [np.array(start, dtype=np.int64)]
    escaped = []
    if table is None and K > 0:
        table = transition_table(problem, grid, step)
    for k in range(K):
        src = layers[-1]
        dest = table[src]
        esc = np.argwhere(dest < 0)
        escaped.extend((k + 1, int(src[i]), int(u)) for i, u in esc)
        layers.append(np.unique(dest[dest >= 0]))
    coarse = _coarse(problem, grid, step)
    return ReachSet(grid, step, layers, escaped, coarse)


def _coarse(problem, grid, step, n=512, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = problem.box[:, 0], problem.box[:, 1]
    Y = lo + (hi - lo) * rng.random((n, problem.dim))
    speeds = [np.linalg.norm(problem.g(Y, np.tile(u, (n, 1))), axis=1).max() for u in problem.codebook]
    return bool(np.max(grid.width) > step * max(speeds))


def squared_euclidean(a, b):
    return np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=-1)


@dataclass
class SaturationReport:
    m_max: float
    eps: list
    m0: list  # smallest layer time per eps
    saturated: list
    # precompactness along sequences has no finite certificate; this is its grid stand-in
    label: str = "H2a-surrogate"

    def to_dict(self):
        return self.__dict__.copy()


def reach_saturation(problem: ControlProblem, grid: GridSpec, step: float, m_max: float,
                     eps_list, delta=squared_euclidean, reach: ReachSet | None = None) -> SaturationReport:
    """Smallest m0 such that G^{m0} is eps-dense (under delta) in G^{m_max}.

    An eps is reported unsaturated when only m0 = m_max works, i.e. the reach
    set was still growing at the last layer.
    """
    if m_max <= 0:
        raise ValueError("m_max must be positive")
    reach = reach if reach is not None else propagate_reach(problem, grid, m_max, step)
    K = reach.n_layers
    target = grid.centers(reach.cumulative)
    # distance from each target cell to the nearest cell of G^{m0}, for every m0
    best = np.full(len(target), np.inf)
    seen = np.empty(0, dtype=np.int64)
    nearest = []
    for k in range(K + 1):
        new = np.setdiff1d(reach.layers[k], seen)
        seen = np.union1d(seen, new)
        if new.size:
            C = grid.centers(new)
            for start in range(0, len(C), 256):
                d = delta(target[:, None, :], C[None, start:start + 256, :])
                best = np.minimum(best, d.min(axis=1))
        nearest.append(best.max())
    m0s, sat = [], []
    for eps in eps_list:
        k = next(k for k, v in enumerate(nearest) if v <= eps)
        m0s.append(k * step)
        sat.append(bool(k < K or K == 0))
    return SaturationReport(m_max, list(eps_list), m0s, sat)
