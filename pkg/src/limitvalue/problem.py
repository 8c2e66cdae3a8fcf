"""Control problem data model, cost normalization and hypothesis sampling.

Dynamics and costs are vectorized callables:

    g(Y, U) -> (N, d)     Y: (N, d) states, U: (N, p) control points
    h(Y, U) -> (N,)

Problems built from JSON carry the descriptor they came from so they can be
written back unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

Dynamics = Callable[[np.ndarray, np.ndarray], np.ndarray]
Cost = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ProblemError(ValueError):
    """Malformed problem definition or violated declared bound."""


# --------------------------------------------------------------------------
# function descriptors


def _poly_terms(terms, dim, cdim):
    out = []
    for term in terms:
        if len(term) != 3:
            raise ProblemError(f"polynomial term must be [coef, y_exps, u_exps], got {term!r}")
        coef, ye, ue = term
        ye = np.asarray(ye, dtype=float)
        ue = np.asarray(ue, dtype=float)
        if ye.shape != (dim,) or ue.shape != (cdim,):
            raise ProblemError(f"exponent lengths must be ({dim}, {cdim}), got {term!r}")
        out.append((float(coef), ye, ue))
    return out


def _eval_poly(terms, Y, U):
    acc = np.zeros(Y.shape[0])
    for coef, ye, ue in terms:
        val = np.full(Y.shape[0], coef)
        for j, e in enumerate(ye):
            if e:
                val = val * Y[:, j] ** e
        for j, e in enumerate(ue):
            if e:
                val = val * U[:, j] ** e
        acc = acc + val
    return acc


def _rotation(params, dim):
    def g(Y, U):
        return np.stack([-Y[:, 1], Y[:, 0]], axis=1)
    return g


def _rotation_control(params, dim):
    def g(Y, U):
        return np.stack([-Y[:, 1] * U[:, 0], Y[:, 0] * U[:, 0]], axis=1)
    return g


def _relaxation(params, dim):
    def g(Y, U):
        return U - Y
    return g


def _half_plus_x(params, dim):
    def h(Y, U):
        return np.clip(0.5 * (1.0 + Y[:, 0]), 0.0, 1.0)
    return h


def _clipped_norm(params, dim):
    center = np.asarray(params.get("center", [0.0] * dim), dtype=float)

    def h(Y, U):
        return np.minimum(np.linalg.norm(Y - center, axis=1), 1.0)
    return h


def _band_indicator(params, dim):
    axis = int(params.get("axis", 0))
    lo, hi = float(params.get("lo", 1.0)), float(params.get("hi", 2.0))

    def h(Y, U):
        inside = (Y[:, axis] >= lo) & (Y[:, axis] <= hi)
        return np.where(inside, 0.0, 1.0)
    return h


BUILTIN_DYNAMICS = {
    "rotation": _rotation,
    "rotation_control": _rotation_control,
    "relaxation": _relaxation,
}

BUILTIN_COSTS = {
    "half_plus_x": _half_plus_x,
    "clipped_norm": _clipped_norm,
    "band_indicator": _band_indicator,
}


def build_dynamics(desc: dict, dim: int, cdim: int) -> Dynamics:
    _check_keys(desc, {"builtin", "polynomial", "params"}, "dynamics")
    if "builtin" in desc:
        name = desc["builtin"]
        if name not in BUILTIN_DYNAMICS:
            raise ProblemError(f"unknown built-in dynamics {name!r}; known: {sorted(BUILTIN_DYNAMICS)}")
        return BUILTIN_DYNAMICS[name](desc.get("params", {}), dim)
    if "polynomial" in desc:
        comps = desc["polynomial"]
        if len(comps) != dim:
            raise ProblemError(f"dynamics polynomial needs {dim} components, got {len(comps)}")
        tables = [_poly_terms(c, dim, cdim) for c in comps]

        def g(Y, U):
            return np.stack([_eval_poly(t, Y, U) for t in tables], axis=1)
        return g
    raise ProblemError("dynamics needs 'builtin' or 'polynomial'")


def build_cost(desc: dict, dim: int, cdim: int) -> Cost:
    _check_keys(desc, {"builtin", "polynomial", "params"}, "cost")
    if "builtin" in desc:
        name = desc["builtin"]
        if name not in BUILTIN_COSTS:
            raise ProblemError(f"unknown built-in cost {name!r}; known: {sorted(BUILTIN_COSTS)}")
        return BUILTIN_COSTS[name](desc.get("params", {}), dim)
    if "polynomial" in desc:
        terms = _poly_terms(desc["polynomial"], dim, cdim)
        return lambda Y, U: _eval_poly(terms, Y, U)
    raise ProblemError("cost needs 'builtin' or 'polynomial'")


def _check_keys(doc, allowed, where):
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ProblemError(f"unknown keys in {where}: {sorted(unknown)}")


# --------------------------------------------------------------------------
# problem


@dataclass(frozen=True, eq=False)
class ControlProblem:
    dim: int
    dynamics: Dynamics
    cost: Cost
    codebook: np.ndarray
    y0: np.ndarray
    lipschitz_L: float
    growth_a: float
    cost_bounds: tuple[float, float]
    box: np.ndarray
    name: str = ""
    # rollouts may leave the box (values on grids stay box-only)
    strict_box: bool = True
    cost_continuous: bool = True
    cost_transform: tuple[float, float] = (0.0, 1.0)
    source: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        cb = np.atleast_2d(np.asarray(self.codebook, dtype=float))
        if cb.shape[0] == 1 and np.ndim(self.codebook) == 1 and len(self.codebook) > 1:
            cb = cb.T
        object.__setattr__(self, "codebook", cb)
        object.__setattr__(self, "y0", np.asarray(self.y0, dtype=float).reshape(self.dim))
        object.__setattr__(self, "box", np.asarray(self.box, dtype=float).reshape(self.dim, 2))
        object.__setattr__(self, "cost_bounds", tuple(float(b) for b in self.cost_bounds))
        if self.dim < 1:
            raise ProblemError("dim must be positive")
        if len(cb) == 0:
            raise ProblemError("codebook is empty")
        if not np.all(np.isfinite(cb)):
            raise ProblemError("codebook has non-finite coordinates")
        if len(np.unique(cb, axis=0)) != len(cb):
            raise ProblemError("codebook has duplicate control points")
        if np.any(self.box[:, 0] >= self.box[:, 1]):
            raise ProblemError("box bounds must satisfy lo < hi on every axis")
        if not self.in_box(self.y0[None])[0]:
            raise ProblemError(f"y0 {self.y0.tolist()} lies outside the box")
        if self.cost_bounds[0] > self.cost_bounds[1]:
            raise ProblemError("cost_bounds must satisfy h_min <= h_max")

    @property
    def n_controls(self) -> int:
        return len(self.codebook)

    @property
    def control_dim(self) -> int:
        return self.codebook.shape[1]

    @property
    def normalized(self) -> bool:
        return self.cost_bounds == (0.0, 1.0)

    def in_box(self, Y, slack=0.0):
        Y = np.atleast_2d(Y)
        return np.all((Y >= self.box[:, 0] - slack) & (Y <= self.box[:, 1] + slack), axis=1)

    def g(self, Y, U):
        return self.dynamics(Y, U)

    def h(self, Y, U):
        return self.cost(Y, U)

    def with_start(self, y0) -> "ControlProblem":
        return replace(self, y0=np.asarray(y0, dtype=float))

    def substep(self, step: float) -> int:
        """Number of integrator sub-steps per control step."""
        hmax = min(step, 0.01 / (1.0 + self.lipschitz_L))
        return max(1, int(np.ceil(step / hmax - 1e-9)))

    def denormalize(self, v):
        offset, scale = self.cost_transform
        return offset + scale * np.asarray(v)

    # ---- serialization

    def to_dict(self) -> dict:
        if self.source is None:
            raise ProblemError("problem has no JSON descriptor (built from raw callables)")
        doc = dict(self.source)
        doc["name"] = self.name
        doc["dim"] = self.dim
        doc["codebook"] = self.codebook.tolist()
        doc["y0"] = self.y0.tolist()
        doc["box"] = self.box.tolist()
        doc["lipschitz_L"] = self.lipschitz_L
        doc["growth_a"] = self.growth_a
        doc["cost_bounds"] = list(self.cost_bounds)
        doc["strict_box"] = self.strict_box
        doc["cost_continuous"] = self.cost_continuous
        if self.cost_transform != (0.0, 1.0):
            doc["cost_transform"] = list(self.cost_transform)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


PROBLEM_KEYS = {
    "name", "dim", "dynamics", "cost", "codebook", "y0", "box", "lipschitz_L",
    "growth_a", "cost_bounds", "strict_box", "cost_continuous", "cost_transform",
}
REQUIRED_KEYS = {"dim", "dynamics", "cost", "codebook", "y0", "box", "lipschitz_L", "growth_a", "cost_bounds"}


def problem_from_dict(doc: dict) -> ControlProblem:
    _check_keys(doc, PROBLEM_KEYS, "problem")
    missing = REQUIRED_KEYS - set(doc)
    if missing:
        raise ProblemError(f"missing problem keys: {sorted(missing)}")
    dim = int(doc["dim"])
    codebook = np.asarray(doc["codebook"], dtype=float)
    if codebook.ndim != 2:
        raise ProblemError("codebook must be a list of control points (list of lists)")
    cdim = codebook.shape[1]
    g = build_dynamics(doc["dynamics"], dim, cdim)
    h = build_cost(doc["cost"], dim, cdim)
    transform = tuple(doc.get("cost_transform", (0.0, 1.0)))
    if transform != (0.0, 1.0):
        h = _affine_cost(h, transform[0], transform[1])
    source = {"dynamics": doc["dynamics"], "cost": doc["cost"]}
    return ControlProblem(
        dim=dim, dynamics=g, cost=h, codebook=codebook, y0=doc["y0"],
        lipschitz_L=float(doc["lipschitz_L"]), growth_a=float(doc["growth_a"]),
        cost_bounds=tuple(doc["cost_bounds"]), box=doc["box"], name=doc.get("name", ""),
        strict_box=bool(doc.get("strict_box", True)),
        cost_continuous=bool(doc.get("cost_continuous", True)),
        cost_transform=(float(transform[0]), float(transform[1])), source=source,
    )


def problem_from_json(text: str) -> ControlProblem:
    return problem_from_dict(json.loads(text))


def load_problem(path) -> ControlProblem:
    with open(path) as fh:
        return problem_from_json(fh.read())


# --------------------------------------------------------------------------
# normalization


def _affine_cost(h, offset, scale):
    if scale == 0.0:
        return lambda Y, U: np.zeros(Y.shape[0])
    return lambda Y, U: (h(Y, U) - offset) / scale


def sample_states(problem: ControlProblem, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = problem.box[:, 0], problem.box[:, 1]
    return lo + (hi - lo) * rng.random((n, problem.dim))


def _bound_samples(problem, n=2000, seed=0):
    rng = np.random.default_rng(seed)
    Y = sample_states(problem, n, rng)
    # box corners and y0 are always probed
    corners = np.array(np.meshgrid(*problem.box, indexing="ij")).reshape(problem.dim, -1).T
    Y = np.vstack([problem.y0[None], corners, Y])
    nu = problem.n_controls
    return np.repeat(Y, nu, axis=0), np.tile(problem.codebook, (len(Y), 1))


def normalize_cost(problem: ControlProblem, samples: int = 2000, seed: int = 0) -> ControlProblem:
    """Rescale the cost affinely into [0, 1] using the declared bounds.

    Declared bounds are checked on sampled (state, control) pairs in the box;
    a violation raises ProblemError naming the witness point.
    """
    lo, hi = problem.cost_bounds
    Y, U = _bound_samples(problem, samples, seed)
    vals = problem.h(Y, U)
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    bad = np.flatnonzero((vals < lo - tol) | (vals > hi + tol) | ~np.isfinite(vals))
    if bad.size:
        i = bad[0]
        raise ProblemError(
            f"cost {vals[i]!r} at y={Y[i].tolist()}, u={U[i].tolist()} "
            f"violates declared bounds ({lo}, {hi})"
        )
    if problem.normalized:
        return problem
    scale = hi - lo
    offset0, scale0 = problem.cost_transform
    return replace(
        problem,
        cost=_affine_cost(problem.cost, lo, scale),
        cost_bounds=(0.0, 1.0),
        cost_transform=(offset0 + scale0 * lo, scale0 * scale),
        # a constant cost maps to 0 and is no longer described by the source
        source=problem.source if scale != 0.0 else None,
    )


# --------------------------------------------------------------------------
# hypothesis sampling


@dataclass
class ValidationReport:
    samples: int
    seed: int
    lipschitz_declared: float
    lipschitz_observed: float
    lipschitz_witness: dict
    growth_declared: float
    growth_observed: float
    growth_witness: dict
    cost_continuous: bool
    flags: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.lipschitz_observed <= self.lipschitz_declared * (1 + 1e-9) and \
            self.growth_observed <= self.growth_declared * (1 + 1e-9)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["passed"] = self.passed
        return d


def validate_hypotheses(problem: ControlProblem, samples: int = 1000, seed: int = 0) -> ValidationReport:
    """Sample the Lipschitz and linear-growth bounds of the dynamics.

    Half the pairs are independent uniform draws in the box, half are local
    perturbations (radius 1% of the box) which probe the local slope.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n_far = (samples + 1) // 2
    n_near = samples - n_far
    Y1 = sample_states(problem, samples, rng)
    Y2 = np.empty_like(Y1)
    Y2[:n_far] = sample_states(problem, n_far, rng)
    width = problem.box[:, 1] - problem.box[:, 0]
    pert = (rng.random((n_near, problem.dim)) - 0.5) * 0.02 * width
    Y2[n_far:] = np.clip(Y1[n_far:] + pert, problem.box[:, 0], problem.box[:, 1])

    best_l, wit_l = 0.0, {}
    best_a, wit_a = 0.0, {}
    for k, u in enumerate(problem.codebook):
        U = np.tile(u, (samples, 1))
        G1, G2 = problem.g(Y1, U), problem.g(Y2, U)
        dist = np.linalg.norm(Y1 - Y2, axis=1)
        ok = dist > 1e-12
        ratio = np.zeros(samples)
        ratio[ok] = np.linalg.norm(G1 - G2, axis=1)[ok] / dist[ok]
        i = int(np.argmax(ratio))
        if ratio[i] > best_l:
            best_l = float(ratio[i])
            wit_l = {"y": Y1[i].tolist(), "y_prime": Y2[i].tolist(), "control_index": k, "ratio": best_l}
        grow = np.linalg.norm(G1, axis=1) / (1.0 + np.linalg.norm(Y1, axis=1))
        i = int(np.argmax(grow))
        if grow[i] > best_a:
            best_a = float(grow[i])
            wit_a = {"y": Y1[i].tolist(), "control_index": k, "ratio": best_a}

    flags = []
    if best_l > problem.lipschitz_L * (1 + 1e-9):
        flags.append("lipschitz-violated")
    if best_a > problem.growth_a * (1 + 1e-9):
        flags.append("growth-violated")
    if not problem.cost_continuous:
        flags.append("H1-violating")
    return ValidationReport(
        samples=samples, seed=seed,
        lipschitz_declared=problem.lipschitz_L, lipschitz_observed=best_l, lipschitz_witness=wit_l,
        growth_declared=problem.growth_a, growth_observed=best_a, growth_witness=wit_a,
        cost_continuous=problem.cost_continuous, flags=flags,
    )
