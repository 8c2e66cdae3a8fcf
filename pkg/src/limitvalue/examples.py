"""Built-in corpus: the five worked examples with reference values and settings.

Every example is built from a JSON descriptor, so ``spec.problem.to_json()``
writes a standalone problem file that loads back to the same problem.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .controls import SearchBudget
from .problem import ControlProblem, problem_from_dict


@dataclass(frozen=True)
class ReferenceValue:
    quantity: str
    value: float
    provenance: str  # LITERATURE | DERIVED | TRIVIAL
    tolerance: float
    note: str = ""


@dataclass(frozen=True)
class Settings:
    """Recommended discretization for an example."""

    cells: tuple
    step: float  # dynamic-programming time step
    T: float
    rollout_step: float
    m_grid: tuple
    t_grid: tuple
    budget: SearchBudget = SearchBudget()


@dataclass(frozen=True, eq=False)
class ExampleSpec:
    name: str
    problem: ControlProblem
    reference_values: tuple
    settings: Settings
    hypothesis_flags: dict = field(default_factory=dict)
    description: str = ""

    def reference(self, quantity: str) -> ReferenceValue:
        for r in self.reference_values:
            if r.quantity == quantity:
                return r
        raise KeyError(quantity)

    def to_json(self) -> str:
        return self.problem.to_json()


def _arange(lo, hi, step):
    n = int(round((hi - lo) / step))
    return tuple(float(round(lo + k * step, 12)) for k in range(n + 1))


def _ex1():
    doc = {
        "name": "ex1", "dim": 2,
        "dynamics": {"builtin": "rotation"},
        "cost": {"builtin": "half_plus_x"},
        "codebook": [[0.0]],
        "y0": [1.0, 0.0], "box": [[-1.25, 1.25], [-1.25, 1.25]],
        "lipschitz_L": 1.0, "growth_a": 1.0, "cost_bounds": [0.0, 1.0],
    }
    refs = (
        ReferenceValue("V(y0)", 0.5, "TRIVIAL", 0.02, "circle average of (1 + y_x)/2 on |y| = 1"),
    )
    st = Settings(cells=(101, 101), step=0.01, T=100.0, rollout_step=0.01,
                  m_grid=_arange(0, 10, 1), t_grid=(1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0))
    flags = {"HYPO": True, "scalar_nonexpansive": True, "H1": True, "H2": True}
    return doc, refs, st, flags, "rotation of the plane, no control freedom"


def _ex2():
    doc = {
        "name": "ex2", "dim": 2,
        "dynamics": {"builtin": "rotation_control"},
        "cost": {"builtin": "half_plus_x"},
        "codebook": [[0.0], [0.25], [0.5], [0.75], [1.0]],
        "y0": [1.0, 0.0], "box": [[-1.25, 1.25], [-1.25, 1.25]],
        "lipschitz_L": 1.0, "growth_a": 1.0, "cost_bounds": [0.0, 1.0],
    }
    # u = 0 freezes the state: rotate half a turn to (-1, 0), where h = 0, and hold
    refs = (
        ReferenceValue("V*(y0)", 0.0, "DERIVED", 0.02, "rotate to (-1, 0) and hold u = 0"),
    )
    st = Settings(cells=(51, 51), step=0.05, T=50.0, rollout_step=0.05,
                  m_grid=_arange(0, 10, 1), t_grid=(1.0, 2.0, 5.0, 10.0, 20.0, 50.0))
    flags = {"HYPO": True, "scalar_nonexpansive": True, "H1": True, "H2": True}
    return doc, refs, st, flags, "controlled rotation speed u in [0, 1]"


def _ex3(dim=2, codebook=None, y0=None):
    if codebook is None:
        verts = [list(v) for v in itertools.product((-1.0, 1.0), repeat=dim)]
        codebook = verts + [[0.0] * dim]
    codebook = [list(np.atleast_1d(np.asarray(c, dtype=float))) for c in codebook]
    y0 = [0.0] * dim if y0 is None else [float(v) for v in np.atleast_1d(y0)]
    doc = {
        "name": "ex3" if dim == 2 else f"ex3_d{dim}", "dim": dim,
        "dynamics": {"builtin": "relaxation"},
        "cost": {"builtin": "clipped_norm"},
        "codebook": codebook,
        "y0": y0, "box": [[-2.0, 2.0]] * dim,
        # |(-y + u)| / (1 + |y|) <= max(1, |u|) for |u| <= sqrt(dim)
        "lipschitz_L": 1.0, "growth_a": float(max(1.0, np.sqrt(dim))), "cost_bounds": [0.0, 1.0],
    }
    refs = (
        ReferenceValue("V*(0)", 0.0, "DERIVED", 0.02, "hold u = 0 at the origin"),
    )
    st = Settings(cells=(41,) * dim, step=0.1, T=20.0, rollout_step=0.1,
                  m_grid=_arange(0, 5, 0.5), t_grid=(1.0, 2.0, 5.0, 10.0, 20.0))
    flags = {"HYPO": True, "scalar_nonexpansive": True, "H1": True, "H2": True}
    return doc, refs, st, flags, "relaxation y' = u - y toward a codebook point"


def _ex4():
    # y1' = u (1 - y1), y2' = u^2 (1 - y1); h = 1 - y1 + y1 y2
    doc = {
        "name": "ex4", "dim": 2,
        "dynamics": {"polynomial": [
            [[1.0, [0, 0], [1]], [-1.0, [1, 0], [1]]],
            [[1.0, [0, 0], [2]], [-1.0, [1, 0], [2]]],
        ]},
        "cost": {"polynomial": [[1.0, [0, 0], [0]], [-1.0, [1, 0], [0]], [1.0, [1, 1], [0]]]},
        "codebook": [[v] for v in (0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.35, 0.5, 0.75, 1.0)],
        "y0": [0.0, 0.0], "box": [[0.0, 1.0], [0.0, 1.0]],
        "lipschitz_L": 1.5, "growth_a": 1.5, "cost_bounds": [0.0, 1.0],
    }
    refs = (
        ReferenceValue("lim V_t(0,0)", 0.0, "LITERATURE", 0.05),
        ReferenceValue("lim V_t(0.5,0.25)", 0.25, "LITERATURE", 0.05, "limit equals y2"),
        ReferenceValue("V*(0,0)", 0.0, "LITERATURE", 0.05),
    )
    st = Settings(cells=(80, 80), step=0.05, T=200.0, rollout_step=0.1,
                  m_grid=_arange(0, 200, 20), t_grid=(1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0))
    flags = {"HYPO": True, "scalar_nonexpansive": False, "H1": True, "H2": True, "delta_metric": "l1"}
    return doc, refs, st, flags, "slow approach to y1 = 1 keeps y2 small"


def _ex5():
    doc = {
        "name": "ex5", "dim": 2,
        "dynamics": {"polynomial": [[[1.0, [0, 1], [0]]], [[1.0, [0, 0], [1]]]]},
        "cost": {"builtin": "band_indicator", "params": {"axis": 0, "lo": 1.0, "hi": 2.0}},
        "codebook": [[0.0], [0.25], [0.5], [0.75], [1.0]],
        "y0": [0.0, 0.0], "box": [[0.0, 12.0], [0.0, 5.0]],
        "lipschitz_L": 1.0, "growth_a": 1.0, "cost_bounds": [0.0, 1.0],
        # y1 is unbounded: rollouts may leave the box, grids stay inside it
        "strict_box": False, "cost_continuous": False,
    }
    refs = (
        ReferenceValue("min_T V_T(y0)", 0.5, "LITERATURE", 0.05, "lower bound for every T"),
        ReferenceValue("lim V_t(y0)", 0.5, "LITERATURE", 0.07),
        ReferenceValue("V*(y0)", 0.0, "LITERATURE", 0.07),
    )
    st = Settings(cells=(120, 60), step=0.05, T=100.0, rollout_step=0.01,
                  m_grid=_arange(0, 100, 5), t_grid=(1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0,
                                                      70.0, 80.0, 90.0, 100.0),
                  budget=SearchBudget(beam_width=16, n_random=20, n_switch=40, seed=0, max_beam_steps=0))
    flags = {"HYPO": True, "scalar_nonexpansive": False, "H1": False, "H2": False}
    return doc, refs, st, flags, "double integrator with a cost-free band; no uniform value"


_BUILDERS = {"ex1": _ex1, "ex2": _ex2, "ex3": _ex3, "ex4": _ex4, "ex5": _ex5}
NAMES = tuple(_BUILDERS)


def builtin(name: str, **kwargs) -> ExampleSpec:
    """Built-in example by name (ex1 .. ex5).

    ``ex3`` accepts ``dim``, ``codebook`` and ``y0`` keywords for its variants.
    """
    if name not in _BUILDERS:
        raise KeyError(f"unknown example {name!r}; known: {list(NAMES)}")
    doc, refs, st, flags, desc = _BUILDERS[name](**kwargs)
    return ExampleSpec(name=doc["name"], problem=problem_from_dict(doc), reference_values=refs,
                       settings=st, hypothesis_flags=flags, description=desc)


def ex3_tiny() -> ExampleSpec:
    """ex3 with d = 1, codebook {-1, 1}, start 0, step 0.5: small enough to enumerate."""
    spec = builtin("ex3", dim=1, codebook=[[-1.0], [1.0]])
    st = Settings(cells=(41,), step=0.5, T=2.0, rollout_step=0.5,
                  m_grid=(0.0, 0.5, 1.0, 1.5, 2.0), t_grid=(0.5, 1.0, 1.5, 2.0),
                  budget=SearchBudget(beam_width=16, n_random=0, n_switch=8))
    return ExampleSpec("ex3_tiny", spec.problem, spec.reference_values, st, spec.hypothesis_flags,
                       "ex3, d = 1, two controls")


def ex3_steer(y0=1.5) -> ExampleSpec:
    """ex3 with d = 1 and codebook {-1, 0, 1}: steering to 0 and holding is optimal."""
    spec = builtin("ex3", dim=1, codebook=[[-1.0], [0.0], [1.0]], y0=[y0])
    st = Settings(cells=(81,), step=0.05, T=20.0, rollout_step=0.05,
                  m_grid=_arange(0, 10, 0.5), t_grid=(1.0, 2.0, 5.0, 10.0, 20.0),
                  budget=SearchBudget(beam_width=8, n_random=8, n_switch=12, max_beam_steps=0))
    return ExampleSpec("ex3_steer", spec.problem, (ReferenceValue("V*(y0)", 0.0, "DERIVED", 0.02,
                                                                   "steer to 0 and hold"),),
                       st, spec.hypothesis_flags, "ex3, d = 1, three controls")


def export_json(name: str, path=None) -> str:
    text = builtin(name).to_json()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def catalog() -> str:
    return json.dumps({n: builtin(n).description for n in NAMES}, indent=2)
