import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from limitvalue.problem import problem_from_dict

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def constant_cost_problem(c=0.3, dim=1, codebook=((-1.0,), (0.0,), (1.0,)), y0=None, box=None):
    """Relaxation dynamics with h identically c (already in [0, 1])."""
    return problem_from_dict({
        "name": "const", "dim": dim,
        "dynamics": {"builtin": "relaxation"},
        "cost": {"polynomial": [[c, [0] * dim, [0] * len(codebook[0])]]},
        "codebook": [list(u) for u in codebook],
        "y0": [0.0] * dim if y0 is None else list(y0),
        "box": [[-2.0, 2.0]] * dim if box is None else box,
        "lipschitz_L": 1.0, "growth_a": float(max(1.0, np.sqrt(dim))), "cost_bounds": [0.0, 1.0],
    })


@pytest.fixture
def const_problem():
    return constant_cost_problem


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_criterion(n, title, passed, detail):
    ACCEPTANCE[n] = (title, passed, detail)
    print(f"criterion {n:2d} {'PASS' if passed else 'FAIL'}: {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if passed else 'FAIL'}: {title}: {detail}")
