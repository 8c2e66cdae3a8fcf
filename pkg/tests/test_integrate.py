import numpy as np
import pytest
from hypothesis import given, strategies as st

from limitvalue.examples import builtin
from limitvalue.integrate import (BlowUpError, BoxExitError, PiecewiseConstantControl, average_cost, rollout,
                                  rollout_batch)
from limitvalue.problem import problem_from_dict

from conftest import constant_cost_problem


def test_ex1_quarter_turn_and_norm():
    p = builtin("ex1").problem
    K = 1571
    step = (np.pi / 2) / K  # below 1e-3
    tr = rollout(p, PiecewiseConstantControl.constant(step, 0, K))
    assert np.allclose(tr.states[-1], [0.0, 1.0], atol=1e-6)
    assert np.max(np.abs(np.linalg.norm(tr.states, axis=1) - 1.0)) <= 1e-6


def test_ex1_norm_conservation_long():
    p = builtin("ex1").problem
    tr = rollout(p, PiecewiseConstantControl.constant(1e-3, 0, 20000))
    assert np.max(np.abs(np.linalg.norm(tr.states, axis=1) - 1.0)) <= 1e-6


@pytest.mark.parametrize("k", [1, 4, 10])
def test_ex4_closed_form_constant_control(k):
    p = builtin("ex4").problem
    eps = float(p.codebook[k, 0])
    tr = rollout(p, PiecewiseConstantControl.constant(0.05, k, 400))
    y1 = 1 - np.exp(-eps * tr.times)
    assert np.allclose(tr.states[:, 0], y1, atol=1e-9)
    assert np.allclose(tr.states[:, 1], eps * y1, atol=1e-9)
    assert np.all(tr.states[:, 1] <= tr.states[:, 0] + 1e-15)
    assert np.all((tr.states >= 0) & (tr.states <= 1))


@pytest.mark.parametrize("k", [1, 2, 4])
def test_ex5_parabola_constant_control(k):
    p = builtin("ex5").problem
    eps = float(p.codebook[k, 0])
    tr = rollout(p, PiecewiseConstantControl.constant(0.01, k, 300))
    assert np.allclose(tr.states[:, 1], np.sqrt(2 * eps * tr.states[:, 0]), atol=1e-9)


def test_constant_cost_average():
    p = constant_cost_problem(0.3)
    tr = rollout(p, PiecewiseConstantControl(0.1, np.arange(60) % 3))
    for m, t in [(0, 1), (0.5, 2.0), (1.0, 4.0), (2.3, 0.7)]:
        assert average_cost(tr, m, t) == pytest.approx(0.3, abs=1e-12)


def bang_gamma(t_hat):
    """Analytic gamma_T for u = 1 on [0, t_hat] then 0, with T = 2/t_hat + t_hat/2."""
    T = 2 / t_hat + t_hat / 2
    return T, (T - 1 / t_hat) / T


@pytest.mark.parametrize("t_hat", [0.1, 0.04, 0.02])
def test_ex5_bang_recipe(t_hat):
    p = builtin("ex5").problem
    step = 0.01
    T, exact = bang_gamma(t_hat)
    K = int(round(T / step))
    assert abs(K * step - T) < 1e-9
    n_on = int(round(t_hat / step))
    idx = np.zeros(K, dtype=np.int64)
    idx[:n_on] = 4
    tr = rollout(p, PiecewiseConstantControl(step, idx))
    g = average_cost(tr, 0, T)
    assert g >= 0.5
    assert g <= 0.5 + 4 / T
    assert g == pytest.approx(exact, abs=2 * step / T + 1e-9)


def test_shift_zero_identity():
    p = builtin("ex2").problem
    tr = rollout(p, PiecewiseConstantControl(0.05, np.arange(100) % 5))
    for t in (0.5, 1.0, 3.0, 5.0):
        assert average_cost(tr, 0.0, t) == tr.cumulative_cost[int(round(t / 0.05))] / t


def test_step_halving_order_on_ex3():
    p = builtin("ex3").problem
    ctrl = PiecewiseConstantControl(0.5, [0, 3, 1, 4, 2, 0, 1, 1, 3, 2])
    ys = [rollout(p, ctrl, n_sub=n).states[-1] for n in (1, 2, 4)]
    e1, e2 = np.linalg.norm(ys[0] - ys[1]), np.linalg.norm(ys[1] - ys[2])
    assert np.log2(e1 / e2) >= 3.5


@given(st.lists(st.integers(0, 4), min_size=2, max_size=60), st.integers(1, 59))
def test_concatenation_consistency(word, cut):
    cut = min(cut, len(word) - 1)
    p = builtin("ex2").problem
    step = 0.05
    a = PiecewiseConstantControl(step, word[:cut])
    b = PiecewiseConstantControl(step, word[cut:])
    t1 = rollout(p, a)
    t2 = rollout(p, b, y_start=t1.states[-1])
    full = rollout(p, a.concat(b))
    T = full.final_time
    assert np.max(np.abs(full.states[-1] - t2.states[-1])) <= 1e-9 * T
    assert abs(full.cumulative_cost[-1] - (t1.cumulative_cost[-1] + t2.cumulative_cost[-1])) <= 1e-9 * T


@given(st.lists(st.integers(0, 4), min_size=1, max_size=80))
def test_trajectory_invariants(word):
    p = builtin("ex5").problem
    tr = rollout(p, PiecewiseConstantControl(0.05, word))
    assert np.all(np.diff(tr.cumulative_cost) >= 0)
    assert np.all(tr.cumulative_cost <= tr.times + 1e-12)
    assert np.allclose(np.diff(tr.times), 0.05)
    assert np.array_equal(tr.states[0], p.y0)


def test_batch_matches_single_rollouts():
    p = builtin("ex4").problem
    words = np.random.default_rng(0).integers(0, p.n_controls, (6, 40))
    states, cum, exit_step = rollout_batch(p, words, 0.1)
    for w, s, c in zip(words, states, cum):
        tr = rollout(p, PiecewiseConstantControl(0.1, w))
        assert np.allclose(tr.states, s, atol=1e-14)
        assert np.allclose(tr.cumulative_cost, c, atol=1e-14)
    assert np.all(exit_step == 41)


def test_box_exit_and_blow_up():
    drift = problem_from_dict({
        "dim": 1, "dynamics": {"polynomial": [[[1.0, [0], [0]]]]}, "cost": {"polynomial": [[0.0, [0], [0]]]},
        "codebook": [[0.0]], "y0": [0.95], "box": [[0.0, 1.0]], "lipschitz_L": 0.0, "growth_a": 1.0,
        "cost_bounds": [0, 1],
    })
    with pytest.raises(BoxExitError) as exc:
        rollout(drift, PiecewiseConstantControl.constant(0.02, 0, 10))
    assert exc.value.time == pytest.approx(0.06)
    assert exc.value.state[0] == pytest.approx(1.01)
    blow = problem_from_dict({
        "dim": 1, "dynamics": {"polynomial": [[[1.0, [3], [0]]]]}, "cost": {"polynomial": [[0.0, [0], [0]]]},
        "codebook": [[0.0]], "y0": [1.0], "box": [[-1e300, 1e300]], "lipschitz_L": 1.0, "growth_a": 1.0,
        "cost_bounds": [0, 1],
    })
    with pytest.raises(BlowUpError):
        rollout(blow, PiecewiseConstantControl.constant(0.5, 0, 20))


def test_horizon_and_control_errors():
    p = builtin("ex2").problem
    ctrl = PiecewiseConstantControl.constant(0.1, 0, 10)
    with pytest.raises(ValueError):
        rollout(p, ctrl, T=2.0)
    with pytest.raises(ValueError):
        rollout(p, PiecewiseConstantControl.constant(0.1, 9, 10))
    tr = rollout(p, ctrl)
    with pytest.raises(ValueError):
        average_cost(tr, 0.5, 0.6)


def test_trajectory_csv(tmp_path):
    p = builtin("ex4").problem
    tr = rollout(p, PiecewiseConstantControl.constant(0.1, 3, 5))
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "time,y_1,y_2,control_index,cumulative_cost"
    assert len(rows) == 7
