import numpy as np
import pytest
from hypothesis import given, strategies as st

from limitvalue.examples import builtin
from limitvalue.integrate import PiecewiseConstantControl, average_cost, rollout
from limitvalue.nonexpansive import (check_delta, check_scalar, dini_forward, l1_metric, metric_axioms,
                                     sample_pairs, scalar_matrix, shadow_control, squared_euclidean_metric,
                                     zero_metric)

from conftest import constant_cost_problem

EX2, EX3, EX4, EX5 = (builtin(n).problem for n in ("ex2", "ex3", "ex4", "ex5"))
coord = st.floats(-1.0, 1.0, allow_nan=False)


# ---------------------------------------------------------------- scalar condition


@given(a=st.tuples(coord, coord), b=st.tuples(coord, coord))
def test_ex3_scalar_is_minus_squared_distance(a, b):
    # g = -y + u; with v = u the inner product is exactly -|y1 - y2|^2, and nothing does better
    M = scalar_matrix(EX3, np.array(a), np.array(b))[0]
    d2 = float(np.sum((np.array(a) - np.array(b)) ** 2))
    assert np.max(M.min(axis=1)) <= -d2 + 1e-12
    assert np.allclose(np.diag(M), -d2, atol=1e-12)


def test_ex3_family_strictly_negative():
    pairs = sample_pairs(EX3, n_reach=0, n_random=300, seed=3)
    rep = check_scalar(EX3, pairs)
    assert rep.passed and rep.max_violation < 0


def test_ex2_scalar_zero():
    rep = check_scalar(EX2, sample_pairs(EX2, n_random=400, seed=1))
    assert rep.passed and abs(rep.max_violation) <= 1e-9


def test_ex5_refuted_with_exact_witness():
    rep = check_scalar(EX5, np.array([[[1.0, 1.0], [0.0, 0.0]]]))
    assert not rep.passed
    assert rep.max_violation == pytest.approx(1.0, abs=1e-12)
    assert rep.witness["y1"] == [1.0, 1.0]


def test_scalar_witness_reproduces():
    rep = check_scalar(EX5, sample_pairs(EX5, n_random=200, seed=2))
    w = rep.witness
    M = scalar_matrix(EX5, np.array(w["y1"]), np.array(w["y2"]))[0]
    assert M[w["u"], w["v"]] == pytest.approx(rep.max_violation, abs=1e-12)
    assert M[w["u"]].min() == pytest.approx(rep.max_violation, abs=1e-12)


def test_pairs_shape_validation():
    with pytest.raises(ValueError):
        check_scalar(EX3, np.zeros((4, 3, 2)))


# ---------------------------------------------------------------- dini proxy


def test_dini_translation_invariance():
    m = squared_euclidean_metric(EX3, samples=200)
    q, qs = dini_forward(m, np.array([0.3, -0.2]), np.array([1.0, 0.5]), np.array([0.7, 0.1]), np.array([0.7, 0.1]))
    assert abs(q) <= 1e-12 and qs.shape == (3,)


@given(y1=st.tuples(coord, coord), y2=st.tuples(coord, coord), g1=st.tuples(coord, coord), g2=st.tuples(coord, coord))
def test_dini_matches_gradient_for_squared_euclidean(y1, y2, g1, g2):
    y1, y2, g1, g2 = map(np.array, (y1, y2, g1, g2))
    m = squared_euclidean_metric(EX3, samples=50)
    _, qs = dini_forward(m, y1, y2, g1, g2)
    grad = 2 * np.dot(y1 - y2, g1 - g2)
    assert qs[-1] == pytest.approx(grad, abs=1e-3 * 4 + 1e-9)  # O(tau |g1 - g2|^2)
    assert abs(qs[-1] - grad) <= 1e-4 * np.sum((g1 - g2) ** 2) + 1e-9


def test_dini_ex4_l1_same_control_nonincreasing():
    rng = np.random.default_rng(0)
    Y1, Y2 = rng.random((200, 2)), rng.random((200, 2))
    m = l1_metric()
    for u in EX4.codebook:
        U = np.tile(u, (200, 1))
        q, _ = dini_forward(m, Y1, Y2, EX4.g(Y1, U), EX4.g(Y2, U))
        assert np.all(q <= 1e-9)


def test_dini_rejects_bad_taus():
    m = l1_metric()
    z = np.zeros(2)
    for taus in ((), (1e-3, 1e-2), (1e-2, -1e-3)):
        with pytest.raises(ValueError):
            dini_forward(m, z, z, z, z, taus)


def test_dini_nonfinite():
    m = l1_metric()
    z = np.zeros(2)
    with pytest.raises(FloatingPointError):
        dini_forward(m, z, z, np.array([np.inf, 0.0]), z)


# ---------------------------------------------------------------- delta condition


def test_metric_axioms():
    for m in (squared_euclidean_metric(EX4, samples=200), l1_metric(), zero_metric()):
        ax = metric_axioms(m, EX4)
        assert ax["diagonal"] == 0 and ax["symmetry"] <= 1e-15
        assert ax["modulus_at_zero"] == 0 and ax["modulus_decrease"] == 0


def test_zero_metric_with_constant_cost():
    p = constant_cost_problem(0.4, dim=2, codebook=((0.0, 0.0), (1.0, 0.0)))
    rep = check_delta(p, zero_metric(), sample_pairs(p, n_random=100))
    assert rep.passed and rep.all_valid


def test_ex4_l1_passes():
    rep = check_delta(EX4, l1_metric(), sample_pairs(EX4, n_random=500, seed=4))
    assert rep.passed and rep.all_valid and rep.max_violation <= 1e-6


def test_ex5_squared_euclidean_fails_at_witness():
    m = squared_euclidean_metric(EX5, samples=500)
    rep = check_delta(EX5, m, np.array([[[1.0, 1.0], [0.0, 0.0]]]))
    assert not rep.passed and not rep.all_valid
    assert rep.witness["dini"] >= 1.9  # 2 <y1 - y2, g1 - g2> = 2 at the scalar witness


def test_report_serialization():
    rep = check_delta(EX4, l1_metric(), sample_pairs(EX4, n_random=20))
    d = rep.to_dict()
    assert d["condition"] == "delta" and d["metric"] == "l1"
    assert "max violation" in rep.to_text()
    assert rep.to_json().startswith("{")


# ---------------------------------------------------------------- shadow controls


def test_shadow_identical_states():
    u = PiecewiseConstantControl(0.1, np.arange(50) % EX3.n_controls)
    r = shadow_control(EX3, squared_euclidean_metric(EX3, samples=200), EX3.y0, EX3.y0, u)
    assert r.success and np.all(r.trace == 0)
    assert np.array_equal(r.control.indices, u.indices)


@given(a=st.tuples(coord, coord), b=st.tuples(coord, coord), seed=st.integers(0, 100))
def test_shadow_ex3_contracts(a, b, seed):
    rng = np.random.default_rng(seed)
    u = PiecewiseConstantControl(0.1, rng.integers(0, EX3.n_controls, 40))
    m = squared_euclidean_metric(EX3, samples=200)
    r = shadow_control(EX3, m, np.array(a), np.array(b), u)
    assert np.all(np.diff(r.trace) <= 1e-12)
    # closed form with v = u: |y1 - y2|^2 e^{-2t}
    d0 = float(np.sum((np.array(a) - np.array(b)) ** 2))
    assert np.all(r.trace <= d0 * np.exp(-2 * r.times) + 1e-9)


def test_shadow_ex3_value_bound():
    m = squared_euclidean_metric(EX3, samples=500)
    rng = np.random.default_rng(7)
    tol = 1e-6
    for _ in range(10):
        a, b = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        u = PiecewiseConstantControl(0.1, rng.integers(0, EX3.n_controls, 50))
        r = shadow_control(EX3, m, a, b, u, tol=tol)
        if not r.success:
            continue
        bound = float(m.modulus(np.array(r.trace[0] + tol))) + tol
        assert np.all(np.abs(r.gamma_first - r.gamma_second) <= bound)
        tr1 = rollout(EX3, u, a)
        assert r.gamma_first[-1] == pytest.approx(average_cost(tr1, 0.0, 5.0), abs=1e-12)


@pytest.mark.parametrize("angle", [0.5, 1.5, 3.0])
def test_shadow_ex2_same_radius(angle):
    m = squared_euclidean_metric(EX2, samples=500)
    y1 = np.array([1.0, 0.0])
    y2 = np.array([np.cos(angle), np.sin(angle)])
    rng = np.random.default_rng(int(angle * 10))
    u = PiecewiseConstantControl(0.05, rng.integers(0, EX2.n_controls, 200))
    r = shadow_control(EX2, m, y1, y2, u)
    assert r.trace.max() <= r.trace[0] + 1e-6


def test_shadow_ex5_fails_with_time():
    m = squared_euclidean_metric(EX5, samples=500)
    u = PiecewiseConstantControl.constant(0.05, 4, 40)
    r = shadow_control(EX5, m, np.array([0.0, 1.0]), np.array([0.0, 0.0]), u)
    assert not r.success and r.first_exceedance is not None and r.first_exceedance > 0


def test_shadow_rejects_long_T():
    u = PiecewiseConstantControl.constant(0.1, 0, 10)
    with pytest.raises(ValueError):
        shadow_control(EX3, l1_metric(), EX3.y0, EX3.y0, u, T=2.0)
