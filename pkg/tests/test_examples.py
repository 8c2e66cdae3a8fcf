import json

import numpy as np
import pytest

from limitvalue import load_problem
from limitvalue.examples import NAMES, builtin, catalog, ex3_steer, ex3_tiny, export_json
from limitvalue.integrate import PiecewiseConstantControl, average_cost, rollout
from limitvalue.nonexpansive import check_delta, check_scalar, l1_metric, sample_pairs
from limitvalue.problem import problem_from_json

ALL = [builtin(n) for n in NAMES] + [ex3_tiny(), ex3_steer(), builtin("ex3", dim=3)]


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
def test_json_round_trip_bit_identical(spec, tmp_path):
    text = spec.to_json()
    again = problem_from_json(text)
    assert again.to_json() == text
    Y = np.random.default_rng(0).uniform(spec.problem.box[:, 0], spec.problem.box[:, 1], (50, spec.problem.dim))
    for u in spec.problem.codebook:
        U = np.tile(u, (50, 1))
        assert np.array_equal(spec.problem.g(Y, U), again.g(Y, U))
        assert np.array_equal(spec.problem.h(Y, U), again.h(Y, U))


@pytest.mark.parametrize("name", NAMES)
def test_export_and_load(name, tmp_path):
    path = tmp_path / f"{name}.json"
    text = export_json(name, path)
    assert load_problem(path).to_json() == text


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
def test_references_have_provenance(spec):
    assert spec.reference_values
    for r in spec.reference_values:
        assert r.provenance in {"LITERATURE", "DERIVED", "TRIVIAL"}
        assert r.tolerance > 0


def test_reference_values():
    assert builtin("ex1").reference("V(y0)").value == 0.5
    assert builtin("ex4").reference("lim V_t(0.5,0.25)").value == 0.25
    ex5 = builtin("ex5")
    assert ex5.reference("V*(y0)").value == 0.0 and ex5.reference("lim V_t(y0)").value == 0.5
    with pytest.raises(KeyError):
        ex5.reference("nothing")


def test_unknown_name():
    with pytest.raises(KeyError):
        builtin("ex6")


def test_catalog_lists_all():
    assert set(json.loads(catalog())) == set(NAMES)


def test_ex1_circle_average():
    # oracle: the shipped cost averages to 1/2 over a full turn
    p = builtin("ex1").problem
    tr = rollout(p, PiecewiseConstantControl.constant(0.01, 0, int(2 * np.pi * 100) + 1))
    assert average_cost(tr, 0.0, 6.28) == pytest.approx(0.5, abs=2e-3)


def test_ex2_derived_vstar_control():
    # rotate half a turn at full speed, then hold with u = 0
    p = builtin("ex2").problem
    k = int(round(np.pi / 0.01))
    idx = np.r_[np.full(k, 4), np.zeros(10000, dtype=int)]
    tr = rollout(p, PiecewiseConstantControl(0.01, idx))
    assert average_cost(tr, 10.0, 50.0) <= 1e-6


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3", "ex5"])
def test_scalar_flags_agree_with_checks(name):
    spec = builtin(name)
    rep = check_scalar(spec.problem, sample_pairs(spec.problem, n_random=1000, seed=0))
    assert rep.passed == spec.hypothesis_flags["scalar_nonexpansive"]


def test_ex4_flags_agree_with_checks():
    spec = builtin("ex4")
    assert spec.hypothesis_flags["delta_metric"] == "l1"
    assert check_delta(spec.problem, l1_metric(), sample_pairs(spec.problem, n_random=1000)).passed
    assert check_scalar(spec.problem, sample_pairs(spec.problem, n_random=1000)).passed \
        == spec.hypothesis_flags["scalar_nonexpansive"]


def test_ex3_variants():
    s = builtin("ex3", dim=3)
    assert s.name == "ex3_d3" and s.problem.n_controls == 9
    assert ex3_steer(0.5).problem.y0.tolist() == [0.5]
