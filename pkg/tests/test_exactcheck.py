import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import sigma as oracle_sigma
from sigmak import ContextInvalidError, DegenerateInputError, InvalidIndexError, InvalidInputError
from sigmak.exactcheck import (IDENTITY_IDS, INDEX_ARITY, TrialPlan, _r_L2, identity_residual, identity_suite,
                               symbolic_check, transport_residual)

EX = (3, 2, -1)


def flipped_L2(E, idx, **kw):
    # turns -sigma^{pp} sigma^{qq} into +sigma^{pp} sigma^{qq}
    return _r_L2(E, idx, **kw) + 2 * E.d1(idx[1]) * E.d1(idx[2])


def test_examples():
    assert identity_residual("iv", EX, 2) == 0
    assert identity_residual("L4.1-3", EX, 2, (0, 1)) == 0
    xi = (Fraction(1, 3), 2, -1)
    assert identity_residual("assembly-s4.04", (Fraction(7, 2), 2, Fraction(-1, 5)), 2, (1,),
                             bigK=Fraction(5, 3), xi=xi) == 0


def test_hand_checks_with_independent_sums():
    # sum_i kappa_i sigma_{k-1}(kappa|i) = k sigma_k, through the subset oracle
    lhs = sum(EX[i] * oracle_sigma(EX, 1, (i,)) for i in range(3))
    assert lhs == 2 * oracle_sigma(EX, 2) == 2
    s = lambda m, *ex: oracle_sigma(EX, m, ex)  # noqa: E731
    assert (s(1, 0) + s(1, 1)) * (3 + 2) == 2 * s(2) - 2 * s(2, 0, 1) + (9 + 4) * s(0, 0, 1) == 15


def test_errors():
    with pytest.raises(InvalidInputError):
        identity_residual("nope", EX, 2)
    with pytest.raises(InvalidInputError):
        identity_residual("L4.1-2", EX, 2, (0, 1))
    with pytest.raises(InvalidIndexError):
        identity_residual("L4.1-3", EX, 2, (1, 1))
    with pytest.raises(InvalidInputError):
        identity_residual("L4.1-1", EX, 2, (0, 1))
    with pytest.raises(ContextInvalidError):
        identity_residual("L4.1-1", EX, 2, (0, 1), bigK=Fraction(1, 3))
    with pytest.raises(InvalidInputError):
        TrialPlan(n_range=(1, 20))


def _point(data, arity):
    n = data.draw(st.integers(max(3, arity), 7))
    kap = data.draw(st.lists(st.fractions(-30, 30, max_denominator=50), min_size=n, max_size=n))
    k = data.draw(st.integers(1, n))
    idx = data.draw(st.permutations(range(n)))[:arity]
    return kap, k, idx


@settings(max_examples=40, deadline=None)
@given(st.data(), st.sampled_from([i for i in IDENTITY_IDS if i not in ("v", "assembly-s4.04", "L4.1-1")]))
def test_residuals_vanish_on_random_rationals(data, ident):
    kap, k, idx = _point(data, INDEX_ARITY[ident])
    try:
        res = identity_residual(ident, kap, k, idx)
    except DegenerateInputError:
        assume(False)
    assert res == 0


@settings(max_examples=40, deadline=None)
@given(st.data(), st.fractions(1, 40, max_denominator=9))
def test_K_identities_vanish(data, K):
    kap, k, idx = _point(data, 2)
    try:
        assert identity_residual("L4.1-1", kap, k, idx, bigK=K) == 0
        xi = data.draw(st.lists(st.fractions(-9, 9, max_denominator=9), min_size=len(kap), max_size=len(kap)))
        if k >= 2:
            assert identity_residual("assembly-s4.04", kap, k, idx[:1], bigK=K, xi=xi) == 0
    except ContextInvalidError:
        pass
    except DegenerateInputError:
        assume(False)


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_codazzi_contraction(data):
    n = data.draw(st.integers(2, 5))
    k = data.draw(st.integers(1, n))
    kap = data.draw(st.lists(st.fractions(-9, 9, max_denominator=7), min_size=n, max_size=n))
    vals = data.draw(st.lists(st.integers(-9, 9), min_size=n * n, max_size=n * n))
    V = [[Fraction(vals[min(p, q) * n + max(p, q)]) for q in range(n)] for p in range(n)]
    assert identity_residual("v", kap, k, slice_=V) == 0


@pytest.mark.parametrize("ident, n, k, idx", [
    ("iii", 4, 3, (1,)), ("iv", 4, 2, ()), ("v", 3, 2, ()), ("s3.04", 4, 3, (0, 2)),
    ("L4.1-1", 3, 2, (0, 1)), ("L4.1-2", 4, 3, (0, 1, 2)), ("L4.1-3", 4, 3, (1, 3)),
    ("L4.1-4", 4, 3, (0, 2, 3)), ("L4.1-5", 4, 3, (1, 2, 3)), ("n3.7", 4, 3, (0, 1)),
    ("n311", 4, 3, (0, 1)), ("n3.13", 4, 3, (0, 1)), ("n3.17a", 4, 3, (0, 1)),
])
def test_symbolic_cross_check(ident, n, k, idx):
    assert symbolic_check(ident, n, k, idx)


def test_symbolic_detects_a_mutation():
    from sigmak import exactcheck

    saved = exactcheck.RESIDUALS["L4.1-2"]
    exactcheck.RESIDUALS["L4.1-2"] = flipped_L2
    try:
        assert not symbolic_check("L4.1-2", 4, 3, (0, 1, 2))
    finally:
        exactcheck.RESIDUALS["L4.1-2"] = saved


def test_transport_residual_small():
    rng = np.random.default_rng(3)
    worst = max(transport_residual(rng.uniform(-4, 20, 5).tolist(), 3, 0, 2) for _ in range(100))
    assert worst <= 1e-12


def test_mutation_fails_within_ten_trials():
    plan = TrialPlan(trials=10, n_range=(4, 4), ids=("L4.1-2",), seed=5)
    clean = identity_suite(plan)
    assert clean["all_passed"]
    bad = identity_suite(plan, overrides={"L4.1-2": flipped_L2})
    rep = bad["identities"]["L4.1-2"]
    assert not bad["all_passed"] and rep["failures"] >= 1
    w = rep["first_failure"]
    replayed = identity_residual("L4.1-2", [Fraction(v) for v in w["kappa"]], w["k"], w["indices"],
                                 overrides={"L4.1-2": flipped_L2})
    assert str(replayed) == w["residual"] != "0"


def test_suite_small_plan_and_determinism():
    plan = TrialPlan(trials=20, n_range=(3, 5), seed=9, tuple_cap=5)
    a = identity_suite(plan)
    b = identity_suite(plan)
    assert a["all_passed"]
    assert set(a["identities"]) == set(IDENTITY_IDS)
    a.pop("elapsed_s"), b.pop("elapsed_s")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    c = identity_suite(plan, jobs=2)
    c.pop("elapsed_s")
    assert json.dumps(a, sort_keys=True) == json.dumps(c, sort_keys=True)
