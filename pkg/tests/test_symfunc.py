from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sigma as oracle_sigma
from sigmak import (InvalidIndexError, InvalidInputError, KappaVector, Minors, ScalarMode, elem_sym,
                    elem_sym_excl, sigma_partial)
from sigmak.symfunc import esp_batch, excl_batch, excl_rows, minors1_batch, minors2_batch

RAT = ScalarMode.parse("rational")


def rat(values):
    return KappaVector.of(values, RAT)


fractions = st.fractions(min_value=-50, max_value=50, max_denominator=30)


@pytest.mark.parametrize("kappa, m, expected", [
    ((1, 1, 1), 2, 3),
    ((3, 2, -1), 2, 1),
    ((3, 2, -1), 4, 0),
    ((3, 2, -1), 0, 1),
    ((3, 2, -1), -1, 0),
])
def test_elem_sym_examples(kappa, m, expected):
    assert elem_sym(rat(kappa), m) == expected
    assert elem_sym(kappa, m) == expected


@pytest.mark.parametrize("kappa, m, excluded, expected", [
    ((3, 2, -1), 1, [0], 1),
    ((3, 2, -1), 0, [0, 1], 1),
    ((1, 1, 1, 1, 1), 2, [2], 6),
])
def test_elem_sym_excl_examples(kappa, m, excluded, expected):
    assert elem_sym_excl(rat(kappa), m, excluded) == expected


def test_sigma_partial_examples():
    k = rat((3, 2, -1))
    assert sigma_partial(k, 2, 1, 0) == 1
    assert sigma_partial(k, 2, 2, 0, 1) == 1
    assert sigma_partial(k, 2, 2, 1, 1) == 0


def test_errors():
    with pytest.raises(InvalidInputError):
        elem_sym([1.0, float("nan")], 1)
    with pytest.raises(InvalidIndexError):
        elem_sym_excl([1.0, 2.0, 3.0], 1, [3])
    with pytest.raises(InvalidInputError):
        sigma_partial([1.0, 2.0], 3, 1, 0)
    with pytest.raises(InvalidInputError):
        sigma_partial([1.0, 2.0], 2, 2, 0)
    with pytest.raises(InvalidInputError):
        KappaVector.of([1.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(fractions, min_size=2, max_size=9), st.integers(-1, 10))
def test_matches_subset_enumeration(values, m):
    assert elem_sym(rat(values), m) == oracle_sigma(values, m)


@settings(max_examples=200, deadline=None)
@given(st.lists(fractions, min_size=3, max_size=8), st.data())
def test_excl_matches_subset_enumeration(values, data):
    n = len(values)
    ex = data.draw(st.sets(st.integers(0, n - 1), max_size=n - 1))
    m = data.draw(st.integers(0, n))
    assert elem_sym_excl(rat(values), m, sorted(ex)) == oracle_sigma(values, m, ex)


@settings(max_examples=150, deadline=None)
@given(st.lists(fractions, min_size=2, max_size=8), st.data())
def test_identities_iii_iv(values, data):
    kap = rat(values)
    n = len(values)
    k = data.draw(st.integers(1, n))
    i = data.draw(st.integers(0, n - 1))
    s = elem_sym(kap, k)
    assert s == kap[i] * elem_sym_excl(kap, k - 1, [i]) + elem_sym_excl(kap, k, [i])
    assert sum(kap[j] * elem_sym_excl(kap, k - 1, [j]) for j in range(n)) == k * s


@settings(max_examples=100, deadline=None)
@given(st.lists(fractions, min_size=2, max_size=7))
def test_symmetric_under_permutation(values):
    kap = rat(values)
    rev = rat(values[::-1])
    for m in range(len(values) + 1):
        assert elem_sym(kap, m) == elem_sym(rev, m)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e6, allow_nan=False), min_size=2, max_size=10), st.integers(0, 10))
def test_float_accuracy_against_extended_oracle(values, m):
    m = min(m, len(values))
    got = elem_sym(values, m)
    ref = oracle_sigma(values, m)
    floor = 1e-6 * np.prod([max(abs(v), 1.0) for v in values])
    if abs(ref) >= floor:
        with mpmath.workprec(256):
            rel = abs((mpmath.mpf(got) - mpmath.mpf(ref.numerator) / ref.denominator)
                      / (mpmath.mpf(ref.numerator) / ref.denominator))
        assert rel <= 1e-12


def test_minors_cache_and_modes():
    kap = rat((3, 2, -1))
    mn = Minors(kap)
    assert mn(1, 0) == 1
    assert mn(0, 0, 1) == 1
    assert mn(-1, 0) == 0
    assert mn(5) == 0
    ext = KappaVector.of((3, 2, -1), "extended:128")
    assert float(elem_sym(ext, 2)) == 1.0


def test_batch_kernels_match_scalar():
    rng = np.random.default_rng(0)
    X = rng.uniform(-3, 5, (50, 6))
    S = esp_batch(X, 6)
    for r in range(0, 50, 7):
        for m in range(7):
            assert S[r, m] == pytest.approx(float(oracle_sigma(X[r].tolist(), m)), rel=1e-9, abs=1e-9)
    assert np.allclose(excl_batch(X, 2, [1, 3])[:5],
                       [float(oracle_sigma(X[r].tolist(), 2, (1, 3))) for r in range(5)])
    M1 = minors1_batch(X, 3)
    M2 = minors2_batch(X, 2)
    assert M1[4, 2] == pytest.approx(float(oracle_sigma(X[4].tolist(), 3, (2,))))
    assert M2[4, 1, 5] == pytest.approx(float(oracle_sigma(X[4].tolist(), 2, (1, 5))))
    assert M2[4, 3, 3] == 0
    cols = rng.integers(0, 6, 50)
    T = excl_rows(X, 3, cols)
    assert T[9, 3] == pytest.approx(float(oracle_sigma(X[9].tolist(), 3, (int(cols[9]),))))


def test_rational_input_rejects_non_fractions():
    with pytest.raises(InvalidInputError):
        rat((Fraction(1, 2), float("inf")))
