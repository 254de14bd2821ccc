import math
import zlib

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import divdiff as oracle_divdiff
from oracles import sigma as oracle_sigma
from sigmak import DegenerateInputError, DomainError, InvalidIndexError, InvalidInputError, KappaVector, ModeRangeError
from sigmak.cone import ConeSpec, SampleParams, sample_batch
from sigmak.lemmas import (LEMMA_IDS, L_value, divdiff_exp, divdiff_exp_batch, evaluate_lemma, lemma_gap,
                           _INDEX_COUNT, lemma_gap_batch, maclaurin_ratio_min, theta_bound, theta_default, transport_check)

EX = (3, 2, -1)


def rat(v):
    return KappaVector.of(v, "rational")


def test_divdiff_examples():
    assert divdiff_exp(3.0, 3.0) == pytest.approx(math.exp(3), rel=1e-15)
    assert divdiff_exp(1.0, 0.0) == pytest.approx(math.e - 1, rel=1e-15)
    got = divdiff_exp(1 + 1e-13, 1.0)
    ref = oracle_divdiff(1 + 1e-13, 1.0)
    assert abs(got - float(ref)) / float(ref) < 1e-10
    with pytest.raises(ModeRangeError):
        divdiff_exp(800.0, 0.0)
    with pytest.raises(InvalidInputError):
        divdiff_exp(float("inf"), 0.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-50, 50), st.floats(-1e-4, 1e-4))
def test_divdiff_accuracy_and_symmetry(a, d):
    b = a + d
    got = divdiff_exp(a, b)
    assert got == divdiff_exp(b, a)
    ref = oracle_divdiff(a, b)
    assert abs(got - float(ref)) <= 1e-12 * float(ref)


def test_divdiff_across_series_boundary():
    tau = 2.0**-26
    for a in (-3.0, 0.0, 2.5, 40.0):
        for d in (tau * 0.999, tau, tau * 1.001):
            ref = float(oracle_divdiff(a + d, a))
            assert abs(divdiff_exp(a + d, a) - ref) <= 1e-12 * ref


def test_divdiff_batch_matches_scalar():
    rng = np.random.default_rng(0)
    a = rng.uniform(-20, 20, 200)
    b = a + rng.choice([0.0, 1e-12, 1e-3, 3.0], 200)
    out = divdiff_exp_batch(a, b)
    assert np.allclose(out, [divdiff_exp(x, y) for x, y in zip(a, b)], rtol=1e-14)


def test_divdiff_extended_mode():
    v = divdiff_exp(mpmath.mpf(1000), mpmath.mpf(999))
    ref = oracle_divdiff(1000, 999)
    assert abs(v - ref) <= 1e-14 * ref


def test_lemma_examples():
    spec = ConeSpec(3, 2)
    assert theta_bound(3, 2) == 1.0
    assert float(lemma_gap("theta-2.3", rat(EX), spec, (0, 1))) == pytest.approx(1.0)
    assert lemma_gap("prod-2.6", rat(EX), spec, params={"s": 1}) == 1
    assert lemma_gap("neg-2.5a", rat(EX), spec, (2,)) == 0.5
    assert lemma_gap("ratio-2.4", rat(EX), spec, params={"s": 0}) == 0


def test_lemma_errors():
    spec = ConeSpec(3, 2)
    with pytest.raises(InvalidInputError):
        lemma_gap("theta-2.3", rat(EX), spec, (0,))
    with pytest.raises(InvalidIndexError):
        lemma_gap("theta-2.3", rat(EX), spec, (0, 0))
    with pytest.raises(InvalidInputError):
        lemma_gap("nope", rat(EX), spec)
    with pytest.raises(InvalidInputError):
        lemma_gap("guan-2.2", rat(EX), spec, params={"l": 2, "w": (1, 1, 1)})
    with pytest.raises(InvalidInputError):
        lemma_gap("prod-2.6", rat(EX), spec, params={"s": 2})


def test_L_examples():
    e = math.e
    assert float(L_value(rat((5, 4, 1)), 2, 0, 1)) == pytest.approx(45 * e - 60, rel=1e-14)
    assert float(L_value(rat((5, 4, 1)), 2, 1, 0)) == pytest.approx(40 * e - 54, rel=1e-14)
    with pytest.raises(DegenerateInputError):
        L_value(rat((5, 5, 1)), 2, 0, 1)


def test_a36_limit_continuity():
    kap = (mpmath.mpf(40), mpmath.mpf(39.5), mpmath.mpf(3), mpmath.mpf(-1))
    spec = ConeSpec(4, 3)
    i, j = 1, 2
    at = list(kap)
    at[j] = at[i]
    limit = evaluate_lemma("a3.6", KappaVector.of(at, "extended:128"), spec, (i, j))
    near = list(kap)
    near[j] = near[i] - mpmath.mpf("1e-8")
    close = evaluate_lemma("a3.6", KappaVector.of(near, "extended:128"), spec, (i, j))
    assert abs(close.gap - limit.gap) <= 1e-6 * abs(limit.scale)
    sj = oracle_sigma([float(v) for v in at], 2, (j,))
    sij = oracle_sigma([float(v) for v in at], 1, (i, j))
    expected = 2 * 39.5 * sj - (sj + 79 * sij)
    assert float(limit.gap) == pytest.approx(float(expected), rel=1e-12)


def test_auto_promotion_above_float_range():
    res = evaluate_lemma("L-n3.8", [900.0, 10.0, 5.0], k=2, indices=(0, 1))
    assert res.mode.startswith("extended")
    assert mpmath.isfinite(res.gap) and res.gap > 0


def test_transport_identity():
    rng = np.random.default_rng(8)
    for _ in range(200):
        n = int(rng.integers(3, 8))
        k = int(rng.integers(2, n + 1))
        kap = rng.uniform(-5, 30, n).tolist()
        i, l = (int(v) for v in rng.choice(n, 2, replace=False))
        lhs, rhs = transport_check(kap, k, i, l)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1e-300) or lhs == rhs


def _codazzi_sample(rng, n, k, count):
    X, _ = sample_batch(ConeSpec(n, k), SampleParams((1.0, 1e3)), count, rng)
    W = rng.uniform(-1, 1, (count, n)) * X[:, :1] ** 1.5
    return X, W


@pytest.mark.parametrize("delta", [0.1, 0.5, 1.0])
def test_guan_inequality(delta):
    rng = np.random.default_rng(int(delta * 10))
    for n, k in [(3, 2), (4, 3), (5, 3), (6, 4)]:
        X, W = _codazzi_sample(rng, n, k, 300)
        for l in range(1, k):
            gap, scale = lemma_gap_batch("guan-2.2", X, k, params={"l": l, "delta": delta, "w": W})
            assert (gap >= -1e-10 * scale).all()
        r = 7
        scalar = evaluate_lemma("guan-2.2", X[r].tolist(), k=k, params={"l": k - 1, "delta": delta, "w": W[r]})
        g, s = lemma_gap_batch("guan-2.2", X[r:r + 1], k, params={"l": k - 1, "delta": delta, "w": W[r:r + 1]})
        assert g[0] / s[0] == pytest.approx(scalar.normalized, abs=1e-12)


def test_theta27_default_and_empirical():
    rng = np.random.default_rng(12)
    for n, k in [(3, 2), (5, 3), (6, 4), (8, 5)]:
        X, _ = sample_batch(ConeSpec(n, k), SampleParams((1.0, 1e3)), 400, rng)
        emp = min(maclaurin_ratio_min(r.tolist(), k) for r in X)
        assert emp >= theta_default(n, k)
        j = np.zeros((400, 1), dtype=int) + rng.integers(0, k)
        gap, _ = lemma_gap_batch("theta-2.7", X, k, j)
        assert (gap >= 0).all()


SCALAR_COMPARABLE = [lid for lid in LEMMA_IDS if lid not in ("guan-2.2",)]


@pytest.mark.parametrize("lemma", SCALAR_COMPARABLE)
def test_batch_matches_scalar(lemma):
    rng = np.random.default_rng(zlib.crc32(lemma.encode()))
    n, k = 5, 3
    X, _ = sample_batch(ConeSpec(n, k), SampleParams((1.0, 30.0), 0.5), 60, rng)
    count = _INDEX_COUNT[lemma]
    idx = np.array([rng.choice(n, count, replace=False) for _ in range(60)]) if count else None
    params = {"s": 2} if lemma in ("ratio-2.4", "prod-2.6") else {}
    gap, scale = lemma_gap_batch(lemma, X, k, idx, params)
    for r in range(0, 60, 6):
        ind = tuple(int(v) for v in idx[r]) if count else ()
        try:
            res = evaluate_lemma(lemma, X[r].tolist(), k=k, indices=ind, params=params)
        except (DomainError, DegenerateInputError):
            assert not np.isfinite(gap[r])
            continue
        assert gap[r] / scale[r] == pytest.approx(res.normalized, abs=1e-11)


@pytest.mark.parametrize("kappa, k, i, j", [((5, 4, 1), 2, 0, 1), ((7, 6.5, -1, 3), 3, 1, 3)])
def test_L_oracle(kappa, k, i, j):
    ki, kj = kappa[i], kappa[j]
    si = oracle_sigma(kappa, k - 1, (i,))
    sj = oracle_sigma(kappa, k - 1, (j,))
    with mpmath.workprec(256):
        if ki > kj:
            ref = (ki + kj) * mpmath.exp(mpmath.mpf(ki - kj)) * float(si) - 2 * ki * float(sj)
        else:
            ref = 2 * ki * mpmath.exp(mpmath.mpf(kj - ki)) * float(sj) - (ki + kj) * float(si)
    assert float(L_value(list(map(float, kappa)), k, i, j)) == pytest.approx(float(ref), rel=1e-12)
