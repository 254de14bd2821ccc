from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conjecture_matrix as oracle_matrix
from oracles import min_eig_charpoly, quad
from sigmak import ContextInvalidError, InvalidIndexError, InvalidInputError, KappaVector
from sigmak.cone import ConeSpec, SampleParams, in_gamma_k, sample_batch
from sigmak.thm_forms import (QuadContext, c_kK, coeff_a, conjecture_lhs, conjecture_matrix, conjecture_matrix_batch,
                              minorant_M, minorant_matrix, min_eigenvalue, quad_forms, theorem_bracket,
                              theorem_gap, theorem_gap_batch, theorem_rhs, theorem_rhs_printed)

EX = (3, 2, -1)


def ctx_of(kappa=EX, k=2, i=0, K=1, validate=True):
    return QuadContext(KappaVector.of(kappa, "rational"), k, i, Fraction(K), validate)


@pytest.mark.parametrize("kappa, k, i, j, expected", [
    (EX, 2, 0, 1, 7),
    (EX, 2, 0, 2, 7),
    ((1, 1, 1), 3, 0, 1, 3),
])
def test_coeff_a(kappa, k, i, j, expected):
    assert coeff_a(ctx_of(kappa, k, i, 1, validate=False), j) == expected


def test_coeff_a_rejects_i():
    with pytest.raises(InvalidIndexError):
        coeff_a(ctx_of(), 0)


def test_c_kK():
    assert c_kK(ctx_of(K=1)) == Fraction(1, 2)
    assert c_kK(ctx_of(K=10)) == Fraction(1, 29)
    with pytest.raises(ContextInvalidError):
        ctx_of(K=Fraction(1, 3))
    with pytest.raises(ContextInvalidError):
        c_kK(ctx_of(K=Fraction(1, 3), validate=False))


def test_context_validation():
    with pytest.raises(ContextInvalidError):
        ctx_of((2, 2, -1))
    with pytest.raises(InvalidIndexError):
        ctx_of(i=3)
    with pytest.raises(InvalidInputError):
        ctx_of(k=4)
    ctx = QuadContext.from_ratio(KappaVector.of(EX, "rational"), 2, 0, 30)
    assert ctx.K == 10 and ctx.kratio == 30


def test_matrix_example_and_oracle():
    Q = conjecture_matrix(ctx_of())
    expected = {(0, 0): 2, (1, 1): 19, (2, 2): 82, (0, 1): 3, (0, 2): 12, (1, 2): 27}
    for (p, q), v in expected.items():
        assert Q[p][q] == v and Q[q][p] == v
    ref = oracle_matrix(EX, 2, 0, 1)
    assert [[Q[p][q] for q in range(3)] for p in range(3)] == ref


def test_lhs_examples():
    ctx = ctx_of()
    assert conjecture_lhs(ctx, (1, 0, 0)) == 2
    assert conjecture_lhs(ctx, (0, 1, 0)) == 19
    assert conjecture_lhs(ctx, (0, 0, 0)) == 0
    with pytest.raises(InvalidInputError):
        conjecture_lhs(ctx, (1, 0))


def test_quad_forms_examples():
    f = quad_forms(ctx_of(), (0, 1, 0))
    assert (f.A, f.B, f.C, f.D) == (1, 2, 4, 1)
    f = quad_forms(ctx_of(), (1, 0, 0))
    assert (f.A, f.B, f.C, f.D) == (0, 0, 0, 0)
    f = quad_forms(ctx_of((1, 1, 1), 2, 0, 1), (0, 1, 1))
    assert f.A == 4


def test_minorant_rhs_gap_examples():
    ctx = ctx_of()
    e2 = (0, 1, 0)
    assert minorant_M(ctx, e2) == Fraction(29, 2)
    assert theorem_bracket(ctx, e2) == Fraction(29, 2)
    assert theorem_rhs(ctx, e2) == Fraction(29, 2)
    assert theorem_rhs_printed(ctx, e2) == 29
    assert theorem_gap(ctx, e2) == Fraction(9, 2)
    assert minorant_M(ctx, (1, 0, 0)) == 0
    assert theorem_rhs(ctx, (1, 0, 0)) == 0
    assert theorem_gap(ctx, (1, 0, 0)) == conjecture_matrix(ctx)[0][0]
    assert theorem_gap(ctx, (0, 0, 0)) == 0


def test_min_eigenvalue_examples():
    assert min_eigenvalue(np.eye(3)) == pytest.approx(1.0)
    assert min_eigenvalue(np.diag([2.0, 19.0, 82.0])) == pytest.approx(2.0)
    Qr = conjecture_matrix(ctx_of())
    ref = min_eig_charpoly(oracle_matrix(EX, 2, 0, 1))
    assert float(ref) == pytest.approx(0.148360, abs=5e-6)
    with mpmath.workprec(256):
        assert abs(min_eigenvalue(Qr) - ref) < mpmath.mpf(2) ** -200
    Qf = np.array(Qr, dtype=float)
    assert abs(min_eigenvalue(Qf) - float(ref)) <= 10 * np.finfo(float).eps * np.linalg.norm(Qf)
    with pytest.raises(InvalidInputError):
        min_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_minorant_matrix_is_schur_complement():
    ctx = ctx_of(K=3)
    M = minorant_matrix(ctx)
    xi = (0, Fraction(2, 3), Fraction(-5, 7))
    assert quad(M.tolist(), xi) == minorant_M(ctx, xi)


def _random_ctx(data):
    n = data.draw(st.integers(2, 6), label="n")
    k = data.draw(st.integers(2, n), label="k")
    seed = data.draw(st.integers(0, 2**31), label="seed")
    rng = np.random.default_rng(seed)
    X, _ = sample_batch(ConeSpec(n, k), SampleParams((1.0, 50.0)), 1, rng)
    kap = [Fraction(v).limit_denominator(1000) for v in X[0]]
    i = data.draw(st.integers(0, n - 1), label="i")
    kv = KappaVector.of(kap, "rational")
    if not in_gamma_k(kv, ConeSpec(n, k)):
        return None
    s = float(kv[i]) * float(QuadContext(kv, k, i, 1, validate=False).s1[i])
    if s <= 0:
        return None
    ratio = data.draw(st.sampled_from([2, 10, 1000]), label="ratio")
    ctx = QuadContext.from_ratio(kv, k, i, ratio)
    xi = [Fraction(int(v), 7) for v in rng.integers(-20, 21, n)]
    return ctx, xi


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_exact_minorant_and_assembly(data):
    got = _random_ctx(data)
    if got is None:
        return
    ctx, xi = got
    lhs = conjecture_lhs(ctx, xi)
    M = minorant_M(ctx, xi)
    assert lhs >= M
    assert ctx.D * M == ctx.inv_c * theorem_bracket(ctx, xi)
    assert theorem_rhs(ctx, xi) == M
    assert theorem_gap(ctx, xi) >= 0
    assert lhs == quad(conjecture_matrix(ctx).tolist(), xi)


@settings(max_examples=80, deadline=None)
@given(st.data(), st.fractions(-5, 5, max_denominator=9))
def test_homogeneity(data, t):
    got = _random_ctx(data)
    if got is None:
        return
    ctx, xi = got
    assert conjecture_lhs(ctx, [t * v for v in xi]) == t * t * conjecture_lhs(ctx, xi)


def test_float_matrix_form_consistency():
    rng = np.random.default_rng(11)
    worst = 0.0
    for n, k in [(3, 2), (4, 3), (5, 3), (6, 4)]:
        X, _ = sample_batch(ConeSpec(n, k), SampleParams((1.0, 1e3)), 40, rng)
        for row in X:
            ctx = QuadContext.from_ratio(row.tolist(), k, 0, 100.0)
            Q = conjecture_matrix(ctx)
            xi = rng.normal(size=n)
            err = abs(conjecture_lhs(ctx, xi) - xi @ Q @ xi) / (np.linalg.norm(Q) * (xi @ xi))
            worst = max(worst, err)
    assert worst <= 1e-12


def test_batch_matches_scalar():
    rng = np.random.default_rng(4)
    n, k = 5, 3
    X, _ = sample_batch(ConeSpec(n, k), SampleParams((1.0, 100.0)), 30, rng)
    i = rng.integers(0, n, 30)
    M1 = np.array([float(QuadContext(r.tolist(), k, int(c), 1.0, validate=False).s1[int(c)]) for r, c in zip(X, i)])
    K = 1e3 / (X[np.arange(30), i] * M1)
    keep = K > 0
    X, i, K = X[keep], i[keep], K[keep]
    Xi = rng.normal(size=X.shape)
    Q = conjecture_matrix_batch(X, k, i, K)
    gap, lhs, rhs, _ = theorem_gap_batch(X, k, i, K, Xi)
    for r in range(len(X)):
        ctx = QuadContext(X[r].tolist(), k, int(i[r]), float(K[r]))
        assert np.allclose(Q[r], conjecture_matrix(ctx), rtol=1e-12, atol=1e-9)
        scale = np.linalg.norm(Q[r]) * (Xi[r] @ Xi[r])
        assert abs(gap[r] - theorem_gap(ctx, Xi[r].tolist())) <= 1e-10 * scale
        assert gap[r] >= -1e-10 * scale
