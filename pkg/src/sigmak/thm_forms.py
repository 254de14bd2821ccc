"""The concavity quadratic form, its four-form lower bound and the minorant.

For a context (kappa, k, i, K) the concavity form is

    kappa_i [K (sum_j s_j xi_j)^2 - sum_{p,q} s_pq xi_p xi_q]
        - s_i xi_i^2 + sum_{j != i} a_j xi_j^2,

with s_j = sigma_k^{jj}, s_pq = sigma_k^{pp,qq} and
a_j = s_j + (kappa_i + kappa_j) s_ij.  Eliminating xi_i by completing the
square gives the minorant M (the Schur complement of the (i, i) entry),
and M is rewritten through the forms A, B, C, D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cone import ConeSpec, in_gamma_k
from .errors import ContextInvalidError, InvalidIndexError, InvalidInputError
from .scalar import ScalarMode, TRANSCENDENTAL_BITS
from .symfunc import Minors, as_kappa, esp_batch, excl_batch

FORM_NAMES = ("A", "B", "C", "D")


@dataclass(frozen=True)
class FormBundle:
    A: object
    B: object
    C: object
    D: object


class QuadContext:
    """Everything needed to build the concavity form at index ``i``.

    First- and second-order minors are computed once at construction; the
    object is not mutated afterwards.  ``validate=False`` skips the cone
    and denominator checks, which the exact identity tests need because
    those identities hold for arbitrary rational input.
    """

    def __init__(self, kappa, k: int, i: int, bigK, validate: bool = True):
        kappa = as_kappa(kappa)
        n = kappa.n
        if not 1 <= k <= n:
            raise InvalidInputError(f"k={k} outside 1..{n}")
        if not 0 <= i < n:
            raise InvalidIndexError(f"index i={i} out of range for n={n}")
        self.kappa = kappa
        self.mode = kappa.mode
        self.n = n
        self.k = k
        self.i = i
        self.K = self.mode.convert(bigK)
        self.minors = Minors(kappa)
        mn = self.minors
        self.s1 = [mn(k - 1, j) for j in range(n)]
        zero = self.mode.convert(0)
        self.s2 = [[zero if p == q else mn(k - 2, p, q) for q in range(n)] for p in range(n)]
        self.sigma_k = mn(k)
        si = self.s1[i]
        self.inv_c = self.K * kappa[i] * si - 1
        self.D = self.inv_c * si  # kappa_i K (s_i)^2 - s_i
        if validate:
            if not self.K > 0:
                raise ContextInvalidError("K must be positive")
            if not in_gamma_k(kappa, ConeSpec(n, k)):
                raise ContextInvalidError("kappa is not in Gamma_k")
            if not self.inv_c > 0:
                raise ContextInvalidError(
                    "K * kappa_i * sigma_{k-1}(kappa|i) - 1 <= 0: K is below the regime "
                    "where c_{k,K} is positive"
                )

    @classmethod
    def from_ratio(cls, kappa, k: int, i: int, ratio, validate: bool = True) -> "QuadContext":
        """Pick K so that K * kappa_i * sigma_k^{ii} equals ``ratio``."""
        kappa = as_kappa(kappa)
        si = Minors(kappa)(k - 1, i)
        denom = kappa[i] * si
        if not denom > 0:
            raise ContextInvalidError("kappa_i * sigma_k^{ii} must be positive to fix K by ratio")
        return cls(kappa, k, i, kappa.mode.convert(ratio) / denom, validate)

    @property
    def kratio(self):
        return self.K * self.kappa[self.i] * self.s1[self.i]

    def others(self):
        return [j for j in range(self.n) if j != self.i]


def _as_xi(ctx: QuadContext, xi):
    xi = [ctx.mode.convert(v) for v in xi]
    if len(xi) != ctx.n:
        raise InvalidInputError(f"xi has length {len(xi)}, expected {ctx.n}")
    return xi


def _qform(M, xi):
    if isinstance(M, np.ndarray) and M.dtype == np.float64:
        x = np.asarray(xi, dtype=np.float64)
        return float(x @ M @ x)
    n = len(xi)
    total = xi[0] * 0
    for p in range(n):
        row = xi[p] * 0
        for q in range(n):
            row = row + M[p][q] * xi[q]
        total = total + xi[p] * row
    return total


def _new_matrix(ctx: QuadContext):
    if ctx.mode.kind == "float64":
        return np.zeros((ctx.n, ctx.n))
    zero = ctx.mode.convert(0)
    return np.array([[zero] * ctx.n for _ in range(ctx.n)], dtype=object)


# ---------------------------------------------------------------------------
# coefficients


def coeff_a(ctx: QuadContext, j: int):
    """a_j = sigma_k^{jj} + (kappa_i + kappa_j) sigma_k^{ii,jj}."""
    if not 0 <= j < ctx.n:
        raise InvalidIndexError(f"index j={j} out of range")
    if j == ctx.i:
        raise InvalidIndexError("a_j is defined only for j != i")
    kap = ctx.kappa
    return ctx.s1[j] + (kap[ctx.i] + kap[j]) * ctx.s2[ctx.i][j]


def c_kK(ctx: QuadContext):
    """c_{k,K} = 1 / (K kappa_i sigma_{k-1}(kappa|i) - 1)."""
    if not ctx.inv_c > 0:
        raise ContextInvalidError("c_{k,K} denominator is not positive")
    return 1 / ctx.inv_c if ctx.mode.kind != "float64" else 1.0 / ctx.inv_c


# ---------------------------------------------------------------------------
# the concavity form


def conjecture_matrix(ctx: QuadContext):
    """Symmetric Q with xi^T Q xi equal to the concavity form."""
    n, i = ctx.n, ctx.i
    kap, K, s1, s2 = ctx.kappa, ctx.K, ctx.s1, ctx.s2
    ki = kap[i]
    Q = _new_matrix(ctx)
    for p in range(n):
        for q in range(n):
            if p == q:
                Q[p][p] = ki * K * s1[p] * s1[p] + (-s1[i] if p == i else coeff_a(ctx, p))
            else:
                Q[p][q] = ki * K * s1[p] * s1[q] - ki * s2[p][q]
    return Q


def conjecture_lhs(ctx: QuadContext, xi):
    """The concavity form evaluated term by term (not through the matrix)."""
    xi = _as_xi(ctx, xi)
    n, i = ctx.n, ctx.i
    kap, K, s1, s2 = ctx.kappa, ctx.K, ctx.s1, ctx.s2
    zero = ctx.mode.convert(0)
    lin = zero
    for j in range(n):
        lin = lin + s1[j] * xi[j]
    hess = zero
    for p in range(n):
        for q in range(n):
            if p != q:
                hess = hess + s2[p][q] * xi[p] * xi[q]
    diag = zero
    for j in range(n):
        if j != i:
            diag = diag + coeff_a(ctx, j) * xi[j] * xi[j]
    return kap[i] * (K * lin * lin - hess) - s1[i] * xi[i] * xi[i] + diag


# ---------------------------------------------------------------------------
# the four forms


def form_matrices(ctx: QuadContext) -> dict:
    """Matrices of A, B, C, D (row and column i are zero)."""
    n, i, k = ctx.n, ctx.i, ctx.k
    mn, kap = ctx.minors, ctx.kappa
    mats = {name: _new_matrix(ctx) for name in FORM_NAMES}
    for j in range(n):
        if j == i:
            continue
        t2 = mn(k - 2, i, j)
        mats["A"][j][j] = t2 * t2
        mats["B"][j][j] = 2 * t2
        mats["C"][j][j] = kap[j] * kap[j] * t2 * t2 - 2 * mn(k, i, j) * t2
        t1 = mn(k - 1, i, j)
        mats["D"][j][j] = t1 * t1
    for p in range(n):
        for q in range(n):
            if p == q or p == i or q == i:
                continue
            u3, u2, u1, u0 = mn(k - 3, i, p, q), mn(k - 2, i, p, q), mn(k - 1, i, p, q), mn(k, i, p, q)
            mats["A"][p][q] = u2 * u2 - u1 * u3
            mats["B"][p][q] = -u2
            mats["C"][p][q] = u0 * u2 - u1 * u1
            mats["D"][p][q] = mn(k - 1, i, p) * mn(k - 1, i, q)
    return mats


def quad_forms(ctx: QuadContext, xi) -> FormBundle:
    xi = _as_xi(ctx, xi)
    mats = form_matrices(ctx)
    return FormBundle(*(_qform(mats[name], xi) for name in FORM_NAMES))


def minorant_M(ctx: QuadContext, xi):
    """Lower bound of the concavity form after eliminating xi_i."""
    xi = _as_xi(ctx, xi)
    i, kap, K, s1, s2 = ctx.i, ctx.kappa, ctx.K, ctx.s1, ctx.s2
    ki, si, D = kap[i], s1[i], ctx.D
    if D == 0:
        raise ContextInvalidError("kappa_i K (sigma_k^{ii})^2 - sigma_k^{ii} vanishes")
    others = ctx.others()
    total = ctx.mode.convert(0)
    for j in others:
        b = K * si * s1[j] - s2[i][j]
        coef = ki * K * s1[j] * s1[j] - ki * ki * b * b / D + coeff_a(ctx, j)
        total = total + coef * xi[j] * xi[j]
    for p in others:
        bp = K * si * s1[p] - s2[i][p]
        for q in others:
            if p == q:
                continue
            bq = K * si * s1[q] - s2[i][q]
            coef = ki * K * s1[p] * s1[q] - ki * ki * bp * bq / D - ki * s2[p][q]
            total = total + coef * xi[p] * xi[q]
    return total


def theorem_bracket(ctx: QuadContext, xi):
    """kappa_i^2 A + sigma_k B + C - c_{k,K} D."""
    f = quad_forms(ctx, xi)
    c = 1 / ctx.inv_c
    ki = ctx.kappa[ctx.i]
    return ki * ki * f.A + ctx.sigma_k * f.B + f.C - c * f.D


def theorem_rhs(ctx: QuadContext, xi):
    """(1/c_{k,K}) [kappa_i^2 A + sigma_k B + C - c_{k,K} D] / (kappa_i K s_i^2 - s_i).

    The divisor is the multiplier applied to both sides before the forms are
    assembled, so this equals the minorant exactly.  The printed statement
    without that divisor overstates the bound by the factor
    kappa_i K s_i^2 - s_i.
    """
    if not ctx.inv_c != 0 or ctx.D == 0:
        raise ContextInvalidError("degenerate context: c_{k,K} or its multiplier vanishes")
    return ctx.inv_c * theorem_bracket(ctx, xi) / ctx.D


def theorem_rhs_printed(ctx: QuadContext, xi):
    """The bound as printed, (1/c_{k,K})[...], kept for reporting the discrepancy."""
    return ctx.inv_c * theorem_bracket(ctx, xi)


def theorem_gap(ctx: QuadContext, xi):
    return conjecture_lhs(ctx, xi) - theorem_rhs(ctx, xi)


def minorant_matrix(ctx: QuadContext):
    """Schur complement of the (i, i) entry, embedded with a zero row/column i."""
    Q = conjecture_matrix(ctx)
    i = ctx.i
    M = _new_matrix(ctx)
    for p in ctx.others():
        for q in ctx.others():
            M[p][q] = Q[p][q] - Q[p][i] * Q[i][q] / Q[i][i]
    return M


# ---------------------------------------------------------------------------
# eigenvalues


def _frobenius(Q) -> float:
    return float(np.sqrt(sum(float(v) ** 2 for v in np.asarray(Q, dtype=object).ravel())))


def min_eigenvalue(Q, bits: int | None = None):
    """Smallest eigenvalue of a symmetric matrix.

    float64 input goes to LAPACK (``numpy.linalg.eigvalsh``); object arrays
    of mpf or rational entries go to mpmath's symmetric solver at ``bits``
    (default: the entries' own precision, 256 for rationals).
    """
    if isinstance(Q, np.ndarray) and Q.dtype == np.float64:
        A = Q
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidInputError("Q must be square")
        if A.shape[0] > 64:
            raise InvalidInputError("min_eigenvalue supports n <= 64")
        scale = np.linalg.norm(A)
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * max(scale, np.finfo(float).tiny):
            raise InvalidInputError("Q is not symmetric")
        if bits is None:
            return float(np.linalg.eigvalsh(A)[0])
    rows = [list(r) for r in np.asarray(Q, dtype=object)]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise InvalidInputError("Q must be square")
    if n > 64:
        raise InvalidInputError("min_eigenvalue supports n <= 64")
    if bits is None:
        bits = TRANSCENDENTAL_BITS
        for r in rows:
            for v in r:
                ctx_v = getattr(v, "context", None)
                if ctx_v is not None:
                    bits = ctx_v.prec
                    break
            else:
                continue
            break
    mode = ScalarMode.extended(bits)
    A = mode.ctx.matrix([[mode.convert(v) for v in r] for r in rows])
    scale = mode.ctx.mnorm(A, "f")
    tol = mode.eps * 16 * (scale if scale > 0 else 1)
    for p in range(n):
        for q in range(p + 1, n):
            if abs(A[p, q] - A[q, p]) > tol:
                raise InvalidInputError("Q is not symmetric")
    evals = mode.ctx.eigsy(A, eigvals_only=True)
    return min(evals[r] for r in range(n))


def min_eigenpair(Q):
    """(lambda_min, unit eigenvector) for a float64 symmetric matrix."""
    w, V = np.linalg.eigh(np.asarray(Q, dtype=np.float64))
    return float(w[0]), V[:, 0].copy()


# ---------------------------------------------------------------------------
# batched float64 versions (rows are points, ``i`` and ``K`` per row)


def _first_second_batch(X: np.ndarray, k: int):
    from .symfunc import minors1_batch, minors2_batch

    return minors1_batch(X, k - 1), minors2_batch(X, k - 2)


def conjecture_matrix_batch(X: np.ndarray, k: int, i: np.ndarray, K: np.ndarray,
                            S1: np.ndarray | None = None, S2: np.ndarray | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    N, n = X.shape
    if S1 is None or S2 is None:
        S1, S2 = _first_second_batch(X, k)
    rows = np.arange(N)
    i = np.asarray(i)
    ki = X[rows, i]
    si = S1[rows, i]
    sij = S2[rows, i, :]  # sigma_{k-2}(kappa|ij), zero at j = i
    a = S1 + (ki[:, None] + X) * sij
    Q = (ki * K)[:, None, None] * S1[:, :, None] * S1[:, None, :] - ki[:, None, None] * S2
    diag = np.einsum("nii->ni", Q)
    diag += a
    Q[rows, i, i] = ki * K * si * si - si
    return Q


def theorem_gap_batch(X: np.ndarray, k: int, i: np.ndarray, K: np.ndarray, Xi: np.ndarray,
                      S1: np.ndarray | None = None, S2: np.ndarray | None = None):
    """Return (gap, lhs, rhs, Q) for each row."""
    X = np.asarray(X, dtype=np.float64)
    N, n = X.shape
    if S1 is None or S2 is None:
        S1, S2 = _first_second_batch(X, k)
    Q = conjecture_matrix_batch(X, k, i, K, S1, S2)
    lhs = np.einsum("np,npq,nq->n", Xi, Q, Xi)
    rows = np.arange(N)
    i = np.asarray(i)
    ki = X[rows, i]
    si = S1[rows, i]
    inv_c = K * ki * si - 1
    D = inv_c * si
    sig_k = esp_batch(X, k)[:, k]
    bracket = np.empty(N)
    for iv in np.unique(i):
        sel = np.nonzero(i == iv)[0]
        A, B, C, Dm = _form_matrices_batch(X[sel], k, int(iv))
        xs = Xi[sel]
        fa = np.einsum("np,npq,nq->n", xs, A, xs)
        fb = np.einsum("np,npq,nq->n", xs, B, xs)
        fc = np.einsum("np,npq,nq->n", xs, C, xs)
        fd = np.einsum("np,npq,nq->n", xs, Dm, xs)
        bracket[sel] = ki[sel] ** 2 * fa + sig_k[sel] * fb + fc - fd / inv_c[sel]
    rhs = inv_c * bracket / D
    return lhs - rhs, lhs, rhs, Q


def _form_matrices_batch(X: np.ndarray, k: int, i: int):
    N, n = X.shape
    A = np.zeros((N, n, n))
    B = np.zeros((N, n, n))
    C = np.zeros((N, n, n))
    Dm = np.zeros((N, n, n))
    s1_ip = {p: excl_batch(X, k - 1, [i, p]) for p in range(n) if p != i}
    for j in range(n):
        if j == i:
            continue
        t2 = excl_batch(X, k - 2, [i, j])
        A[:, j, j] = t2 * t2
        B[:, j, j] = 2 * t2
        C[:, j, j] = X[:, j] ** 2 * t2 * t2 - 2 * excl_batch(X, k, [i, j]) * t2
        Dm[:, j, j] = s1_ip[j] ** 2
    for p in range(n):
        for q in range(p + 1, n):
            if i in (p, q):
                continue
            keep = [c for c in range(n) if c not in (i, p, q)]
            sig = esp_batch(X[:, keep], max(k, 0))
            get = lambda m: sig[:, m] if 0 <= m <= min(k, len(keep)) else np.zeros(N)  # noqa: E731
            u3, u2, u1, u0 = get(k - 3), get(k - 2), get(k - 1), get(k)
            for a, b in ((p, q), (q, p)):
                A[:, a, b] = u2 * u2 - u1 * u3
                B[:, a, b] = -u2
                C[:, a, b] = u0 * u2 - u1 * u1
                Dm[:, a, b] = s1_ip[p] * s1_ip[q]
    return A, B, C, Dm
