"""Test-function terms A_i..E_i built from P = sum_l e^{kappa_l} and a derivative slice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .cone import ConeSpec, in_gamma_k
from .errors import DomainError, InvalidIndexError, InvalidInputError, ModeRangeError
from .lemmas import divdiff_exp, divdiff_exp_batch
from .scalar import ScalarMode
from .symfunc import KappaVector, Minors, as_kappa, excl_batch, excl_rows, pick


class DerivSlice:
    """Fully symmetric third-order data h(a, b, c), stored on sorted triples.

    Missing triples are zero.  Construction symmetrizes by canonicalizing
    keys, so ``h(a, b, c)`` is invariant under every permutation.
    """

    def __init__(self, n: int, values: dict | None = None):
        if n < 2:
            raise InvalidInputError("a slice needs n >= 2")
        self.n = n
        self._h: dict[tuple, object] = {}
        for key, v in (values or {}).items():
            key = self._key(key)
            if isinstance(v, float) and not math.isfinite(v):
                raise InvalidInputError(f"non-finite slice value at {key}")
            self._h[key] = v

    def _key(self, triple) -> tuple:
        if len(triple) != 3:
            raise InvalidInputError("slice keys are index triples")
        for a in triple:
            if not 0 <= int(a) < self.n:
                raise InvalidIndexError(f"slice index {a} out of range for n={self.n}")
        return tuple(sorted(int(a) for a in triple))

    @classmethod
    def zeros(cls, n: int) -> "DerivSlice":
        return cls(n)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, scale: float = 1.0) -> "DerivSlice":
        """i.i.d. uniform values in [-scale, scale] on every sorted triple."""
        vals = {}
        for a in range(n):
            for b in range(a, n):
                for c in range(b, n):
                    vals[(a, b, c)] = float(rng.uniform(-scale, scale))
        return cls(n, vals)

    def __call__(self, a: int, b: int, c: int):
        return self._h.get(self._key((a, b, c)), 0)

    def items(self):
        return self._h.items()

    def scaled(self, t) -> "DerivSlice":
        return DerivSlice(self.n, {key: t * v for key, v in self._h.items()})

    def permuted(self, perm) -> "DerivSlice":
        """Slice in new coordinates where new index r is old index perm[r]."""
        inv = {old: new for new, old in enumerate(perm)}
        return DerivSlice(self.n, {tuple(inv[a] for a in key): v for key, v in self._h.items()})

    def column(self, i: int) -> list:
        """[h(l, l, i) for l in range(n)]."""
        return [self(l, l, i) for l in range(self.n)]

    def is_symmetric(self) -> bool:
        return all(self(*p) == self(a, b, c) for (a, b, c) in self._h for p in permutations((a, b, c)))


@dataclass(frozen=True)
class TermBundle:
    A: object
    B: object
    C: object
    D: object
    E: object
    P: object = None
    logP: object = None
    P_i: object = None
    mode: str = "float64"
    promoted: bool = False
    index: int = 0
    frame_index: int = 0

    @property
    def gap(self):
        return self.A + self.B + self.C + self.D - self.E

    @property
    def scale(self):
        return abs(self.A) + abs(self.B) + abs(self.C) + abs(self.D) + abs(self.E)


def compute_P(kappa, mode: ScalarMode | None = None):
    """(P, log P) with log P from the log-sum-exp form; P may be inf in float64."""
    kappa = as_kappa(kappa)
    mode = (mode or kappa.mode).transcendental()
    vals = [mode.convert(v) for v in kappa.entries]
    top = max(vals)
    if mode.kind == "float64":
        s = math.fsum(math.exp(v - top) for v in vals)
        logP = top + math.log(s)
        try:
            P = math.exp(logP)
        except OverflowError:
            P = math.inf
        assert logP >= top, "log P must exceed kappa_1"
    else:
        ctx = mode.ctx
        s = ctx.fsum(ctx.exp(v - top) for v in vals)
        logP = top + ctx.log(s)
        P = ctx.exp(logP)
        assert logP >= top, "log P must exceed kappa_1"
    return P, logP


def classify_case(kappa, i: int) -> str:
    """'II' if kappa_i > kappa_1 - sqrt(kappa_1)/n, else 'I'."""
    kappa = as_kappa(kappa)
    if not 0 <= i < kappa.n:
        raise InvalidIndexError(f"index {i} out of range")
    mode = kappa.mode.transcendental()
    k1 = mode.convert(max(kappa.entries))
    if not k1 > 0:
        raise DomainError("the case threshold needs kappa_1 > 0")
    cut = k1 - mode.sqrt(k1) / kappa.n
    return "II" if mode.convert(kappa[i]) > cut else "I"


def _terms(kap: KappaVector, h: list, k: int, i: int, K, mode: ScalarMode):
    n = kap.n
    mn = Minors(kap)
    zero = mode.convert(0)
    e = [mode.exp(v) for v in kap.entries]
    s1 = [mn(k - 1, p) for p in range(n)]
    lin = zero
    for p in range(n):
        lin = lin + s1[p] * h[p]
    hess = zero
    for p in range(n):
        for q in range(n):
            if p != q:
                hess = hess + mn(k - 2, p, q) * h[p] * h[q]
    A = e[i] * (K * lin * lin - hess)
    B = zero
    D = zero
    for l in range(n):
        if l == i:
            continue
        B = B + 2 * mn(k - 2, i, l) * e[l] * h[l] * h[l]
        D = D + 2 * s1[l] * divdiff_exp(kap[l], kap[i], mode) * h[l] * h[l]
    wsum = zero
    Pi = zero
    for l in range(n):
        wsum = wsum + e[l] * h[l] * h[l]
        Pi = Pi + e[l] * h[l]
    C = s1[i] * wsum
    P, logP = compute_P(kap, mode)
    E = (1 + logP) / (P * logP) * s1[i] * Pi * Pi
    if mode.kind == "float64" and not all(math.isfinite(v) for v in (A, B, C, D, E)):
        raise ModeRangeError("terms overflow float64; evaluate in extended mode")
    return A, B, C, D, E, P, logP, Pi


def stability_terms(kappa, slice_: DerivSlice, spec: ConeSpec, i: int, bigK,
                    check_cone: bool = True) -> TermBundle:
    """The five terms at index ``i`` (given in the caller's coordinates).

    kappa is sorted descending first, and the slice is permuted with it.
    Float64 overflow of e^{kappa} triggers a 128-bit retry, recorded in
    ``promoted``.
    """
    kappa = as_kappa(kappa)
    if kappa.n != spec.n or slice_.n != spec.n:
        raise InvalidInputError("kappa, slice and spec must agree on n")
    if not 0 <= i < kappa.n:
        raise InvalidIndexError(f"index {i} out of range")
    if check_cone and not in_gamma_k(kappa, spec):
        raise DomainError("kappa is not in Gamma_k")
    srt, perm = kappa.sorted_desc()
    sl = slice_.permuted(perm)
    r = perm.index(i)
    mode = srt.mode.transcendental()
    promoted = False
    for attempt in range(2):
        try:
            kap = srt.as_mode(mode)
            h = [mode.convert(v) for v in sl.column(r)]
            K = mode.convert(bigK)
            A, B, C, D, E, P, logP, Pi = _terms(kap, h, spec.k, r, K, mode)
            break
        except ModeRangeError:
            if attempt:
                raise
            mode = ScalarMode.extended(128)
            promoted = True
    return TermBundle(A, B, C, D, E, P, logP, Pi, str(mode), promoted, i, r)


def claim_gap(kappa, slice_: DerivSlice, spec: ConeSpec, i: int, bigK):
    """A_i + B_i + C_i + D_i - E_i."""
    return stability_terms(kappa, slice_, spec, i, bigK).gap


# ---------------------------------------------------------------------------
# batched float64 claim, multiplied through by e^{-kappa_1}


def claim_terms_batch(X: np.ndarray, k: int, i: np.ndarray, K: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Rescaled terms, shape (N, 5), for sorted rows ``X`` and h(l,l,i) rows ``V``.

    Every term is divided by e^{kappa_1}, so nothing overflows and the
    normalized gap sum(terms*sign)/sum|terms| is unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    N, n = X.shape
    rows = np.arange(N)
    i = np.asarray(i, dtype=np.int64)
    K = np.broadcast_to(np.asarray(K, dtype=np.float64), (N,))
    top = X.max(axis=1)
    Z = X - top[:, None]
    w = np.exp(Z)
    S1 = np.stack([excl_batch(X, k - 1, [p]) for p in range(n)], axis=1)
    lin = np.sum(S1 * V, axis=1)
    hess = np.zeros(N)
    for p in range(n):
        for q in range(p + 1, n):
            hess += 2 * excl_batch(X, k - 2, [p, q]) * V[:, p] * V[:, q]
    wi = w[rows, i]
    si = S1[rows, i]
    A = wi * (K * lin * lin - hess)
    B = np.zeros(N)
    D = np.zeros(N)
    zi = Z[rows, i]
    for l in range(n):
        off = i != l
        sil = pick(excl_rows(X, k, i, np.full(N, l)), k - 2)
        B += np.where(off, 2 * sil * w[:, l] * V[:, l] ** 2, 0.0)
        g = divdiff_exp_batch(Z[:, l], zi)
        D += np.where(off, 2 * S1[:, l] * g * V[:, l] ** 2, 0.0)
    C = si * np.sum(w * V * V, axis=1)
    Pp = np.sum(w, axis=1)
    logP = top + np.log(Pp)
    Pi = np.sum(w * V, axis=1)
    E = (1 + logP) / logP * si * Pi * Pi / Pp
    return np.stack([A, B, C, D, E], axis=1)


def claim_gap_batch(X, k, i, K, V):
    """(rescaled gap, rescaled scale) per row."""
    T = claim_terms_batch(X, k, i, K, V)
    gap = T[:, 0] + T[:, 1] + T[:, 2] + T[:, 3] - T[:, 4]
    return gap, np.sum(np.abs(T), axis=1)


def classify_case_batch(X: np.ndarray, i: np.ndarray) -> np.ndarray:
    """True where row's index i is in case II."""
    X = np.asarray(X, dtype=np.float64)
    k1 = X.max(axis=1)
    n = X.shape[1]
    return X[np.arange(X.shape[0]), i] > k1 - np.sqrt(k1) / n
