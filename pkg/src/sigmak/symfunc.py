"""Elementary symmetric polynomials, their minors and partial derivatives.

All evaluation goes through one division-free recurrence,

    e_m <- e_m + x_j * e_{m-1},

applied to the entries in order.  In float64 the recurrence carries a
double-double accumulator (error-free TwoSum/TwoProduct), which keeps the
result accurate to a few ulps even under heavy cancellation.  The same code
runs elementwise on numpy arrays, which is how the batched scans use it.

Indices are zero-based throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidIndexError, InvalidInputError
from .scalar import FLOAT64, ScalarMode, infer_mode

_SPLIT = 134217729.0  # 2**27 + 1


@dataclass(frozen=True)
class KappaVector:
    """An n-vector of principal-curvature values."""

    entries: tuple
    mode: ScalarMode = FLOAT64

    def __post_init__(self):
        if len(self.entries) < 2:
            raise InvalidInputError("a KappaVector needs n >= 2 entries")
        object.__setattr__(self, "entries", tuple(self.mode.convert(v) for v in self.entries))

    @classmethod
    def of(cls, values: Iterable, mode: ScalarMode | str | None = None) -> "KappaVector":
        values = list(values)
        if mode is None:
            mode = infer_mode(values)
        elif isinstance(mode, str):
            mode = ScalarMode.parse(mode)
        return cls(tuple(values), mode)

    @property
    def n(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx):
        return self.entries[idx]

    def __iter__(self):
        return iter(self.entries)

    def as_mode(self, mode: ScalarMode | str) -> "KappaVector":
        if isinstance(mode, str):
            mode = ScalarMode.parse(mode)
        if mode == self.mode:
            return self
        return KappaVector(self.entries, mode)

    def sorted_desc(self) -> tuple["KappaVector", list[int]]:
        """Sorted copy and the permutation ``perm`` with ``new[r] = old[perm[r]]``."""
        perm = sorted(range(self.n), key=lambda a: self.entries[a], reverse=True)
        return KappaVector(tuple(self.entries[a] for a in perm), self.mode), perm

    def drop(self, excluded: Iterable[int]) -> tuple:
        ex = _check_excluded(self.n, excluded)
        return tuple(v for a, v in enumerate(self.entries) if a not in ex)


def as_kappa(kappa, mode: ScalarMode | None = None) -> KappaVector:
    if isinstance(kappa, KappaVector):
        return kappa if mode is None else kappa.as_mode(mode)
    return KappaVector.of(kappa, mode)


# ---------------------------------------------------------------------------
# kernels


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _esp_dd(values: Sequence, top: int):
    """Double-double recurrence; ``values`` may be floats or float arrays."""
    zero = values[0] * 0.0
    hi = [zero + 1.0] + [zero] * top
    lo = [zero] * (top + 1)
    for j, x in enumerate(values):
        for m in range(min(j + 1, top), 0, -1):
            p, pe = _two_prod(x, hi[m - 1])
            pe = pe + x * lo[m - 1]
            s, se = _two_sum(hi[m], p)
            se = se + (lo[m] + pe)
            h = s + se
            lo[m] = se - (h - s)
            hi[m] = h
    return [h + l for h, l in zip(hi, lo)]


def _esp_plain(values: Sequence, top: int, one):
    e = [one] + [one * 0] * top
    for j, x in enumerate(values):
        for m in range(min(j + 1, top), 0, -1):
            e[m] = e[m] + x * e[m - 1]
    return e


def esp_all(values: Sequence, top: int, mode: ScalarMode = FLOAT64) -> list:
    """[sigma_0, ..., sigma_top] of ``values`` (orders above len are zero)."""
    top = max(int(top), 0)
    n = len(values)
    if n == 0:
        return [mode.convert(1)] + [mode.convert(0)] * top
    eff = min(top, n)
    if mode.kind == "float64":
        out = _esp_dd(values, eff)
    else:
        out = _esp_plain(values, eff, mode.convert(1))
    return out + [out[0] * 0] * (top - eff)


def _check_excluded(n: int, excluded: Iterable[int]) -> frozenset:
    ex = list(excluded)
    for a in ex:
        if not isinstance(a, (int, np.integer)) or not 0 <= a < n:
            raise InvalidIndexError(f"index {a!r} out of range for n={n}")
    if len(set(ex)) != len(ex):
        raise InvalidIndexError(f"excluded indices must be distinct, got {ex}")
    return frozenset(int(a) for a in ex)


def _sigma_of(values: Sequence, m: int, mode: ScalarMode):
    if m < 0 or m > len(values):
        return mode.convert(0)
    if m == 0:
        return mode.convert(1)
    return esp_all(values, m, mode)[m]


# ---------------------------------------------------------------------------
# public operations


def elem_sym(kappa, m: int):
    """sigma_m(kappa); sigma_0 = 1 and sigma_m = 0 outside 0..n."""
    kappa = as_kappa(kappa)
    return _sigma_of(kappa.entries, int(m), kappa.mode)


def elem_sym_excl(kappa, m: int, excluded: Iterable[int]):
    """sigma_m(kappa | excluded), recomputed on the reduced vector."""
    kappa = as_kappa(kappa)
    return _sigma_of(kappa.drop(excluded), int(m), kappa.mode)


def sigma_partial(kappa, k: int, order: int, p: int, q: int | None = None):
    """First or second partial of sigma_k in the diagonal frame.

    ``order=1`` gives sigma_k^{pp} = sigma_{k-1}(kappa|p); ``order=2`` gives
    sigma_k^{pp,qq} = sigma_{k-2}(kappa|pq), and exactly zero when p == q.
    """
    kappa = as_kappa(kappa)
    n = kappa.n
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} outside 1..{n}")
    if order == 1:
        return elem_sym_excl(kappa, k - 1, [p])
    if order == 2:
        if q is None:
            raise InvalidInputError("second-order partial needs q")
        _check_excluded(n, [p])
        _check_excluded(n, [q])
        if p == q:
            return kappa.mode.convert(0)
        return elem_sym_excl(kappa, k - 2, [p, q])
    raise InvalidInputError(f"order must be 1 or 2, got {order}")


def brute_force_sym(values: Sequence, m: int, one=1):
    """Subset enumeration, kept as an independent oracle."""
    if m < 0 or m > len(values):
        return one * 0
    total = one * 0
    for subset in combinations(values, m):
        prod = one
        for v in subset:
            prod = prod * v
        total = total + prod
    return total


class Minors:
    """Cache of sigma_m(kappa|S) keyed by the excluded set S."""

    def __init__(self, kappa: KappaVector):
        self.kappa = kappa
        self.mode = kappa.mode
        self._cache: dict[frozenset, list] = {}

    def all_orders(self, excluded: Iterable[int] = ()) -> list:
        key = frozenset(excluded)
        hit = self._cache.get(key)
        if hit is None:
            vals = tuple(v for a, v in enumerate(self.kappa.entries) if a not in key)
            hit = esp_all(vals, len(vals), self.mode) if vals else [self.mode.convert(1)]
            self._cache[key] = hit
        return hit

    def __call__(self, m: int, *excluded: int):
        orders = self.all_orders(excluded)
        if m < 0 or m >= len(orders):
            return self.mode.convert(0)
        return orders[m]


# ---------------------------------------------------------------------------
# batched float64 kernels (rows are points)


def esp_batch(X: np.ndarray, top: int) -> np.ndarray:
    """Array of shape (N, top+1) with sigma_0..sigma_top of each row."""
    X = np.asarray(X, dtype=np.float64)
    N, n = X.shape
    out = np.zeros((N, top + 1))
    if n == 0:
        out[:, 0] = 1.0
        return out
    eff = min(top, n)
    cols = [X[:, j] for j in range(n)]
    vals = _esp_dd(cols, eff)
    for m, v in enumerate(vals):
        out[:, m] = v
    return out


def sigma_batch(X: np.ndarray, m: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    N, n = X.shape
    if m < 0 or m > n:
        return np.zeros(N)
    if m == 0:
        return np.ones(N)
    return esp_batch(X, m)[:, m]


def excl_batch(X: np.ndarray, m: int, excluded: Sequence[int]) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    keep = [c for c in range(X.shape[1]) if c not in set(excluded)]
    return sigma_batch(X[:, keep], m)


def minors1_batch(X: np.ndarray, m: int) -> np.ndarray:
    """(N, n) array of sigma_m(kappa|j)."""
    X = np.asarray(X, dtype=np.float64)
    return np.stack([excl_batch(X, m, [j]) for j in range(X.shape[1])], axis=1)


def minors2_batch(X: np.ndarray, m: int) -> np.ndarray:
    """(N, n, n) array of sigma_m(kappa|pq), zero on the diagonal."""
    X = np.asarray(X, dtype=np.float64)
    N, n = X.shape
    out = np.zeros((N, n, n))
    for p in range(n):
        for q in range(p + 1, n):
            v = excl_batch(X, m, [p, q])
            out[:, p, q] = v
            out[:, q, p] = v
    return out


def excl_rows(X: np.ndarray, top: int, *cols: np.ndarray) -> np.ndarray:
    """sigma_0..sigma_top of each row with a per-row set of entries removed.

    ``cols`` are integer arrays of length N; a zero entry contributes nothing
    to any sigma_m, so removal is done by zeroing.  Indices within a row
    must be distinct.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    rows = np.arange(X.shape[0])
    for c in cols:
        X[rows, np.asarray(c)] = 0.0
    return esp_batch(X, top)


def pick(table: np.ndarray, m: int) -> np.ndarray:
    """Column m of an esp table, with sigma_m = 0 outside the stored range."""
    if m < 0 or m >= table.shape[1]:
        return np.zeros(table.shape[0])
    return table[:, m]
