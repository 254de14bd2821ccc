"""Garding cone membership, the Korevaar characterization and a cone sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import DomainError, InvalidInputError, SamplingError
from .symfunc import KappaVector, Minors, as_kappa, esp_all, esp_batch, excl_batch


@dataclass(frozen=True)
class ConeSpec:
    n: int
    k: int
    sigma_floor: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInputError(f"n must be >= 2, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise InvalidInputError(f"k must lie in 1..{self.n}, got {self.k}")
        if self.sigma_floor < 0:
            raise InvalidInputError("sigma_floor must be nonnegative")


@dataclass(frozen=True)
class SampleParams:
    kappa1_range: tuple[float, float] = (1.0, 1e3)
    negativity_bias: float = 0.3
    seed: int = 42
    max_rejects: int = 10_000

    def __post_init__(self):
        lo, hi = self.kappa1_range
        if not (0 < lo <= hi):
            raise InvalidInputError(f"kappa1_range must satisfy 0 < lo <= hi, got {self.kappa1_range}")
        if not 0.0 <= self.negativity_bias <= 1.0:
            raise InvalidInputError("negativity_bias must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if self.max_rejects < 1:
            raise InvalidInputError("max_rejects must be positive")


def _check_n(kappa: KappaVector, spec: ConeSpec):
    if kappa.n != spec.n:
        raise InvalidInputError(f"kappa has n={kappa.n}, spec expects n={spec.n}")


def in_gamma_k(kappa, spec: ConeSpec, slack=0) -> bool:
    """True iff sigma_1..sigma_k are all strictly above ``slack`` (default 0)."""
    kappa = as_kappa(kappa)
    _check_n(kappa, spec)
    sig = esp_all(kappa.entries, spec.k, kappa.mode)
    if kappa.mode.is_exact:
        slack = 0
    return all(s > slack for s in sig[1:])


def korevaar_check(kappa, spec: ConeSpec) -> bool:
    """sigma_k > 0 and every iterated partial sigma_{k-m}(kappa|S) > 0."""
    kappa = as_kappa(kappa)
    _check_n(kappa, spec)
    n, k = spec.n, spec.k
    minors = Minors(kappa)
    if not minors(k) > 0:
        return False
    for m in range(1, k + 1):
        for S in combinations(range(n), m):
            if not minors(k - m, *S) > 0:
                return False
    return True


def maclaurin_gap(kappa, k: int, l: int):
    """[sigma_l / C(n,l)]^(1/l) - [sigma_k / C(n,k)]^(1/k) for kappa in Gamma_k."""
    kappa = as_kappa(kappa)
    n = kappa.n
    if not 1 <= l <= k <= n:
        raise InvalidInputError(f"need 1 <= l <= k <= n, got l={l}, k={k}, n={n}")
    if not in_gamma_k(kappa, ConeSpec(n, k)):
        raise DomainError("maclaurin_gap requires kappa in Gamma_k")
    mode = kappa.mode.transcendental()
    sig = esp_all(kappa.as_mode(mode).entries, k, mode)
    lhs = mode.root(sig[l] / comb(n, l), l)
    rhs = mode.root(sig[k] / comb(n, k), k)
    return lhs - rhs


# ---------------------------------------------------------------------------
# batched checks


def in_gamma_k_batch(X: np.ndarray, k: int, slack: float = 0.0) -> np.ndarray:
    sig = esp_batch(X, k)
    return np.all(sig[:, 1:] > slack, axis=1)


def korevaar_batch(X: np.ndarray, k: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    ok = esp_batch(X, k)[:, k] > 0
    for m in range(1, k):
        for S in combinations(range(n), m):
            if not ok.any():
                return ok
            ok &= excl_batch(X, k - m, S) > 0
    return ok  # m = k leaves sigma_0 = 1


# ---------------------------------------------------------------------------
# sampler


def _draw_candidates(rng: np.random.Generator, spec: ConeSpec, params: SampleParams,
                     size: int, case: str | None):
    n = spec.n
    lo, hi = params.kappa1_range
    if hi > lo:
        k1 = np.exp(rng.uniform(math.log(lo), math.log(hi), size))
    else:
        k1 = np.full(size, float(lo))
    neg = rng.random((size, n - 1)) < params.negativity_bias
    mag = rng.random((size, n - 1))
    u = np.where(neg, -mag, mag)
    others = k1[:, None] * u
    if case == "II":
        # pin the top cluster inside the case-II window around kappa_1
        width = np.sqrt(k1) / n
        j = rng.integers(1, n + 1, size)
        pin = np.arange(n - 1)[None, :] < (j - 1)[:, None]
        pinned = k1[:, None] - width[:, None] * rng.random((size, n - 1))
        others = np.where(pin, pinned, others)
    X = np.concatenate([k1[:, None], others], axis=1)
    X = -np.sort(-X, axis=1)
    X[:, 0] = k1
    return X


def sample_batch(spec: ConeSpec, params: SampleParams, size: int,
                 rng: np.random.Generator | None = None, case: str | None = None,
                 slack: float = 0.0):
    """Draw ``size`` sorted points of Gamma_k by rejection.

    Returns ``(X, stats)``.  ``case="II"`` pins a random-size top cluster
    within sqrt(kappa_1)/n of kappa_1.  The rejection budget is
    ``params.max_rejects`` per requested point.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    n, k = spec.n, spec.k
    accepted: list[np.ndarray] = []
    got = drawn = 0
    budget = params.max_rejects * max(size, 1)
    while got < size:
        want = size - got
        chunk = int(min(max(64, 2 * want), 1 << 16))
        X = _draw_candidates(rng, spec, params, chunk, case)
        drawn += chunk
        ok = np.sum(X < 0, axis=1) <= n - k
        ok &= in_gamma_k_batch(X, k, slack)
        if spec.sigma_floor > 0:
            ok &= esp_batch(X, k)[:, k] >= spec.sigma_floor
        good = X[ok][:want]
        accepted.append(good)
        got += len(good)
        if drawn - got > budget and got < size:
            raise SamplingError(
                "rejection budget exhausted",
                {"drawn": drawn, "accepted": got, "accept_rate": got / drawn,
                 "n": n, "k": k, "case": case, "kappa1_range": list(params.kappa1_range)},
            )
    X = np.concatenate(accepted, axis=0) if accepted else np.zeros((0, n))
    stats = {"drawn": drawn, "accepted": int(got), "accept_rate": got / max(drawn, 1)}
    return X, stats


def sample_gamma_k(spec: ConeSpec, params: SampleParams, case: str | None = None) -> KappaVector:
    """One sorted point of Gamma_k; deterministic in ``params.seed``."""
    X, _ = sample_batch(spec, params, 1, np.random.default_rng(params.seed), case)
    return KappaVector(tuple(float(v) for v in X[0]))


def maclaurin_gap_batch(X: np.ndarray, k: int, l) -> tuple[np.ndarray, np.ndarray]:
    """(gap, scale) of the normalized power-mean comparison for rows in Gamma_k."""
    X = np.asarray(X, dtype=np.float64)
    N, n = X.shape
    l = np.broadcast_to(np.asarray(l, dtype=np.int64), (N,))
    sig = esp_batch(X, k)
    rows = np.arange(N)
    cl = np.array([comb(n, int(v)) for v in l], dtype=np.float64)
    # scale-free: divide by kappa_1 first so the roots stay in range
    k1 = np.abs(X).max(axis=1)
    lhs = (sig[rows, l] / k1**l / cl) ** (1.0 / l)
    rhs = (sig[:, k] / k1**k / comb(n, k)) ** (1.0 / k)
    return lhs - rhs, lhs + rhs
