"""Exact randomized testing of the algebraic identities behind the estimates.

Each identity is a rational-function identity in the curvature entries (and,
where it appears, K, xi or a symmetric slice).  Residuals are evaluated in
``gmpy2.mpq`` at random rational points; a nonzero polynomial of bounded
degree vanishes at a random point with negligible probability, so a few
hundred zero residuals per identity are strong evidence.

The residual functions only see an :class:`_Eval` object (entries, a minor
callable and the order k), so the same code also runs on sympy symbols for
the optional symbolic cross-check.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import permutations
from math import lcm
from typing import Callable

import gmpy2
import numpy as np

from .errors import ContextInvalidError, DegenerateInputError, InvalidIndexError, InvalidInputError
from .lemmas import transport_check
from .scalar import RATIONAL
from .symfunc import KappaVector, Minors, _esp_plain, as_kappa

IDENTITY_IDS = (
    "iii",
    "iv",
    "v",
    "s3.04",
    "L4.1-1",
    "L4.1-2",
    "L4.1-3",
    "L4.1-4",
    "L4.1-5",
    "n3.7",
    "n311",
    "n3.13",
    "n3.17a",
    "assembly-s4.04",
)

#: number of distinct indices each identity takes
INDEX_ARITY = {
    "iii": 1, "iv": 0, "v": 0, "s3.04": 2,
    "L4.1-1": 2, "L4.1-2": 3, "L4.1-3": 2, "L4.1-4": 3, "L4.1-5": 3,
    "n3.7": 2, "n311": 2, "n3.13": 2, "n3.17a": 2, "assembly-s4.04": 1,
}
NEEDS_K = frozenset({"L4.1-1", "assembly-s4.04"})
NEEDS_XI = frozenset({"assembly-s4.04"})
NEEDS_SLICE = frozenset({"v"})

#: relative tolerance of the float exponential transport of s3.04
TRANSPORT_TOL = 1e-12


class _Eval:
    """Entries plus cached minors; ``sig(m, *excluded)``."""

    def __init__(self, entries, sig: Callable, k: int, one):
        self.kap = entries
        self.sig = sig
        self.k = k
        self.one = one

    def d1(self, p):
        return self.sig(self.k - 1, p)

    def d2(self, p, q):
        return self.one * 0 if p == q else self.sig(self.k - 2, p, q)


def _rational_eval(kappa: KappaVector, k: int) -> _Eval:
    mn = Minors(kappa)
    return _Eval(kappa.entries, mn, k, RATIONAL.convert(1))


# ---------------------------------------------------------------------------
# residuals (LHS - RHS)


def _r_iii(E, idx, **_):
    (i,) = idx
    k, s, x = E.k, E.sig, E.kap
    return s(k) - (x[i] * s(k - 1, i) + s(k, i))


def _r_iv(E, idx, **_):
    k, s, x = E.k, E.sig, E.kap
    total = E.one * 0
    for i in range(len(x)):
        total = total + x[i] * s(k - 1, i)
    return total - k * s(k)


def _r_s304(E, idx, **_):
    i, l = idx
    k, s, x = E.k, E.sig, E.kap
    return s(k - 1, l) - s(k - 1, i) - (x[i] - x[l]) * s(k - 2, i, l)


def _r_L1(E, idx, K, **_):
    i, j = idx
    k, s, x = E.k, E.sig, E.kap
    si, sj, sij = E.d1(i), E.d1(j), E.d2(i, j)
    aj = sj + (x[i] + x[j]) * sij
    inv_c = x[i] * K * si - 1
    lhs = x[i] * K * si * sj * (-sj + 2 * x[i] * sij) - x[i] ** 2 * sij**2 + aj * inv_c * si
    rhs = inv_c * (si + sj) * (x[i] + x[j]) * s(k - 2, i, j) - s(k - 1, i, j) ** 2
    return lhs - rhs


def _r_L2(E, idx, **_):
    i, p, q = idx
    k, s, x = E.k, E.sig, E.kap
    lhs = (x[i] * (E.d1(p) * E.d2(i, q) + E.d1(q) * E.d2(i, p) - E.d1(i) * E.d2(p, q))
           - E.d1(p) * E.d1(q) - x[i] ** 2 * E.d2(i, p) * E.d2(i, q) + x[i] * E.d1(i) * E.d2(p, q))
    rhs = -s(k - 1, i, p) * s(k - 1, i, q)
    return lhs - rhs


def _r_L3(E, idx, **_):
    i, j = idx
    k, s, x = E.k, E.sig, E.kap
    lhs = (E.d1(i) + E.d1(j)) * (x[i] + x[j])
    rhs = 2 * s(k) - 2 * s(k, i, j) + x[i] ** 2 * s(k - 2, i, j) + x[j] ** 2 * s(k - 2, i, j)
    return lhs - rhs


def _r_L4(E, idx, **_):
    i, p, q = idx
    k, s, x = E.k, E.sig, E.kap
    t = lambda m: s(m, i, p, q)  # noqa: E731
    lhs = E.d1(q) * E.d2(i, p) - E.d1(i) * E.d2(p, q)
    rhs = (x[i] * t(k - 2) ** 2 - x[i] * t(k - 1) * t(k - 3)
           + x[q] * t(k - 3) * t(k - 1) - x[q] * t(k - 2) ** 2)
    return lhs - rhs


def _r_L5(E, idx, **_):
    i, p, q = idx
    k, s, x = E.k, E.sig, E.kap
    t = lambda m: s(m, i, p, q)  # noqa: E731
    lhs = E.d1(p) * s(k - 1, i, q)
    rhs = (s(k) * t(k - 2) + t(k - 1) ** 2 - t(k) * t(k - 2)
           - x[q] * x[i] * t(k - 2) ** 2 + x[q] * x[i] * t(k - 3) * t(k - 1))
    return lhs - rhs


def _r_n37(E, idx, **_):
    i, j = idx
    x = E.kap
    if x[i] == x[j]:
        raise DegenerateInputError("n3.7 needs kappa_i != kappa_j")
    lhs = E.d1(j) + (x[i] + x[j]) * E.d2(i, j)
    rhs = (2 * x[i] * E.d1(j) - (x[i] + x[j]) * E.d1(i)) / (x[i] - x[j])
    return lhs - rhs


def _r_n311(E, idx, **_):
    i, j = idx
    k, s, x = E.k, E.sig, E.kap
    t = lambda m: s(m, i, j)  # noqa: E731
    return (x[i] + x[j]) * t(k - 1) - (s(k) - x[i] * x[j] * t(k - 2) - t(k))


def _r_n313(E, idx, **_):
    i, j = idx
    k, s, x = E.k, E.sig, E.kap
    t = lambda m: s(m, i, j)  # noqa: E731
    return x[j] ** 2 * t(k - 2) + s(k) - t(k) - (x[j] + x[i]) * s(k - 1, i)


def _r_n317a(E, idx, **_):
    i, j = idx
    k, s, x = E.k, E.sig, E.kap
    t = lambda m: s(m, i, j)  # noqa: E731
    return x[i] ** 2 * t(k - 2) + s(k) - t(k) - (x[i] + x[j]) * s(k - 1, j)


def _r_v(E, idx, slice_, **_):
    """Codazzi contraction at W = diag(kappa) with symmetric slice V."""
    V = slice_
    n = len(E.kap)
    lhs = -2 * _second_coeff_sigma_k(E.kap, V, E.k)
    rhs = E.one * 0
    for p in range(n):
        for q in range(n):
            d = E.d2(p, q)
            rhs = rhs + d * V[p][q] ** 2 - d * V[p][p] * V[q][q]
    return lhs - rhs


def _r_assembly(E, idx, K, xi, kappa=None, **_):
    from .thm_forms import QuadContext, minorant_M, quad_forms

    (i,) = idx
    ctx = QuadContext(kappa, E.k, i, K, validate=False)
    if ctx.D == 0:
        raise DegenerateInputError("the completed-square multiplier vanishes")
    f = quad_forms(ctx, xi)
    ki = ctx.kappa[i]
    lhs = ctx.D * minorant_M(ctx, xi)
    rhs = ctx.inv_c * (ki * ki * f.A + ctx.sigma_k * f.B + f.C) - f.D
    return lhs - rhs


RESIDUALS: dict[str, Callable] = {
    "iii": _r_iii, "iv": _r_iv, "v": _r_v, "s3.04": _r_s304,
    "L4.1-1": _r_L1, "L4.1-2": _r_L2, "L4.1-3": _r_L3, "L4.1-4": _r_L4, "L4.1-5": _r_L5,
    "n3.7": _r_n37, "n311": _r_n311, "n3.13": _r_n313, "n3.17a": _r_n317a,
    "assembly-s4.04": _r_assembly,
}


# ---------------------------------------------------------------------------
# independent oracle for identity v


def _second_coeff_sigma_k(entries, V, k: int):
    """[t^2] sigma_k(diag(entries) + t V) via integer power traces and Newton sums.

    sigma_k is homogeneous of degree k, so the point is scaled to integers by
    the lcm L of all denominators and the result divided by L^k at the end.
    """
    n = len(entries)
    if k < 2:
        return RATIONAL.convert(0)
    qs = [gmpy2.mpq(v) for v in entries] + [gmpy2.mpq(v) for row in V for v in row]
    L = 1
    for v in qs:
        L = lcm(L, int(v.denominator))
    w = [int(gmpy2.mpq(v) * L) for v in entries]
    M = [[int(gmpy2.mpq(v) * L) for v in row] for row in V]
    # powers of A = W + t M truncated at t^2; B0 diagonal, B1 and B2 dense
    b0 = [1] * n
    B1 = [[0] * n for _ in range(n)]
    B2 = [[0] * n for _ in range(n)]
    traces = []  # (p_m[t^0], p_m[t^1], p_m[t^2]) for m = 1..k
    for _m in range(1, k + 1):
        # new B2 = W B2 + M B1 ; new B1 = W B1 + M B0 ; new B0 = W B0
        nB2 = [[w[r] * B2[r][c] + sum(M[r][s] * B1[s][c] for s in range(n)) for c in range(n)]
               for r in range(n)]
        nB1 = [[w[r] * B1[r][c] + M[r][c] * b0[c] for c in range(n)] for r in range(n)]
        b0 = [w[r] * b0[r] for r in range(n)]
        B1, B2 = nB1, nB2
        traces.append((sum(b0), sum(B1[r][r] for r in range(n)), sum(B2[r][r] for r in range(n))))
    # Newton: m e_m = sum_{j=1..m} (-1)^{j-1} e_{m-j} p_j, truncated polynomials in t
    e = [(1, 0, 0)]
    for m in range(1, k + 1):
        acc = [0, 0, 0]
        for j in range(1, m + 1):
            sgn = 1 if j % 2 else -1
            a, p = e[m - j], traces[j - 1]
            acc[0] += sgn * a[0] * p[0]
            acc[1] += sgn * (a[0] * p[1] + a[1] * p[0])
            acc[2] += sgn * (a[0] * p[2] + a[1] * p[1] + a[2] * p[0])
        for c in range(3):
            qv, rem = divmod(acc[c], m)
            if rem:
                raise ArithmeticError("Newton recursion lost integrality")
            acc[c] = qv
        e.append(tuple(acc))
    return gmpy2.mpq(e[k][2], L**k)


# ---------------------------------------------------------------------------
# public API


def identity_residual(identity: str, kappa, k: int, indices=(), bigK=None, xi=None, slice_=None,
                      overrides: dict | None = None):
    """LHS - RHS of ``identity`` evaluated exactly; zero for every input."""
    if identity not in RESIDUALS:
        raise InvalidInputError(f"unknown identity id {identity!r}")
    kappa = as_kappa(kappa, RATIONAL)
    n = kappa.n
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} outside 1..{n}")
    idx = [int(v) for v in indices]
    if len(idx) != INDEX_ARITY[identity]:
        raise InvalidInputError(f"{identity} needs {INDEX_ARITY[identity]} indices, got {len(idx)}")
    if len(set(idx)) != len(idx) or any(not 0 <= v < n for v in idx):
        raise InvalidIndexError(f"indices {idx} must be distinct and in range")
    K = None
    if identity in NEEDS_K:
        if bigK is None:
            raise InvalidInputError(f"{identity} needs K")
        K = RATIONAL.convert(bigK)
        if K * kappa[idx[0]] * Minors(kappa)(k - 1, idx[0]) - 1 == 0:
            raise ContextInvalidError("c_{k,K} is undefined: its denominator vanishes")
    if identity in NEEDS_XI:
        if xi is None or len(xi) != n:
            raise InvalidInputError(f"{identity} needs xi of length n")
        xi = [RATIONAL.convert(v) for v in xi]
    if identity in NEEDS_SLICE:
        if slice_ is None or len(slice_) != n:
            raise InvalidInputError("identity v needs an n x n symmetric slice")
        slice_ = [[RATIONAL.convert(v) for v in row] for row in slice_]
        if any(slice_[p][q] != slice_[q][p] for p in range(n) for q in range(n)):
            raise InvalidInputError("the slice must be symmetric")
    fn = (overrides or {}).get(identity, RESIDUALS[identity])
    E = _rational_eval(kappa, k)
    return fn(E, idx, K=K, xi=xi, slice_=slice_, kappa=kappa)


def transport_residual(kappa, k: int, i: int, l: int) -> float:
    """Relative residual of the exponential transport of s3.04.

    Rational input is evaluated at 256 bits: the two sides can be orders of
    magnitude smaller than their terms, and float64 loses those digits.
    """
    lhs, rhs = transport_check(as_kappa(kappa), k, i, l)
    scale = abs(lhs) + abs(rhs)
    return float(abs(lhs - rhs) / scale) if scale > 0 else float(abs(lhs - rhs))


@dataclass(frozen=True)
class TrialPlan:
    trials: int = 1000
    denominator_bound: int = 10_000
    n_range: tuple[int, int] = (3, 8)
    seed: int = 42
    tuple_cap: int = 50
    ids: tuple = IDENTITY_IDS

    def __post_init__(self):
        lo, hi = self.n_range
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if self.denominator_bound < 1:
            raise InvalidInputError("denominator_bound must be >= 1")
        if not 2 <= lo <= hi <= 16:
            raise InvalidInputError("n_range must lie within [2, 16]")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        for ident in self.ids:
            if ident not in RESIDUALS:
                raise InvalidInputError(f"unknown identity id {ident!r}")


def _rand_q(rng: np.random.Generator, bound: int):
    num = int(rng.integers(-bound, bound + 1))
    den = int(rng.integers(1, bound + 1))
    return gmpy2.mpq(num, den)


def _combos(identity: str, n: int, rng: np.random.Generator, cap: int) -> list:
    arity = INDEX_ARITY[identity]
    out = []
    for k in range(1, n + 1):
        tuples = list(permutations(range(n), arity))
        if len(tuples) > cap:
            pick = sorted(rng.choice(len(tuples), size=cap, replace=False).tolist())
            tuples = [tuples[a] for a in pick]
        out.extend((k, t) for t in tuples)
    return out


def _id_seed(seed: int, identity: str, n: int) -> np.random.SeedSequence:
    tag = int.from_bytes(identity.encode(), "little") % (2**63)
    return np.random.SeedSequence([seed, tag, n])


def _run_identity(identity: str, plan: TrialPlan, overrides: dict | None) -> dict:
    lo, hi = plan.n_range
    B = plan.denominator_bound
    trials = failures = redraws = 0
    first = None
    transport_worst = 0.0
    n_arity = INDEX_ARITY[identity]
    for n in range(max(lo, n_arity, 2), hi + 1):
        rng = np.random.default_rng(_id_seed(plan.seed, identity, n))
        combos = _combos(identity, n, rng, plan.tuple_cap)
        t = 0
        while t < plan.trials:
            k, idx = combos[t % len(combos)]
            kap = [_rand_q(rng, B) for _ in range(n)]
            extra = {}
            if identity in NEEDS_K:
                extra["bigK"] = abs(_rand_q(rng, B)) + gmpy2.mpq(1, B)
            if identity in NEEDS_XI:
                extra["xi"] = [_rand_q(rng, B) for _ in range(n)]
            if identity in NEEDS_SLICE:
                V = [[None] * n for _ in range(n)]
                for p in range(n):
                    for q in range(p, n):
                        V[p][q] = V[q][p] = _rand_q(rng, B)
                extra["slice_"] = V
            try:
                res = identity_residual(identity, kap, k, idx, overrides=overrides, **extra)
            except (DegenerateInputError, ContextInvalidError):
                redraws += 1
                continue
            trials += 1
            t += 1
            if res != 0:
                failures += 1
                if first is None:
                    first = {
                        "n": n, "k": k, "indices": list(idx),
                        "kappa": [str(v) for v in kap],
                        "residual": str(res),
                        **{key: (str(v) if not isinstance(v, list) else
                                 [str(a) if not isinstance(a, list) else [str(b) for b in a] for a in v])
                           for key, v in extra.items()},
                    }
            if identity == "s3.04" and k >= 2:
                transport_worst = max(transport_worst, transport_residual(kap, k, idx[0], idx[1]))
    report = {"passed": failures == 0, "trials": trials, "failures": failures,
              "redraws": redraws, "first_failure": first}
    if identity == "s3.04":
        report["transport_max_rel"] = transport_worst
        report["transport_tol"] = TRANSPORT_TOL
        report["passed"] = report["passed"] and transport_worst <= TRANSPORT_TOL
    return report


def identity_suite(plan: TrialPlan | None = None, overrides: dict | None = None,
                   jobs: int = 1) -> dict:
    """Run every identity in ``plan.ids``; deterministic in ``plan.seed``.

    ``overrides`` maps identity ids to replacement residual functions (used
    by mutation tests).  With ``jobs > 1`` identities run in worker
    processes; the merged report is keyed by id, so order does not matter.
    """
    plan = plan or TrialPlan()
    t0 = time.perf_counter()
    if jobs > 1 and not overrides:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {ident: pool.submit(_run_identity, ident, plan, None) for ident in plan.ids}
            results = {ident: futs[ident].result() for ident in plan.ids}
    else:
        results = {ident: _run_identity(ident, plan, overrides) for ident in plan.ids}
    return {
        "plan": {"trials": plan.trials, "denominator_bound": plan.denominator_bound,
                 "n_range": list(plan.n_range), "seed": plan.seed, "tuple_cap": plan.tuple_cap},
        "identities": {ident: results[ident] for ident in plan.ids},
        "all_passed": all(r["passed"] for r in results.values()),
        "elapsed_s": time.perf_counter() - t0,
    }


# ---------------------------------------------------------------------------
# optional symbolic cross-check


def symbolic_check(identity: str, n: int, k: int, indices=()) -> bool:
    """Expand the residual symbolically with sympy (n <= 5); True if it is 0.

    Covers every identity except the assembly, whose forms are built by
    :mod:`sigmak.thm_forms` on concrete scalars.
    """
    try:
        import sympy
    except ImportError as exc:  # pragma: no cover
        raise InvalidInputError("sympy is not installed") from exc
    if n > 5:
        raise InvalidInputError("symbolic expansion is limited to n <= 5")
    if identity == "assembly-s4.04":
        raise InvalidInputError("the assembly identity is checked numerically only")
    x = sympy.symbols(f"x0:{n}")
    one = sympy.Integer(1)
    cache: dict = {}

    def sig(m, *excluded):
        key = frozenset(excluded)
        if key not in cache:
            vals = [x[a] for a in range(n) if a not in key]
            cache[key] = _esp_plain(vals, len(vals), one) if vals else [one]
        row = cache[key]
        return row[m] if 0 <= m < len(row) else sympy.Integer(0)

    E = _Eval(list(x), sig, k, one)
    extra = {}
    if identity in NEEDS_K:
        extra["K"] = sympy.Symbol("K")
    if identity in NEEDS_SLICE:
        V = [[None] * n for _ in range(n)]
        for p in range(n):
            for q in range(p, n):
                V[p][q] = V[q][p] = sympy.Symbol(f"v{p}{q}")
        extra["slice_"] = V
        t = sympy.Symbol("t")
        A = sympy.diag(*x) + t * sympy.Matrix(V)
        lam = sympy.Symbol("lam")
        poly = (lam * sympy.eye(n) + A).det()
        sig_k = sympy.Poly(sympy.expand(poly), lam).coeff_monomial(lam ** (n - k))
        lhs = -2 * sympy.Poly(sympy.expand(sig_k), t).coeff_monomial(t**2)
        rhs = sum(E.d2(p, q) * V[p][q] ** 2 - E.d2(p, q) * V[p][p] * V[q][q]
                  for p in range(n) for q in range(n))
        return sympy.expand(lhs - rhs) == 0
    res = RESIDUALS[identity](E, list(indices), **extra)
    return sympy.simplify(sympy.together(res)) == 0
