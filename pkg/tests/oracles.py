"""Reference implementations that share no code with the package.

Symmetric functions are enumerated over subsets with ``fractions.Fraction``;
transcendental values use mpmath at 256 bits.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import prod

import mpmath

ORACLE_BITS = 256


def sigma(values, m: int, excluded=()):
    """sigma_m of ``values`` with the given positions removed, by subset enumeration."""
    vals = [Fraction(v) for a, v in enumerate(values) if a not in set(excluded)]
    if m < 0 or m > len(vals):
        return Fraction(0)
    return sum((prod(c, start=Fraction(1)) for c in combinations(vals, m)), Fraction(0))


def conjecture_matrix(kappa, k: int, i: int, K) -> list[list[Fraction]]:
    """Entry formulas for the concavity quadratic form, with 0-based ``i``."""
    n = len(kappa)
    K = Fraction(K)
    x = [Fraction(v) for v in kappa]
    s1 = [sigma(x, k - 1, (p,)) for p in range(n)]
    Q = [[Fraction(0)] * n for _ in range(n)]
    for p in range(n):
        for q in range(n):
            if p == q:
                if p == i:
                    Q[p][p] = x[i] * K * s1[i] ** 2 - s1[i]
                else:
                    a = s1[p] + (x[i] + x[p]) * sigma(x, k - 2, (i, p))
                    Q[p][p] = x[i] * K * s1[p] ** 2 + a
            else:
                Q[p][q] = x[i] * K * s1[p] * s1[q] - x[i] * sigma(x, k - 2, (p, q))
    return Q


def quad(Q, xi):
    n = len(xi)
    return sum(Q[p][q] * Fraction(xi[p]) * Fraction(xi[q]) for p in range(n) for q in range(n))


def min_eig_charpoly(Q) -> mpmath.mpf:
    """Smallest root of det(t I - Q) for a 3x3 rational Q, at 256 bits."""
    a = Q
    tr = a[0][0] + a[1][1] + a[2][2]
    m2 = (a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0]
          + a[1][1] * a[2][2] - a[1][2] * a[2][1])
    det = (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
           - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
           + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
    with mpmath.workprec(ORACLE_BITS):
        coeffs = [mpmath.mpf(1), -mpmath.mpf(tr.numerator) / tr.denominator,
                  mpmath.mpf(m2.numerator) / m2.denominator, -mpmath.mpf(det.numerator) / det.denominator]
        roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=ORACLE_BITS)
        return min(mpmath.re(r) for r in roots)


def divdiff(a: float, b: float) -> mpmath.mpf:
    with mpmath.workprec(ORACLE_BITS):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        if a == b:
            return mpmath.exp(a)
        return mpmath.exp(b) * mpmath.expm1(a - b) / (a - b)


def log_p(kappa) -> mpmath.mpf:
    with mpmath.workprec(ORACLE_BITS):
        return mpmath.log(mpmath.fsum(mpmath.exp(mpmath.mpf(v)) for v in kappa))


def claim_terms(kappa, k: int, i: int, K, h) -> tuple:
    """(A, B, C, D, E) at 256 bits from the displayed formulas; ``h[l]`` = h(l, l, i)."""
    n = len(kappa)
    with mpmath.workprec(ORACLE_BITS):
        x = [mpmath.mpf(v) for v in kappa]
        h = [mpmath.mpf(v) for v in h]
        K = mpmath.mpf(K)
        e = [mpmath.exp(v) for v in x]

        def s(m, *ex):
            f = sigma(kappa, m, ex)
            return mpmath.mpf(f.numerator) / f.denominator

        lin = mpmath.fsum(s(k - 1, p) * h[p] for p in range(n))
        hess = mpmath.fsum(s(k - 2, p, q) * h[p] * h[q] for p in range(n) for q in range(n) if p != q)
        A = e[i] * (K * lin**2 - hess)
        B = 2 * mpmath.fsum(s(k - 2, i, l) * e[l] * h[l] ** 2 for l in range(n) if l != i)
        C = s(k - 1, i) * mpmath.fsum(e[l] * h[l] ** 2 for l in range(n))
        D = 2 * mpmath.fsum(s(k - 1, l) * divdiff(kappa[l], kappa[i]) * h[l] ** 2 for l in range(n) if l != i)
        P = mpmath.fsum(e)
        logP = mpmath.log(P)
        Pi = mpmath.fsum(e[l] * h[l] for l in range(n))
        E = (1 + logP) / (P * logP) * s(k - 1, i) * Pi**2
        return A, B, C, D, E
