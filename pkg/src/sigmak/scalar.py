"""Scalar modes: float64, extended (mpmath at a fixed bit width) and rational.

Every numeric routine in the package takes its arithmetic from a
:class:`ScalarMode`.  Values live as native Python floats, ``mpmath`` ``mpf``
instances bound to a private context, or ``gmpy2.mpq`` rationals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Any

import gmpy2
from mpmath.ctx_mp import MPContext

from .errors import InvalidInputError, ModeRangeError

#: precision used when a rational computation needs exp/log/sqrt
TRANSCENDENTAL_BITS = 256

_MPQ = type(gmpy2.mpq(0))
_MPZ = type(gmpy2.mpz(0))


@lru_cache(maxsize=None)
def mp_context(bits: int) -> MPContext:
    ctx = MPContext()
    ctx.prec = bits
    return ctx


@dataclass(frozen=True)
class ScalarMode:
    kind: str = "float64"
    bits: int = 53

    def __post_init__(self):
        if self.kind not in ("float64", "extended", "rational"):
            raise InvalidInputError(f"unknown scalar mode {self.kind!r}")
        if self.kind == "extended" and self.bits < 64:
            raise InvalidInputError("extended mode needs at least 64 bits")

    # constructors -------------------------------------------------------
    @classmethod
    def float64(cls) -> "ScalarMode":
        return cls("float64", 53)

    @classmethod
    def extended(cls, bits: int = 128) -> "ScalarMode":
        return cls("extended", int(bits))

    @classmethod
    def rational(cls) -> "ScalarMode":
        return cls("rational", 0)

    @classmethod
    def parse(cls, text: str) -> "ScalarMode":
        """Parse ``float64``, ``rational`` or ``extended[:bits]``."""
        text = text.strip().lower()
        if text in ("float64", "float", "f64"):
            return cls.float64()
        if text in ("rational", "exact", "q"):
            return cls.rational()
        if text.startswith("extended"):
            _, _, bits = text.partition(":")
            return cls.extended(int(bits) if bits else 128)
        raise InvalidInputError(f"cannot parse scalar mode {text!r}")

    def __str__(self) -> str:
        if self.kind == "extended":
            return f"extended:{self.bits}"
        return self.kind

    # properties ----------------------------------------------------------
    @property
    def is_exact(self) -> bool:
        return self.kind == "rational"

    @property
    def ctx(self) -> MPContext:
        if self.kind != "extended":
            raise InvalidInputError(f"{self} has no mpmath context")
        return mp_context(self.bits)

    @property
    def eps(self):
        if self.kind == "float64":
            return 2.0**-52
        if self.kind == "extended":
            return self.ctx.mpf(2) ** (1 - self.bits)
        return 0

    def transcendental(self) -> "ScalarMode":
        """Mode to use when exp/log/sqrt are required."""
        if self.kind == "rational":
            return ScalarMode.extended(TRANSCENDENTAL_BITS)
        return self

    # conversion ----------------------------------------------------------
    def convert(self, x: Any):
        if self.kind == "float64":
            v = _to_float(x)
            if not math.isfinite(v):
                raise InvalidInputError(f"non-finite value {x!r}")
            return v
        if self.kind == "extended":
            ctx = self.ctx
            if isinstance(x, (_MPQ, Fraction)):
                v = ctx.mpf(int(x.numerator)) / int(x.denominator)
            elif isinstance(x, str):
                v = ctx.mpf(x)
            elif hasattr(x, "_mpf_"):
                v = ctx.mpf(x)
            else:
                v = ctx.mpf(_to_float(x) if not isinstance(x, (int, _MPZ)) else int(x))
            if not ctx.isfinite(v):
                raise InvalidInputError(f"non-finite value {x!r}")
            return v
        return _to_mpq(x)

    def to_float(self, x) -> float:
        return _to_float(x)

    # transcendental functions -------------------------------------------
    def exp(self, x):
        if self.kind == "float64":
            try:
                return math.exp(x)
            except OverflowError:
                raise ModeRangeError(
                    f"exp({x!r}) overflows float64; evaluate in extended mode"
                ) from None
        m = self.transcendental()
        return m.ctx.exp(m.convert(x))

    def expm1(self, x):
        if self.kind == "float64":
            try:
                return math.expm1(x)
            except OverflowError:
                raise ModeRangeError(
                    f"expm1({x!r}) overflows float64; evaluate in extended mode"
                ) from None
        m = self.transcendental()
        return m.ctx.expm1(m.convert(x))

    def log(self, x):
        if self.kind == "float64":
            return math.log(x)
        m = self.transcendental()
        return m.ctx.log(m.convert(x))

    def log1p(self, x):
        if self.kind == "float64":
            return math.log1p(x)
        m = self.transcendental()
        return m.ctx.log1p(m.convert(x))

    def sqrt(self, x):
        if self.kind == "float64":
            return math.sqrt(x)
        if self.kind == "rational":
            q = _to_mpq(x)
            if q >= 0 and gmpy2.is_square(q.numerator) and gmpy2.is_square(q.denominator):
                return gmpy2.mpq(gmpy2.isqrt(q.numerator), gmpy2.isqrt(q.denominator))
        m = self.transcendental()
        return m.ctx.sqrt(m.convert(x))

    def root(self, x, r: int):
        if self.kind == "float64":
            return math.pow(x, 1.0 / r) if x >= 0 else -math.pow(-x, 1.0 / r)
        m = self.transcendental()
        return m.ctx.root(m.convert(x), r)

    def isfinite(self, x) -> bool:
        if self.kind == "float64":
            return math.isfinite(x)
        if self.kind == "extended":
            return bool(self.ctx.isfinite(x))
        return True

    def fmt(self, x) -> str:
        """Stable text form used in reports."""
        if isinstance(x, float):
            return repr(x)
        if isinstance(x, _MPQ):
            return str(x)
        if hasattr(x, "_mpf_"):
            ctx = mp_context(self.bits if self.kind == "extended" else TRANSCENDENTAL_BITS)
            digits = max(17, int(ctx.prec * 0.30103) + 1)
            return ctx.nstr(x, digits, strip_zeros=False)
        return str(x)


FLOAT64 = ScalarMode.float64()
RATIONAL = ScalarMode.rational()


def _to_float(x) -> float:
    if isinstance(x, float):
        return x
    if isinstance(x, (int, _MPZ)):
        return float(int(x))
    if isinstance(x, (_MPQ, Fraction)):
        return float(Fraction(int(x.numerator), int(x.denominator)))
    if hasattr(x, "_mpf_"):
        return float(x)
    if isinstance(x, str):
        return float(x)
    return float(x)


def _to_mpq(x):
    if isinstance(x, _MPQ):
        return x
    if isinstance(x, (int, _MPZ)):
        return gmpy2.mpq(int(x))
    if isinstance(x, float):
        if not math.isfinite(x):
            raise InvalidInputError(f"non-finite value {x!r}")
        return gmpy2.mpq(x)
    if isinstance(x, Rational):
        return gmpy2.mpq(int(x.numerator), int(x.denominator))
    if isinstance(x, str):
        return gmpy2.mpq(Fraction(x))
    if hasattr(x, "_mpf_"):
        if not mp_context(53).isfinite(x):
            raise InvalidInputError(f"non-finite value {x!r}")
        man, exp = x.man_exp
        return gmpy2.mpq(int(man)) * gmpy2.mpq(2) ** int(exp)
    try:
        return gmpy2.mpq(Fraction(x))
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{x!r} is not representable as an exact fraction") from exc


def infer_mode(values) -> ScalarMode:
    """Guess a mode from the Python types of ``values``."""
    mode = FLOAT64
    for v in values:
        if hasattr(v, "_mpf_"):
            bits = getattr(getattr(v, "context", None), "prec", 128)
            return ScalarMode.extended(max(64, bits))
        if isinstance(v, (_MPQ, Fraction)):
            mode = RATIONAL
    return mode
