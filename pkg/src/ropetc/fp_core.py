"""Bit-exact p-bit floating point.

A p-bit float is a pair ``<m, e>`` of integers with value ``m * 2**e``,
where ``|m|`` lies in ``[2**(p-1), 2**p)`` or ``m == 0``, and ``e`` lies in
``[-2**p, 2**p)``.  Every operation holds its intermediate value exactly
and rounds once, to nearest with ties going to the even significand.

Binary operations use the offset division ``a ⊘ b`` (``a/b`` when that is
a multiple of 1/4, otherwise ``a/b + 1/8``) exactly where the operation
definitions place it, so results are faithful to those definitions rather
than to IEEE-754.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .depth_accountant import record
from .errors import DivisionByZero, ExponentOverflow, FormatError, PrecisionMismatch

Rational = Union[int, Fraction]


@dataclass(frozen=True, slots=True)
class FpNum:
    significand: int
    exponent: int
    precision: int

    def __post_init__(self):
        p, m, e = self.precision, self.significand, self.exponent
        if not isinstance(p, int) or p < 2:
            raise ValueError(f"precision must be an integer >= 2, got {p!r}")
        if m == 0:
            if e != 0:
                raise ValueError("zero must be stored canonically as <0, 0>")
        elif not (1 << (p - 1)) <= abs(m) < (1 << p):
            raise ValueError(f"significand {m} is not normalized for p={p}")
        if not -(1 << p) <= e < (1 << p):
            raise ValueError(f"exponent {e} outside [-2^{p}, 2^{p})")

    @classmethod
    def _raw(cls, m: int, e: int, p: int) -> "FpNum":
        obj = object.__new__(cls)
        object.__setattr__(obj, "significand", m)
        object.__setattr__(obj, "exponent", e)
        object.__setattr__(obj, "precision", p)
        return obj

    @property
    def is_zero(self) -> bool:
        return self.significand == 0

    def value(self) -> Fraction:
        m, e = self.significand, self.exponent
        return Fraction(m << e) if e >= 0 else Fraction(m, 1 << -e)

    def __float__(self) -> float:
        m, e = self.significand, self.exponent
        try:
            return float(m) * 2.0 ** e
        except OverflowError:
            return float("inf") if m > 0 else float("-inf")

    def __neg__(self) -> "FpNum":
        return FpNum._raw(-self.significand, self.exponent, self.precision)

    def __str__(self) -> str:
        return format_fp(self)


# -- construction helpers ----------------------------------------------------


def zero(p: int) -> FpNum:
    return FpNum(0, 0, p)


def one(p: int) -> FpNum:
    return FpNum(1 << (p - 1), -(p - 1), p)


def smallest_positive(p: int) -> FpNum:
    return FpNum(1 << (p - 1), -(1 << p), p)


def largest(p: int) -> FpNum:
    return FpNum((1 << p) - 1, (1 << p) - 1, p)


def _round(num: int, den: int, scale: int, p: int) -> FpNum:
    """Round ``num/den * 2**scale`` (``den > 0``) to the nearest p-bit float."""
    if num == 0:
        return FpNum._raw(0, 0, p)
    neg = num < 0
    a = -num if neg else num
    # t = floor(log2(a / den))
    t = a.bit_length() - den.bit_length()
    if t >= 0:
        if a < (den << t):
            t -= 1
    elif (a << -t) < den:
        t -= 1
    emax = 1 << p
    e = scale + t - (p - 1)
    if e < -emax:
        return _underflow(a, den, scale, t, p, neg)
    s = p - 1 - t
    if s >= 0:
        q, r = divmod(a << s, den)
        d = den
    else:
        d = den << -s
        q, r = divmod(a, d)
    twice = r << 1
    if twice > d or (twice == d and q & 1):
        q += 1
        if q == 1 << p:
            q >>= 1
            e += 1
    if e >= emax:
        raise ExponentOverflow(f"value needs exponent {e} >= 2^{p}")
    return FpNum._raw(-q if neg else q, e, p)


def _underflow(a: int, den: int, scale: int, t: int, p: int, neg: bool) -> FpNum:
    # |x| < smallest positive float; candidates are 0 and +-smallest, both
    # with even significand, so an exact tie goes to zero.
    half_exp = p - 2 - (1 << p)  # smallest / 2 == 2**half_exp
    if t + scale + 1 <= half_exp:
        return FpNum._raw(0, 0, p)
    k = scale - half_exp
    lhs, rhs = (a << k, den) if k >= 0 else (a, den << -k)
    if lhs > rhs:
        m = 1 << (p - 1)
        return FpNum._raw(-m if neg else m, -(1 << p), p)
    return FpNum._raw(0, 0, p)


def round_p(x: Union[Rational, FpNum], p: int) -> FpNum:
    """Nearest p-bit float to ``x``; exact ties pick the even significand."""
    if p < 2:
        raise ValueError("precision must be >= 2")
    if isinstance(x, FpNum):
        m, e = x.significand, x.exponent
        return _round(m, 1, e, p)
    x = Fraction(x)
    return _round(x.numerator, x.denominator, 0, p)


def from_int(n: int, p: int) -> FpNum:
    return _round(n, 1, 0, p)


# -- offset division ---------------------------------------------------------


def _ds(a: int, b: int) -> tuple[int, int]:
    """``a ⊘ b`` as a (numerator, positive denominator) pair."""
    if b < 0:
        a, b = -a, -b
    if (4 * a) % b == 0:
        return a, b
    return 8 * a + b, 8 * b


def ds(a: int, b: int) -> Fraction:
    if b == 0:
        raise DivisionByZero("offset division by zero")
    n, d = _ds(a, b)
    return Fraction(n, d)


# -- binary operations ---------------------------------------------------------


def _check(a: FpNum, b: FpNum) -> int:
    if a.precision != b.precision:
        raise PrecisionMismatch(f"precisions differ: {a.precision} vs {b.precision}")
    return a.precision


def _shift_for(k: int, p: int) -> int:
    # For k >= p + 3 a nonzero m/2**k sits strictly inside (-1/8, 1/8) and is
    # never a multiple of 1/4, so every larger k yields the same rounded
    # result and the same comparison; capping keeps integers small.
    return k if k < p + 3 else p + 3


def fp_add(a: FpNum, b: FpNum) -> FpNum:
    p = _check(a, b)
    record("add")
    # zero carries no exponent information; align it with the other operand
    if a.significand == 0:
        return b
    if b.significand == 0:
        return a
    m1, e1, m2, e2 = a.significand, a.exponent, b.significand, b.exponent
    if e1 >= e2:
        n, d = _ds(m2, 1 << _shift_for(e1 - e2, p))
        return _round(m1 * d + n, d, e1, p)
    n, d = _ds(m1, 1 << _shift_for(e2 - e1, p))
    return _round(n + m2 * d, d, e2, p)


def fp_sub(a: FpNum, b: FpNum) -> FpNum:
    return fp_add(a, -b)


def fp_mul(a: FpNum, b: FpNum) -> FpNum:
    p = _check(a, b)
    record("mul")
    return _round(a.significand * b.significand, 1, a.exponent + b.exponent, p)


def fp_div(a: FpNum, b: FpNum) -> FpNum:
    p = _check(a, b)
    record("div")
    if b.significand == 0:
        raise DivisionByZero("floating-point division by zero")
    n, d = _ds(a.significand << (p - 1), b.significand)
    return _round(n, d, a.exponent - b.exponent - p + 1, p)


def fp_leq(a: FpNum, b: FpNum) -> bool:
    p = _check(a, b)
    record("cmp")
    m1, e1, m2, e2 = a.significand, a.exponent, b.significand, b.exponent
    if m1 == 0 or m2 == 0:
        return m1 <= m2
    if e1 >= e2:
        n, d = _ds(m2, 1 << _shift_for(e1 - e2, p))
        return m1 * d <= n
    n, d = _ds(m1, 1 << _shift_for(e2 - e1, p))
    return n <= m2 * d


def fp_floor(a: FpNum) -> FpNum:
    record("floor")
    if a.exponent >= 0:
        return a
    return _round(a.significand >> -a.exponent, 1, 0, a.precision)


def fp_iter_add(xs: Sequence[FpNum]) -> FpNum:
    """Exact sum of all addends with a single final rounding."""
    xs = list(xs)
    if not xs:
        raise ValueError("iterated addition needs at least one addend")
    p = xs[0].precision
    for x in xs:
        _check(xs[0], x)
    record("iter_add")
    nz = [x for x in xs if x.significand]
    if not nz:
        return FpNum._raw(0, 0, p)
    base = min(x.exponent for x in nz)
    total = sum(x.significand << (x.exponent - base) for x in nz)
    return _round(total, 1, base, p)


def fp_iter_mul(xs: Sequence[FpNum]) -> FpNum:
    """Exact product of all factors with a single final rounding."""
    xs = list(xs)
    if not xs:
        raise ValueError("iterated multiplication needs at least one factor")
    p = xs[0].precision
    for x in xs:
        _check(xs[0], x)
    record("iter_mul")
    m, e = 1, 0
    for x in xs:
        m *= x.significand
        e += x.exponent
    return _round(m, 1, e if m else 0, p)


# -- text encoding -------------------------------------------------------------

_TEXT = re.compile(r"^\s*([+-]?\d+)\*2\^([+-]?\d+)@(\d+)\s*$")


def format_fp(x: FpNum) -> str:
    return f"{x.significand}*2^{x.exponent}@{x.precision}"


def parse_fp(text: str) -> FpNum:
    match = _TEXT.match(text)
    if not match:
        raise FormatError(f"not a float encoding: {text!r}")
    m, e, p = (int(g) for g in match.groups())
    try:
        return FpNum(m, e, p)
    except ValueError as exc:
        raise FormatError(f"{text!r}: {exc}") from None


def values(xs: Iterable[FpNum]) -> list[Fraction]:
    return [x.value() for x in xs]
