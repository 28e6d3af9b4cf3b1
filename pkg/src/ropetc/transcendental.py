"""exp, sqrt, sin and cos over p-bit floats with relative error <= 2**-p.

Inner arithmetic is exact (integers and dyadic rationals) or fixed point
with generous guard bits; each function rounds to p bits exactly once.
sin and cos follow the quadrant reduction ``k = floor(x / (pi/2))`` with a
reduced argument in ``[0, pi/4]`` and a truncated Taylor series of
``p + 4`` terms summed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .depth_accountant import record
from .errors import ArgumentTooLarge, ExponentOverflow, NegativeInput
from .fp_core import FpNum, _round, one, smallest_positive, zero


# -- constants in fixed point ----------------------------------------------


def _atan_inv(n: int, bits: int) -> int:
    """floor-ish of atan(1/n) * 2**bits, error below a few units."""
    x = (1 << bits) // n
    n2 = n * n
    total, k, sign = x, 1, -1
    while x:
        x //= n2
        term = x // (2 * k + 1)
        total += sign * term
        sign, k = -sign, k + 1
    return total


@lru_cache(maxsize=64)
def pi_fixed(bits: int) -> int:
    """``P`` with ``|pi * 2**bits - P| <= 1``."""
    guard = 20
    w = bits + guard
    pi = 16 * _atan_inv(5, w) - 4 * _atan_inv(239, w)
    return (pi + (1 << (guard - 1))) >> guard


@lru_cache(maxsize=64)
def ln2_fixed(bits: int) -> int:
    """``L`` with ``|ln(2) * 2**bits - L| <= 1`` via 2*atanh(1/3)."""
    guard = 20
    w = bits + guard
    x = (1 << w) // 3
    total, k = x, 1
    while x:
        x //= 9
        total += x // (2 * k + 1)
        k += 1
    return (2 * total + (1 << (guard - 1))) >> guard


def iroot(n: int, k: int) -> int:
    """floor(n ** (1/k)) for integers ``n >= 0``, ``k >= 1``."""
    if n < 0 or k < 1:
        raise ValueError("iroot needs n >= 0 and k >= 1")
    if n < 2 or k == 1:
        return n
    x = 1 << -(-n.bit_length() // k)  # an overestimate
    while True:
        y = ((k - 1) * x + n // x ** (k - 1)) // k
        if y >= x:
            break
        x = y
    while x ** k > n:
        x -= 1
    while (x + 1) ** k <= n:
        x += 1
    return x


# -- exp -----------------------------------------------------------------


def _exp_fixed(y: int, w: int) -> int:
    """exp(y / 2**w) * 2**w for |y| <= 2**w, truncated Taylor in fixed point."""
    total = term = 1 << w
    k = 1
    while term:
        term = (term * y >> w) // k
        total += term
        k += 1
    return total


def fp_exp(x: FpNum) -> FpNum:
    record("exp")
    return _exp(x)


def _exp(x: FpNum) -> FpNum:
    p = x.precision
    if x.is_zero:
        return one(p)
    m, e = x.significand, x.exponent
    emax = 1 << p
    # Coarse exact guards using 0.69 < ln 2 < 0.7: beyond them the result is
    # above the largest float or below half the smallest one.
    if m.bit_length() + e - 1 >= p + 2:
        xv = None
    else:
        xv = x.value()
    if m > 0 and (xv is None or xv >= Fraction(7, 10) * (emax + p + 1) + 1):
        raise ExponentOverflow(f"exp overflows p={p} floats")
    if m < 0 and (xv is None or xv <= -Fraction(7, 10) * (emax + 2) - 1):
        return smallest_positive(p)
    w = 2 * p + 64
    shift = e + w
    xf = m << shift if shift >= 0 else m >> -shift
    jbits = max(1, abs(int(xv)).bit_length() + 2)
    wl = w + jbits + 16
    ln2 = ln2_fixed(wl)
    # nearest integer to x / ln 2
    j = ((xf << (wl - w)) * 2 + ln2) // (2 * ln2)
    y = xf - ((j * ln2) >> (wl - w))
    big = _exp_fixed(y, w)
    out = _round(big, 1, j - w, p)
    if out.is_zero:
        return smallest_positive(p)
    return out


# -- sqrt ------------------------------------------------------------------


def fp_sqrt(x: FpNum) -> FpNum:
    record("sqrt")
    return _sqrt(x)


def _sqrt(x: FpNum) -> FpNum:
    p = x.precision
    m, e = x.significand, x.exponent
    if m < 0:
        raise NegativeInput("square root of a negative number")
    if m == 0:
        return zero(p)
    s = 2 * p + 4
    if (e - s) % 2:
        s += 1
    n = m << s
    r = math.isqrt(n)
    half = (e - s) // 2
    if r * r == n:
        return _round(r, 1, half, p)
    # sticky half bit: sqrt(n) lies strictly inside (r, r+1)
    return _round(2 * r + 1, 2, half, p)


# -- trigonometry ----------------------------------------------------------


@dataclass(frozen=True)
class RangeReduction:
    """Quadrant count, reduced argument and the branch taken for sin."""

    k: int
    r: FpNum
    use_cos: bool
    sign: int

    @property
    def cos_uses_cos(self) -> bool:
        return not self.use_cos

    @property
    def cos_sign(self) -> int:
        return 1 if self.k % 4 in (0, 3) else -1


def internal_precision(p: int) -> int:
    return 2 * p + 48


def _check_magnitude(x: FpNum) -> None:
    p = x.precision
    m, e = abs(x.significand), x.exponent
    if m == 0 or m.bit_length() + e <= 2 * p:
        return
    if m.bit_length() + e > 2 * p + 1 or m << e > 1 << (2 * p):
        raise ArgumentTooLarge(f"|x| exceeds 2^{2 * p} at p={p}")


def range_reduce(x: FpNum) -> RangeReduction:
    p = x.precision
    _check_magnitude(x)
    pint = internal_precision(p)
    if x.is_zero:
        return RangeReduction(0, FpNum(0, 0, pint), False, 1)
    m, e = x.significand, x.exponent
    bits = 3 * p + 64 + max(0, m.bit_length() + e)
    for _ in range(8):
        pi = pi_fixed(bits)
        # x / (pi/2) = m * 2**(e + bits + 1) / pi, with pi in [P-1, P+1]
        s = e + bits + 1
        num, extra = (m << s, 1) if s >= 0 else (m, 1 << -s)
        k_lo = num // ((pi + 1) * extra) if m >= 0 else num // ((pi - 1) * extra)
        k_hi = num // ((pi - 1) * extra) if m >= 0 else num // ((pi + 1) * extra)
        if k_lo == k_hi:
            break
        bits *= 2
    else:  # pragma: no cover - a p-bit rational is never this close to k*pi/2
        raise ArgumentTooLarge("could not separate x from a multiple of pi/2")
    k = k_lo
    # t = x - k*pi/2 as an integer over 2**big_s; x itself is exact there
    big_s = max(bits + 2, -e)
    x_num = m << (e + big_s)
    t_num = x_num - ((k * pi) << (big_s - bits - 1))
    quarter = pi << (big_s - bits - 2)  # pi/4 on the same scale
    if t_num <= quarter:
        r_num = t_num
        in_first = True
    else:
        r_num = (pi << (big_s - bits - 1)) - t_num
        in_first = False
    r_num = max(r_num, 0)
    r = _round(r_num, 1, -big_s, pint)
    odd = k % 2 == 1
    use_cos = odd != (not in_first)
    sign = 1 if k % 4 in (0, 1) else -1
    return RangeReduction(k, r, use_cos, sign)


def taylor_terms(p: int) -> int:
    return p + 4


def _series(r: FpNum, n_terms: int, odd: bool) -> tuple[int, int, int]:
    """Exact truncated series of sin (odd) or cos as ``num / den * 2**scale``."""
    a, b = r.significand, r.exponent
    if a == 0:
        return (0, 1, 0) if odd else (1, 1, 0)
    c = -b  # r = a / 2**c
    top = 2 * n_terms - 1 if odd else 2 * n_terms - 2
    fact_top = math.factorial(top)
    total = 0
    sign = 1
    for i in range(n_terms):
        power = 2 * i + 1 if odd else 2 * i
        coef = fact_top // math.factorial(power)
        total += sign * a ** power * coef << (c * (top - power))
        sign = -sign
    return total, fact_top, -c * top


def series_value(r: FpNum, n_terms: int, odd: bool) -> Fraction:
    """The truncated sin (``odd``) or cos series at ``r`` as an exact rational."""
    num, den, scale = _series(r, n_terms, odd)
    return Fraction(num, den) * Fraction(2) ** scale


def _evaluate(x: FpNum, want_sin: bool) -> FpNum:
    p = x.precision
    red = range_reduce(x)
    if want_sin:
        use_cos, sign = red.use_cos, red.sign
    else:
        use_cos, sign = red.cos_uses_cos, red.cos_sign
    num, den, scale = _series(red.r, taylor_terms(p), odd=not use_cos)
    return _round(sign * num, den, scale, p)


def fp_sin(x: FpNum) -> FpNum:
    record("sin")
    return _evaluate(x, True)


def fp_cos(x: FpNum) -> FpNum:
    record("cos")
    return _evaluate(x, False)
