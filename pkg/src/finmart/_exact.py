"""Small helpers for exact rational arithmetic."""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational
from typing import Union

RationalLike = Union[int, Fraction, str, float]


def as_fraction(value: RationalLike) -> Fraction:
    """Parse ints, Fractions, "p/q" / decimal strings, and floats (by decimal repr)."""
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational")


def ceil_fraction(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def ceil_sqrt(n: int) -> int:
    """Smallest integer s with s*s >= n."""
    if n < 0:
        raise ValueError("negative argument")
    s = math.isqrt(n)
    return s if s * s == n else s + 1


def bit_size(x: int | Fraction) -> int:
    if isinstance(x, Fraction):
        return max(x.numerator.bit_length(), x.denominator.bit_length())
    return int(x).bit_length()


def int_text(n: int) -> str:
    """Decimal text of any int (str() refuses past 4300 digits on recent Pythons)."""
    n = int(n)
    if n < 0:
        return "-" + int_text(-n)
    if n.bit_length() <= 10_000:
        return str(n)
    half = int(n.bit_length() * 0.30103) // 2
    high, low = divmod(n, 10**half)
    return int_text(high) + int_text(low).rjust(half, "0")


def fraction_text(x: int | Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return int_text(x.numerator)
    return f"{int_text(x.numerator)}/{int_text(x.denominator)}"
