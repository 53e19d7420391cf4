"""Exact rational parsing and JSON encoding helpers."""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from numbers import Rational
from typing import Any


class RationalError(ValueError):
    pass


def to_fraction(value: Any) -> Fraction:
    """Parse ``value`` into an exact Fraction.

    Accepts ints, Fractions, Decimals (as produced by ``json.loads`` with
    ``parse_float=Decimal``), decimal or ``p/q`` strings, and ``[num, den]``
    pairs. Python floats are converted exactly (dyadic value).
    """
    if isinstance(value, bool):
        raise RationalError(f"boolean is not a rational: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, Decimal):
        if not value.is_finite():
            raise RationalError(f"non-finite value {value}")
        return Fraction(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise RationalError(f"non-finite value {value}")
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise RationalError(f"cannot parse rational {value!r}") from exc
    if isinstance(value, (list, tuple)) and len(value) == 2:
        num, den = value
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (num, den)):
            raise RationalError(f"rational pair must hold two ints: {value!r}")
        if den == 0:
            raise RationalError(f"zero denominator in {value!r}")
        return Fraction(num, den)
    if isinstance(value, Rational):
        return Fraction(int(value.numerator), int(value.denominator))
    raise RationalError(f"cannot interpret {value!r} as a rational")


def encode(q: Fraction) -> str | list[int]:
    """JSON form of a rational: a string for integers, ``[num, den]`` otherwise."""
    if q.denominator == 1:
        return str(q.numerator)
    return [q.numerator, q.denominator]


def fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"
