"""Fixed-precision currency arithmetic.

Bids, costs, and payments are stored as integer micro-currency units
(6 decimal places).  Integer arithmetic keeps threshold comparisons and
greedy tie-breaks bit-identical across platforms; exact ratios (densities,
offers) are handled with :class:`fractions.Fraction` and quantized back to
micro-units only when a payment is recorded.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from fractions import Fraction

MICRO = 10**6


def to_micro(amount: int | float | str | Decimal | Fraction) -> int:
    """Quantize a currency amount to integer micro-units (round half-even)."""
    if isinstance(amount, bool):
        raise TypeError("booleans are not currency amounts")
    if isinstance(amount, int):
        return amount * MICRO
    if isinstance(amount, Fraction):
        return _round_half_even(amount.numerator * MICRO, amount.denominator)
    if isinstance(amount, float):
        amount = Decimal(repr(amount))
    elif isinstance(amount, str):
        try:
            amount = Decimal(amount)
        except InvalidOperation as exc:
            raise ValueError(f"not a currency amount: {amount!r}") from exc
    scaled = amount * MICRO
    num, den = scaled.as_integer_ratio()
    return _round_half_even(num, den)


def _round_half_even(num: int, den: int) -> int:
    if den < 0:
        num, den = -num, -den
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q % 2):
        q += 1
    return q


def from_micro(micro: int) -> float:
    return micro / MICRO


def fmt_micro(micro: int) -> str:
    """Render micro-units as an exact 6-decimal string."""
    sign = "-" if micro < 0 else ""
    units, rem = divmod(abs(micro), MICRO)
    return f"{sign}{units}.{rem:06d}"


def floor_micro(value: Fraction) -> int:
    """Largest micro amount not exceeding the exact value."""
    return (value.numerator * MICRO) // value.denominator


def as_fraction(value: int | float | str | Decimal | Fraction) -> Fraction:
    """Exact rational from a config-style numeric value.

    Floats go through their shortest decimal representation so that a
    config value like 0.2 means exactly 1/5.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(Decimal(repr(value)))
    return Fraction(Decimal(str(value)))
