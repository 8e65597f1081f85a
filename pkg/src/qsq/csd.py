"""Canonic signed digit recoding and quality scalable shift-add products.

An integer is recoded into digits over {-1, 0, +1}, where index i carries
weight 2^i and no two adjacent digits are both non-zero. That form is unique
and has the minimum number of non-zero digits among all signed-digit
encodings of the value, so each non-zero digit costs exactly one partial
product in a shift-add multiplier. Dropping the least significant non-zero
digits trades accuracy for fewer partial products.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CsdNumber",
    "to_csd",
    "from_csd",
    "truncate_csd",
    "ApproxProduct",
    "csd_multiply",
    "nonzero_histogram",
]


@dataclass(eq=False)
class CsdNumber:
    """Signed digits of one integer; digits has width + 1 positions."""

    digits: np.ndarray
    width: int

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.digits))


def to_csd(x: int, width: int) -> CsdNumber:
    """Canonic signed-digit form of x over positions 0..width.

    Raises OverflowError when x needs a digit above position `width`;
    |x| <= 2**width always fits.
    """
    if width < 0:
        raise ValueError("width must be >= 0")
    x = int(x)
    digits = np.zeros(width + 1, dtype=np.int8)
    v = x
    i = 0
    while v:
        if v & 1:
            d = 2 - (v & 3)  # choose the sign that zeroes the next position
            if i > width:
                raise OverflowError(f"{x} needs more than {width + 1} signed digit positions")
            digits[i] = d
            v -= d
        v >>= 1
        i += 1
    return CsdNumber(digits, width)


def from_csd(c: CsdNumber) -> int:
    """Value of a signed-digit array: sum of digit_i * 2^i."""
    return sum(int(d) << i for i, d in enumerate(c.digits) if d)


def truncate_csd(c: CsdNumber, k: int) -> CsdNumber:
    """Keep the k most significant non-zero digits, zeroing the rest.

    Dropping low digits cannot create an adjacent pair, so the result is
    still canonic. k at or above the non-zero count is the identity.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    nz = np.flatnonzero(c.digits)
    out = c.digits.copy()
    if k < nz.size:
        out[nz[: nz.size - k]] = 0
    return CsdNumber(out, c.width)


@dataclass(frozen=True)
class ApproxProduct:
    """Result of a truncated shift-add multiply plus its exact reference."""

    value: int
    exact: int
    partial_products: int
    kept_digits: int


def csd_multiply(a: int, b: int, k: int, width: int = 8) -> ApproxProduct:
    """Multiply a*b using at most k partial products.

    a is recoded into canonic signed digits, truncated to its k most
    significant non-zero digits, and every kept digit contributes one
    shifted copy of +-b. With k at or above the non-zero count the product
    is exact.
    """
    a = int(a)
    b = int(b)
    limit = 1 << width
    if abs(a) > limit or abs(b) > limit:
        raise OverflowError(f"operands must fit {width} bits in magnitude")
    truncated = truncate_csd(to_csd(a, width), k)
    acc = 0
    used = 0
    for i in np.flatnonzero(truncated.digits):
        partial = b << int(i)
        acc += partial if truncated.digits[i] > 0 else -partial
        used += 1
    exact = a * b
    bound = 1 << (2 * width + 1)
    if abs(acc) > bound or abs(exact) > bound:
        raise OverflowError("product exceeds the double-width accumulator")
    return ApproxProduct(value=acc, exact=exact, partial_products=used, kept_digits=k)


def _nonzero_digit_count(x: int) -> int:
    # Same recoding as to_csd, kept loop-only so histograms over large
    # models stay cheap.
    v = abs(int(x))
    n = 0
    while v:
        if v & 1:
            n += 1
            v -= 2 - (v & 3)
        v >>= 1
    return n


def nonzero_histogram(values, frac_bits: int = 12, width: int = 16) -> dict[int, int]:
    """Histogram of signed-digit non-zero counts over fixed-point values.

    Each real value is converted to a width-bit two's-complement fixed-point
    integer with frac_bits fractional bits (round to nearest, saturating),
    then keyed by the non-zero digit count of its canonic form.
    """
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(vals)):
        raise ValueError("values must be finite")
    if width < 1 or frac_bits < 0:
        raise ValueError("width must be >= 1 and frac_bits >= 0")
    lo = -(1 << (width - 1))
    hi = (1 << (width - 1)) - 1
    q = np.clip(np.rint(vals * (1 << frac_bits)), lo, hi).astype(np.int64)
    counts = Counter(_nonzero_digit_count(v) for v in q)
    return dict(sorted(counts.items()))
