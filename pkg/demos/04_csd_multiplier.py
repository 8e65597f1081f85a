"""Canonic signed digits and the quality scalable shift-add multiplier.

Recodes a couple of integers, then sweeps the number of kept partial
products to show the energy/accuracy trade, and histograms the non-zero
digit counts of Gaussian weights after fixed-point conversion.
"""

import numpy as np

from qsq import csd_multiply, from_csd, nonzero_histogram, to_csd, truncate_csd


def show(x):
    c = to_csd(x, 8)
    terms = [f"{'+' if d > 0 else '-'}2^{i}" for i in np.flatnonzero(c.digits) for d in [c.digits[i]]]
    print(f"{x:5d} = {' '.join(reversed(terms)):>18s}   non-zeros {c.nonzero_count()} (binary has {bin(abs(x)).count('1')})")


for x in (7, 12, 85, 170, 255, -118):
    show(x)

a, b = 237, 113
c = to_csd(a, 8)
print(f"\n{a} x {b} with truncated signed digits ({c.nonzero_count()} digits total):")
for k in range(c.nonzero_count() + 1):
    p = csd_multiply(a, b, k)
    kept = from_csd(truncate_csd(c, k))
    print(
        f"  k={k}: {p.partial_products} partial products, a~={kept:4d}, "
        f"product {p.value:6d}, error {abs(p.exact - p.value):5d}"
    )

rng = np.random.default_rng(5)
weights = rng.normal(scale=0.05, size=20000)
hist = nonzero_histogram(weights, frac_bits=12, width=16)
total = sum(hist.values())
print("\nnon-zero digit histogram of 20k Gaussian weights (16-bit, 12 fractional):")
for k, count in hist.items():
    print(f"  {k} non-zeros: {count:6d}  {'#' * int(60 * count / total)}")
cum = 0
for k, count in hist.items():
    cum += count
    if cum / total >= 0.95:
        print(f"95% of weights need at most {k} partial products")
        break
