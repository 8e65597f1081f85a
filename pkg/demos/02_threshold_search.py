"""Exhaustive threshold search over the (delta, gamma) grid.

Prints the total squared error at every grid point of the band rule, the
grid winner, and what the full configuration search picks once the
argmin-assignment candidate is included.
"""

import numpy as np

from qsq import (
    DEFAULT_DELTA_GRID,
    DEFAULT_GAMMA_GRID,
    GroupingMode,
    LayerDims,
    QuantConfig,
    WeightTensor,
    extract_vectors,
    quantize_slices,
    search_config,
    search_thresholds,
)

rng = np.random.default_rng(11)
dims = LayerDims(16, 12, 3, 3)
layer = WeightTensor("w", dims, rng.normal(scale=0.05, size=dims.count))
vectors = extract_vectors(layer, GroupingMode.channel_wise())

print("total squared error per grid point (band rule, phi=4)")
print("delta\\gamma " + "  ".join(f"{g:7.2f}" for g in DEFAULT_GAMMA_GRID))
for d in DEFAULT_DELTA_GRID:
    row = []
    for g in DEFAULT_GAMMA_GRID:
        qs = quantize_slices(vectors, QuantConfig(phi=4, delta=d, gamma=g))
        row.append(sum(q.l2_error for q in qs))
    print(f"{d:10.2f}  " + "  ".join(f"{v:7.4f}" for v in row))

delta, gamma, err = search_thresholds(vectors, 4)
print(f"\nband-rule winner: delta*={delta} gamma*={gamma} error={err:.4f}")

cfg, err = search_config(vectors, 4)
print(f"configuration search winner: mode={cfg.mode} (error {err:.4f})")
