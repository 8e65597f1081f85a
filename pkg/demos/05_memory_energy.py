"""Bit counts, memory savings, and DRAM-transfer energy for encoded models.

Reproduces the accounting on a 50x20x5x5 layer under both scalar policies
and prints the (vector length, code width) design space.
"""

import numpy as np

from qsq import (
    EncodingParams,
    LayerDims,
    QuantConfig,
    WeightTensor,
    dram_energy,
    encode_model,
    model_report,
    nbits_encoded,
    nbits_full,
    sweep,
)
from qsq.metrics import sweep_csv_text
from qsq.tensors import GroupingMode

dims = LayerDims(50, 20, 5, 5)
print(f"layer {dims.as_tuple()}: {dims.count} weights")
print("full precision bits      ", nbits_full(dims, 32))
print("3-bit, per-position policy", nbits_encoded(dims, EncodingParams(32, 3, "paper"), 20))
print("3-bit, per-vector policy  ", nbits_encoded(dims, EncodingParams(32, 3, "vector"), 20))
print("energy per 32 bits        ", dram_energy(32), "pJ")

rng = np.random.default_rng(9)
model = [WeightTensor("conv", dims, rng.normal(scale=0.05, size=dims.count))]
encoded = encode_model(model, QuantConfig(phi=4, grouping=GroupingMode.channel_wise()))
report = model_report(model, encoded, EncodingParams(32, 3, "vector"))
print(
    f"\nencoded model: {report.bits_encoded} bits "
    f"({report.savings_fraction:.2%} smaller), "
    f"DRAM {report.dram_pj_full / 1e6:.2f} uJ -> {report.dram_pj_encoded / 1e6:.2f} uJ, "
    f"zeros {report.zero_fraction_before:.2%} -> {report.zero_fraction_after:.2%}"
)

print("\ndesign space (savings and energy only; add a dataset for accuracy):")
print(sweep_csv_text(sweep(model, [2, 4, 8, 16, 32, 64], [2, 3])))
