"""Quantize a random conv layer, pack it, and decode it back.

Walks one tensor through the whole codec: channel-wise vectors, per-vector
scalar + power-of-two codes, LSB-first bit packing, and shift-based decode.
"""

import numpy as np

from qsq import (
    GroupingMode,
    LayerDims,
    QuantConfig,
    WeightTensor,
    decode_layer,
    encode_layer,
    extract_vectors,
    quantize_vector,
)

rng = np.random.default_rng(7)
dims = LayerDims(4, 8, 3, 3)
layer = WeightTensor("demo_conv", dims, rng.normal(scale=0.1, size=dims.count))

# One vector runs across the 8 channels at a fixed (filter, y, x) position.
cfg = QuantConfig(phi=4, delta=1.5, gamma=0.1, grouping=GroupingMode.channel_wise())
vec = extract_vectors(layer, cfg.grouping)[0]
q = quantize_vector(vec, cfg)
print("first vector      ", np.round(vec.elements, 4))
print("scalar alpha      ", round(q.alpha, 6))
print("codes             ", q.codes.tolist())
print("decoded           ", np.round(q.alpha * q.codes, 4))
print("squared error     ", round(q.l2_error, 6))

# The whole layer: 3 bits per weight plus one float32 scalar per vector.
encoded = encode_layer(layer, cfg)
print()
print("layer elements    ", dims.count)
print("vectors           ", encoded.vector_count, "of length", encoded.n)
print("packed code bytes ", len(encoded.packed_codes))
print("first code bytes  ", encoded.packed_codes[:8].hex())

decoded = decode_layer(encoded)
err = np.linalg.norm(decoded.values - layer.values) / np.linalg.norm(layer.values)
print("relative L2 error ", round(float(err), 4))

# Nearest-level assignment at the same scalars always reconstructs at least
# as well as the band rule.
nearest = decode_layer(encode_layer(layer, QuantConfig(phi=4, mode="nearest", grouping=cfg.grouping)))
err_n = np.linalg.norm(nearest.values - layer.values) / np.linalg.norm(layer.values)
print("nearest-level err ", round(float(err_n), 4))
