"""Write a model container, inspect its bytes, and read it back.

Shows the 16-byte header, the per-layer layout, and that re-serialization
is byte-identical.
"""

import numpy as np

from qsq import (
    GroupingMode,
    LayerDims,
    QuantConfig,
    WeightTensor,
    encode_model,
    read_container,
    write_container,
)
from qsq.codec import serialize_model

rng = np.random.default_rng(3)
model = [
    WeightTensor("conv1", LayerDims(2, 3, 3, 3), rng.normal(scale=0.2, size=54)),
    WeightTensor("fc", LayerDims(4, 6, 1, 1), rng.normal(scale=0.2, size=24), kind="dense"),
]
encoded = encode_model(model, QuantConfig(phi=4, grouping=GroupingMode.channel_wise()))

path = "/tmp/demo_model.qsq"
n = write_container(encoded, path)
print(f"wrote {n} bytes to {path}")

data = open(path, "rb").read()
print("header           ", data[:16].hex(" "))
print("magic            ", data[:4])
print()
for layer in encoded.layers:
    what = "passthrough f32" if layer.passthrough else f"{layer.bit_width}-bit codes"
    print(
        f"{layer.name}: dims {layer.dims.as_tuple()}, {what}, "
        f"{layer.vector_count} scalars, {len(layer.packed_codes)} code bytes"
    )

back = read_container(path)
print()
print("round trip byte-identical:", serialize_model(back) == data)

full_bits = sum(32 * t.dims.count for t in model if t.kind == "conv")
enc_bits = sum(
    e.bit_width * e.dims.count + 32 * e.vector_count for e in encoded.layers if not e.passthrough
)
print(f"conv payload: {full_bits} bits full precision -> {enc_bits} bits encoded")
