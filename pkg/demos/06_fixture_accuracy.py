"""Accuracy impact of quantization on the committed trained fixture.

Loads the lenet_digits assets, evaluates the full-precision baseline, and
then the quantized network for each level bound phi with the searched
configuration. Takes around half a minute on the 10,000-image test split.
"""

from pathlib import Path

from qsq import (
    GroupingMode,
    evaluate,
    extract_vectors,
    load_mnist,
    load_model,
    load_network,
    quantize_network,
    search_config,
)

ASSETS = Path(__file__).resolve().parent.parent / "assets" / "lenet_digits"

model = load_model(ASSETS / "model.json")
net = load_network(ASSETS / "net.json", model)
ds = load_mnist(ASSETS / "test-images-idx3-ubyte.gz", ASSETS / "test-labels-idx1-ubyte.gz")
print(f"{len(ds)} test images, layers: {', '.join(t.name for t in model)}")

baseline = evaluate(net, ds)
print(f"baseline accuracy {baseline:.4%}\n")

vectors = []
for t in model:
    if t.kind == "conv":
        vectors.extend(extract_vectors(t, GroupingMode.channel_wise()))

for phi in (1, 2, 4):
    cfg, err = search_config(vectors, phi, grouping=GroupingMode.channel_wise())
    acc = evaluate(quantize_network(net, cfg), ds)
    print(
        f"phi={phi}: mode={cfg.mode}, delta*={cfg.delta:g}, gamma*={cfg.gamma:g}, "
        f"total error {err:.2f}, accuracy {acc:.4%} ({100 * (acc - baseline):+.2f} points)"
    )
