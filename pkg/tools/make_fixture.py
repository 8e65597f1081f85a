#!/usr/bin/env python3
"""Build the committed LeNet-class fixture under assets/lenet_digits/.

Renders a synthetic handwritten-digit-style dataset (DejaVu fonts, random
rotation/scale/offset/blur, MNIST-like 28x28 grayscale), trains a small
convnet on it with torch, exports the weights as a qsq manifest plus a
network description, writes the 10,000-image test split as IDX files, and
verifies the result with qsq's own inference engine.

Run from the repository root:

    python tools/make_fixture.py --out assets/lenet_digits

The whole run is seeded; composition of the committed artifact is recorded
in assets/lenet_digits/PROVENANCE.md.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qsq import datasets, tensors  # noqa: E402
from qsq.tensors import LayerDims, WeightTensor  # noqa: E402

TRAIN_PER_CLASS = 3000
TEST_PER_CLASS = 1000
EPOCHS = 4
BATCH = 128
LR = 1e-3


def font_paths():
    import matplotlib

    font_dir = Path(matplotlib.__file__).parent / "mpl-data" / "fonts" / "ttf"
    paths = sorted(p for p in font_dir.glob("DejaVu*.ttf"))
    if not paths:
        raise RuntimeError("no DejaVu fonts found")
    return paths


def render_digit(digit: int, rng: np.random.Generator, fonts) -> np.ndarray:
    while True:
        font = ImageFont.truetype(str(fonts[rng.integers(len(fonts))]), int(rng.integers(30, 44)))
        canvas = Image.new("L", (56, 56), 0)
        ImageDraw.Draw(canvas).text((28, 28), str(digit), fill=255, font=font, anchor="mm")
        canvas = canvas.rotate(float(rng.uniform(-14, 14)), resample=Image.BILINEAR, fillcolor=0)
        arr = np.asarray(canvas)
        ys, xs = np.nonzero(arr)
        if ys.size:  # a few font/size combos rasterise to nothing; redraw
            break
    crop = canvas.crop((xs.min(), ys.min(), xs.max() + 1, ys.max() + 1))
    w, h = crop.size
    scale = 20.0 / max(w, h)
    crop = crop.resize((max(1, round(w * scale)), max(1, round(h * scale))), Image.BILINEAR)
    img = Image.new("L", (28, 28), 0)
    dx, dy = int(rng.integers(-2, 3)), int(rng.integers(-2, 3))
    img.paste(crop, ((28 - crop.size[0]) // 2 + dx, (28 - crop.size[1]) // 2 + dy))
    if rng.random() < 0.5:
        img = img.filter(ImageFilter.GaussianBlur(float(rng.uniform(0.2, 0.7))))
    return (np.asarray(img, dtype=np.float32) * float(rng.uniform(0.75, 1.0))).astype(np.uint8)


def render_split(per_class: int, seed: int, fonts) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    images = np.zeros((per_class * 10, 28, 28), dtype=np.uint8)
    labels = np.zeros(per_class * 10, dtype=np.int64)
    i = 0
    for digit in range(10):
        for _ in range(per_class):
            images[i] = render_digit(digit, rng, fonts)
            labels[i] = digit
            i += 1
    order = rng.permutation(len(labels))
    return images[order], labels[order]


def build_torch_model():
    import torch.nn as nn

    return nn.Sequential(
        nn.Conv2d(1, 20, 5, bias=False),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(20, 50, 5, bias=False),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Flatten(),
        nn.Linear(800, 500, bias=False),
        nn.ReLU(),
        nn.Linear(500, 10, bias=False),
    )


def train(images, labels, test_images, test_labels):
    import torch

    torch.manual_seed(0)
    model = build_torch_model()
    opt = torch.optim.Adam(model.parameters(), lr=LR)
    loss_fn = torch.nn.CrossEntropyLoss()
    x = torch.from_numpy(images[:, None, :, :].astype(np.float32) / 255.0)
    y = torch.from_numpy(labels)
    xt = torch.from_numpy(test_images[:, None, :, :].astype(np.float32) / 255.0)
    yt = torch.from_numpy(test_labels)
    n = len(y)
    gen = torch.Generator().manual_seed(1)
    for epoch in range(EPOCHS):
        model.train()
        order = torch.randperm(n, generator=gen)
        total = 0.0
        for start in range(0, n, BATCH):
            idx = order[start : start + BATCH]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            loss.backward()
            opt.step()
            total += float(loss) * len(idx)
        model.eval()
        with torch.no_grad():
            correct = 0
            for start in range(0, len(yt), 512):
                pred = model(xt[start : start + 512]).argmax(1)
                correct += int((pred == yt[start : start + 512]).sum())
        print(f"epoch {epoch + 1}: loss {total / n:.4f}, test acc {correct / len(yt):.4%}")
    return model


def export(model, out_dir: Path) -> Path:
    import torch

    with torch.no_grad():
        conv1 = model[0].weight.numpy().astype(np.float32)
        conv2 = model[3].weight.numpy().astype(np.float32)
        fc1 = model[7].weight.numpy().astype(np.float32)
        fc2 = model[9].weight.numpy().astype(np.float32)
    layers = [
        WeightTensor("conv1", LayerDims(20, 1, 5, 5), conv1),
        WeightTensor("conv2", LayerDims(50, 20, 5, 5), conv2),
        WeightTensor("fc1", LayerDims(500, 800, 1, 1), fc1, "dense"),
        WeightTensor("fc2", LayerDims(10, 500, 1, 1), fc2, "dense"),
    ]
    manifest = tensors.save_model(layers, out_dir / "model.json")
    net = {
        "version": 1,
        "input_shape": [28, 28, 1],
        "layers": [
            {"op": "conv", "weights": "conv1", "bias": None},
            {"op": "relu"},
            {"op": "maxpool", "size": 2, "stride": 2},
            {"op": "conv", "weights": "conv2", "bias": None},
            {"op": "relu"},
            {"op": "maxpool", "size": 2, "stride": 2},
            {"op": "flatten"},
            {"op": "dense", "weights": "fc1", "bias": None},
            {"op": "relu"},
            {"op": "dense", "weights": "fc2", "bias": None},
            {"op": "softmax"},
        ],
    }
    import json

    (out_dir / "net.json").write_text(json.dumps(net, indent=2) + "\n")
    return manifest


def verify(manifest: Path, out_dir: Path):
    from qsq import inference
    from qsq.quantize import search_config
    from qsq.tensors import GroupingMode, extract_vectors, load_model

    model = load_model(manifest)
    net = inference.load_network(out_dir / "net.json", model)
    ds = datasets.load_mnist(out_dir / "test-images-idx3-ubyte.gz", out_dir / "test-labels-idx1-ubyte.gz")
    t0 = time.time()
    baseline = inference.evaluate(net, ds)
    print(f"engine baseline accuracy {baseline:.4%} ({time.time() - t0:.1f}s)")
    conv_vectors = []
    for t in model:
        if t.kind == "conv":
            conv_vectors.extend(extract_vectors(t, GroupingMode.channel_wise()))
    for phi in (1, 2, 4):
        cfg, err = search_config(conv_vectors, phi, grouping=GroupingMode.channel_wise())
        quantized = inference.quantize_network(net, cfg)
        acc = inference.evaluate(quantized, ds)
        print(
            f"phi={phi}: mode={cfg.mode} delta*={cfg.delta:g} gamma*={cfg.gamma:g} error={err:.4g} "
            f"quantized accuracy {acc:.4%} (drop {100 * (baseline - acc):+.2f} points)"
        )
    return baseline


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="assets/lenet_digits", help="asset directory to write")
    parser.add_argument("--skip-train", action="store_true", help="only verify an existing fixture")
    args = parser.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if not args.skip_train:
        fonts = font_paths()
        t0 = time.time()
        train_images, train_labels = render_split(TRAIN_PER_CLASS, seed=1, fonts=fonts)
        test_images, test_labels = render_split(TEST_PER_CLASS, seed=2, fonts=fonts)
        print(f"rendered {len(train_labels)} train / {len(test_labels)} test images in {time.time() - t0:.0f}s")
        datasets.write_idx_images(test_images, out_dir / "test-images-idx3-ubyte.gz")
        datasets.write_idx_labels(test_labels, out_dir / "test-labels-idx1-ubyte.gz")
        model = train(train_images, train_labels, test_images, test_labels)
        export(model, out_dir)
    verify(out_dir / "model.json", out_dir)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
