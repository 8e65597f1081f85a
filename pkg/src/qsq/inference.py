"""Forward-only CNN evaluation with deterministic numpy arithmetic.

Activations are kept channels-first (C, H, W). Every layer accumulates in
float64 and rounds its output to float32, which pins one rounding
convention so repeated runs agree bit for bit. Convolution is
cross-correlation (no kernel flip), pooling uses floor output sizing, and
argmax ties resolve to the lowest class index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codec import decode_layer, encode_layer
from .datasets import Dataset
from .quantize import QuantConfig
from .tensors import GroupingMode, WeightTensor

NETWORK_VERSION = 1

__all__ = [
    "Conv",
    "ReLU",
    "MaxPool",
    "Flatten",
    "Dense",
    "Softmax",
    "Network",
    "load_network",
    "conv2d",
    "maxpool",
    "dense",
    "relu",
    "softmax",
    "softmax_argmax",
    "predict",
    "evaluate",
    "quantize_network",
    "evaluate_quantized",
]


@dataclass
class Conv:
    weights: WeightTensor  # (num_filters, channels, kh, kw)
    bias: np.ndarray | None = None
    stride: int = 1
    padding: str = "valid"


@dataclass
class ReLU:
    pass


@dataclass
class MaxPool:
    size: int
    stride: int | None = None  # defaults to size


@dataclass
class Flatten:
    pass


@dataclass
class Dense:
    weights: WeightTensor  # (out, in, 1, 1)
    bias: np.ndarray | None = None


@dataclass
class Softmax:
    pass


Layer = Union[Conv, ReLU, MaxPool, Flatten, Dense, Softmax]


def _pad_same(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    h, w = x.shape[2], x.shape[3]
    out_h = -(-h // stride)
    out_w = -(-w // stride)
    pad_h = max((out_h - 1) * stride + kh - h, 0)
    pad_w = max((out_w - 1) * stride + kw - w, 0)
    top, left = pad_h // 2, pad_w // 2
    return np.pad(x, ((0, 0), (0, 0), (top, pad_h - top), (left, pad_w - left)))


def conv2d(x, kernels, bias=None, stride: int = 1, padding: str = "valid") -> np.ndarray:
    """Batched cross-correlation: x (B, C, H, W) with kernels (F, C, kh, kw)."""
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    if x.ndim != 4 or kernels.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise ValueError(f"incompatible conv shapes {x.shape} and {kernels.shape}")
    if padding == "same":
        x = _pad_same(x, kernels.shape[2], kernels.shape[3], stride)
    elif padding != "valid":
        raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
    kh, kw = kernels.shape[2], kernels.shape[3]
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ValueError(f"input {x.shape} smaller than kernel {kernels.shape}")
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, kernels, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out.astype(np.float32)


def maxpool(x, size: int, stride: int | None = None) -> np.ndarray:
    """Window maximum over (B, C, H, W) with floor output sizing."""
    x = np.asarray(x)
    stride = size if stride is None else stride
    if x.ndim != 4 or x.shape[2] < size or x.shape[3] < size:
        raise ValueError(f"cannot pool {x.shape} with window {size}")
    windows = sliding_window_view(x, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    return windows.max(axis=(4, 5)).astype(np.float32)


def dense(x, weights, bias=None) -> np.ndarray:
    """Affine map: x (B, in) times weights (out, in), plus bias."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"incompatible dense shapes {x.shape} and {w.shape}")
    out = x @ w.T
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out.astype(np.float32)


def relu(x) -> np.ndarray:
    return np.maximum(x, 0)


def softmax(x) -> np.ndarray:
    """Row-wise stable softmax."""
    z = np.asarray(x, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def softmax_argmax(x) -> np.ndarray:
    """Predicted class per row; ties go to the lowest index."""
    return np.argmax(np.asarray(x), axis=-1)


@dataclass
class Network:
    """An ordered feed-forward stack; shapes are validated at construction.

    input_shape is one image as (height, width, channels).
    """

    input_shape: tuple[int, int, int]
    layers: list[Layer]

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if len(self.input_shape) != 3:
            raise ValueError("input_shape must be (height, width, channels)")
        self._check_shapes()

    def _check_shapes(self):
        h, w, c = self.input_shape
        shape: tuple | None = (c, h, w)  # channels-first while spatial
        for i, layer in enumerate(self.layers):
            where = f"layer {i} ({type(layer).__name__})"
            if isinstance(layer, Conv):
                if shape is None or len(shape) != 3:
                    raise ValueError(f"{where}: needs a spatial input")
                cc, hh, ww = shape
                d = layer.weights.dims
                if d.channels != cc:
                    raise ValueError(f"{where}: expects {d.channels} channels, has {cc}")
                if layer.padding == "valid":
                    if hh < d.height or ww < d.width:
                        raise ValueError(f"{where}: kernel larger than input {shape}")
                    hh = (hh - d.height) // layer.stride + 1
                    ww = (ww - d.width) // layer.stride + 1
                else:
                    hh = -(-hh // layer.stride)
                    ww = -(-ww // layer.stride)
                if layer.bias is not None and np.asarray(layer.bias).size != d.num_filters:
                    raise ValueError(f"{where}: bias length mismatch")
                shape = (d.num_filters, hh, ww)
            elif isinstance(layer, MaxPool):
                if shape is None or len(shape) != 3:
                    raise ValueError(f"{where}: needs a spatial input")
                cc, hh, ww = shape
                stride = layer.stride or layer.size
                if hh < layer.size or ww < layer.size:
                    raise ValueError(f"{where}: window larger than input {shape}")
                shape = (cc, (hh - layer.size) // stride + 1, (ww - layer.size) // stride + 1)
            elif isinstance(layer, Flatten):
                if shape is None or len(shape) != 3:
                    raise ValueError(f"{where}: needs a spatial input")
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dense):
                if shape is None or len(shape) != 1:
                    raise ValueError(f"{where}: needs a flat input")
                d = layer.weights.dims
                if d.channels != shape[0]:
                    raise ValueError(f"{where}: expects {d.channels} inputs, has {shape[0]}")
                if layer.bias is not None and np.asarray(layer.bias).size != d.num_filters:
                    raise ValueError(f"{where}: bias length mismatch")
                shape = (d.num_filters,)
            elif isinstance(layer, (ReLU, Softmax)):
                pass
            else:
                raise ValueError(f"{where}: unknown layer type")
        self.output_shape = shape


def _forward(net: Network, x: np.ndarray) -> np.ndarray:
    for layer in net.layers:
        if isinstance(layer, Conv):
            x = conv2d(x, layer.weights.values, layer.bias, layer.stride, layer.padding)
        elif isinstance(layer, ReLU):
            x = relu(x)
        elif isinstance(layer, MaxPool):
            x = maxpool(x, layer.size, layer.stride)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            w = layer.weights.values.reshape(layer.weights.dims.num_filters, -1)
            x = dense(x, w, layer.bias)
        elif isinstance(layer, Softmax):
            x = softmax(x)
    return x


def predict(net: Network, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Class indices for u8 images shaped (count, H, W, C)."""
    images = np.asarray(images)
    if images.ndim != 4:
        raise ValueError("images must be (count, height, width, channels)")
    out = []
    for start in range(0, len(images), batch_size):
        batch = images[start : start + batch_size]
        x = (batch.astype(np.float64) / 255.0).astype(np.float32)
        x = x.transpose(0, 3, 1, 2)
        out.append(softmax_argmax(_forward(net, x)))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def evaluate(net: Network, ds: Dataset, limit: int | None = None, batch_size: int = 256) -> float:
    """Fraction of correct predictions over the first `limit` samples."""
    n = len(ds) if limit is None else min(int(limit), len(ds))
    if n == 0:
        raise ValueError("empty dataset")
    preds = predict(net, ds.images[:n], batch_size)
    return float(np.count_nonzero(preds == ds.labels[:n]) / n)


def quantize_network(
    net: Network,
    cfg: QuantConfig,
    bit_width: int | None = None,
    include_dense: bool = False,
) -> Network:
    """Copy of the network whose conv weights went through the
    quantize -> encode -> decode pipeline (dense too with include_dense)."""
    new_layers: list[Layer] = []
    for layer in net.layers:
        quantize_this = isinstance(layer, Conv) or (include_dense and isinstance(layer, Dense))
        if quantize_this:
            t = layer.weights
            layer_cfg = cfg
            if isinstance(layer, Dense) and cfg.grouping.kind != "flat":
                layer_cfg = replace(cfg, grouping=GroupingMode.flat(t.dims.channels))
            decoded = decode_layer(encode_layer(t, layer_cfg, bit_width))
            new_weights = WeightTensor(t.name, t.dims, decoded.values, t.kind)
            new_layers.append(replace(layer, weights=new_weights))
        else:
            new_layers.append(layer)
    return Network(net.input_shape, new_layers)


def evaluate_quantized(
    net: Network,
    cfg: QuantConfig,
    ds: Dataset,
    limit: int | None = None,
    bit_width: int | None = None,
    include_dense: bool = False,
) -> tuple[float, float]:
    """(original accuracy, quantized accuracy) on the same samples."""
    original = evaluate(net, ds, limit)
    quantized = evaluate(quantize_network(net, cfg, bit_width, include_dense), ds, limit)
    return original, quantized


def load_network(path, tensors: Sequence[WeightTensor]) -> Network:
    """Build a network from a JSON description referencing tensors by name.

    Format: {"version": 1, "input_shape": [H, W, C], "layers": [...]} where
    each layer is one of
      {"op": "conv", "weights": name, "bias": name|null, "stride": int,
       "padding": "valid"|"same"},
      {"op": "relu"}, {"op": "maxpool", "size": int, "stride": int},
      {"op": "flatten"},
      {"op": "dense", "weights": name, "bias": name|null},
      {"op": "softmax"}.
    Bias names refer to manifest layers whose values are used flattened.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != NETWORK_VERSION:
        raise ValueError(f"unsupported network version {doc.get('version')!r}")
    by_name = {t.name: t for t in tensors}

    def tensor(name):
        if name not in by_name:
            raise ValueError(f"network references unknown tensor {name!r}")
        return by_name[name]

    def bias_of(spec):
        name = spec.get("bias")
        return None if name is None else tensor(name).values.reshape(-1)

    layers: list[Layer] = []
    for spec in doc.get("layers", []):
        op = spec.get("op")
        if op == "conv":
            layers.append(
                Conv(
                    weights=tensor(spec["weights"]),
                    bias=bias_of(spec),
                    stride=int(spec.get("stride", 1)),
                    padding=spec.get("padding", "valid"),
                )
            )
        elif op == "relu":
            layers.append(ReLU())
        elif op == "maxpool":
            layers.append(MaxPool(size=int(spec["size"]), stride=spec.get("stride")))
        elif op == "flatten":
            layers.append(Flatten())
        elif op == "dense":
            layers.append(Dense(weights=tensor(spec["weights"]), bias=bias_of(spec)))
        elif op == "softmax":
            layers.append(Softmax())
        else:
            raise ValueError(f"unknown layer op {op!r}")
    return Network(tuple(doc["input_shape"]), layers)
