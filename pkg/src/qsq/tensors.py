"""Weight tensors, manifest I/O, and slicing into quantization vectors.

Tensors are dense 4-D float32 arrays in row-major (num_filters, channels,
height, width) order. A grouping mode cuts a tensor into vectors: across the
channel axis at each (filter, y, x) position, across the filter axis at each
(channel, y, x) position, or flat row-major runs of a fixed length. Every
slice carries the flat tensor positions it came from, so a layer can be
rebuilt exactly from its vectors.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MANIFEST_VERSION = 1

__all__ = [
    "LayerDims",
    "WeightTensor",
    "GroupingMode",
    "VectorSlice",
    "vector_origins",
    "extract_vectors",
    "reassemble",
    "load_model",
    "save_model",
]


@dataclass(frozen=True)
class LayerDims:
    """Shape of one layer: (num_filters, channels, height, width), all >= 1."""

    num_filters: int
    channels: int
    height: int
    width: int

    def __post_init__(self):
        for name in ("num_filters", "channels", "height", "width"):
            v = getattr(self, name)
            if int(v) != v or int(v) < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def count(self) -> int:
        return self.num_filters * self.channels * self.height * self.width

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.num_filters, self.channels, self.height, self.width)


@dataclass
class WeightTensor:
    """Named dense weight array; kind is "conv" or "dense"."""

    name: str
    dims: LayerDims
    values: np.ndarray
    kind: str = "conv"

    def __post_init__(self):
        if self.kind not in ("conv", "dense"):
            raise ValueError(f"kind must be 'conv' or 'dense', got {self.kind!r}")
        v = np.asarray(self.values, dtype=np.float32)
        if v.size != self.dims.count:
            raise ValueError(
                f"layer {self.name!r}: {v.size} values do not fill dims "
                f"{self.dims.as_tuple()} ({self.dims.count} expected)"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError(f"layer {self.name!r}: non-finite values")
        self.values = v.reshape(self.dims.as_tuple())


@dataclass(frozen=True)
class GroupingMode:
    """How a tensor is cut into vectors: "channel", "filter", or "flat" (with n)."""

    kind: str
    n: int | None = None

    def __post_init__(self):
        if self.kind not in ("channel", "filter", "flat"):
            raise ValueError(f"unknown grouping kind {self.kind!r}")
        if self.kind == "flat":
            if self.n is None or int(self.n) != self.n or int(self.n) < 1:
                raise ValueError("flat grouping requires n >= 1")
            object.__setattr__(self, "n", int(self.n))
        elif self.n is not None:
            raise ValueError(f"{self.kind} grouping takes no n")

    @classmethod
    def channel_wise(cls) -> "GroupingMode":
        return cls("channel")

    @classmethod
    def filter_wise(cls) -> "GroupingMode":
        return cls("filter")

    @classmethod
    def flat(cls, n: int) -> "GroupingMode":
        return cls("flat", n)

    def vector_length(self, dims: LayerDims) -> int:
        if self.kind == "channel":
            return dims.channels
        if self.kind == "filter":
            return dims.num_filters
        return int(self.n)


@dataclass
class VectorSlice:
    """One quantization vector plus the flat tensor positions it came from."""

    layer: str
    index: int
    elements: np.ndarray
    origin: np.ndarray


def vector_origins(dims: LayerDims, mode: GroupingMode) -> list[np.ndarray]:
    """Flat row-major index arrays of every vector, in slice order.

    Channel mode yields one vector per (filter, y, x) position, filter mode
    one per (channel, y, x) position, flat mode consecutive runs of n with a
    possibly shorter final run. Together the arrays partition range(count).
    """
    num, c, h, w = dims.as_tuple()
    if mode.kind == "flat":
        all_idx = np.arange(dims.count)
        n = int(mode.n)
        return [all_idx[i : i + n] for i in range(0, dims.count, n)]
    if mode.kind == "channel":
        starts = (
            np.arange(num)[:, None, None] * (c * h * w)
            + np.arange(h)[None, :, None] * w
            + np.arange(w)[None, None, :]
        ).reshape(-1)
        step = h * w
        length = c
    else:  # filter
        starts = (
            np.arange(c)[:, None, None] * (h * w)
            + np.arange(h)[None, :, None] * w
            + np.arange(w)[None, None, :]
        ).reshape(-1)
        step = c * h * w
        length = num
    offsets = np.arange(length) * step
    return [start + offsets for start in starts]


def extract_vectors(t: WeightTensor, mode: GroupingMode) -> list[VectorSlice]:
    """Cut a tensor into quantization vectors under the given grouping."""
    flat = t.values.reshape(-1)
    return [
        VectorSlice(t.name, i, flat[origin], origin)
        for i, origin in enumerate(vector_origins(t.dims, mode))
    ]


def reassemble(
    slices: list[VectorSlice],
    dims: LayerDims,
    *,
    name: str | None = None,
    kind: str = "conv",
) -> WeightTensor:
    """Rebuild a tensor from slices; their origins must tile it exactly."""
    total = dims.count
    if not slices:
        raise ValueError("no slices to reassemble")
    origins = [np.asarray(s.origin, dtype=np.int64) for s in slices]
    for s, o in zip(slices, origins):
        if o.size != np.asarray(s.elements).size:
            raise ValueError(f"slice {s.index} of {s.layer!r}: origin/element length mismatch")
    all_origins = np.concatenate(origins)
    if all_origins.size and (all_origins.min() < 0 or all_origins.max() >= total):
        raise ValueError("origin index outside the tensor")
    counts = np.bincount(all_origins, minlength=total)
    if np.any(counts > 1):
        raise ValueError("overlapping origins")
    if np.any(counts == 0):
        raise ValueError("missing origins: slices do not cover the tensor")
    out = np.empty(total, dtype=np.float32)
    for s, o in zip(slices, origins):
        out[o] = s.elements
    return WeightTensor(name or slices[0].layer, dims, out, kind)


def load_model(manifest_path) -> list[WeightTensor]:
    """Load all tensors declared in a weight manifest.

    The manifest is JSON: {"version": 1, "layers": [{name, kind, dims, blob}]}
    with dims = [num_filters, channels, height, width] and blob a relative
    path to raw little-endian float32 values in row-major order, no header.
    """
    path = Path(manifest_path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {doc.get('version')!r}")
    layers = doc.get("layers")
    if not isinstance(layers, list):
        raise ValueError("manifest has no layer list")
    tensors = []
    for entry in layers:
        try:
            name, kind, dims, blob = entry["name"], entry["kind"], entry["dims"], entry["blob"]
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed layer entry: {entry!r}") from e
        if not isinstance(dims, list) or len(dims) != 4:
            raise ValueError(f"layer {name!r}: dims must be a list of four counts")
        d = LayerDims(*dims)
        blob_path = path.parent / blob
        if not blob_path.is_file():
            raise FileNotFoundError(f"layer {name!r}: blob not found: {blob_path}")
        raw = np.fromfile(blob_path, dtype="<f4")
        if raw.size != d.count:
            raise ValueError(
                f"layer {name!r}: blob holds {raw.size} values, dims declare {d.count}"
            )
        tensors.append(WeightTensor(name, d, raw, kind))
    return tensors


def save_model(tensors: list[WeightTensor], manifest_path) -> Path:
    """Write tensors as a manifest plus one raw float32 blob per layer."""
    path = Path(manifest_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, t in enumerate(tensors):
        blob_name = f"{i:02d}_{re.sub(r'[^A-Za-z0-9._-]', '_', t.name)}.bin"
        t.values.astype("<f4").tofile(path.parent / blob_name)
        entries.append(
            {"name": t.name, "kind": t.kind, "dims": list(t.dims.as_tuple()), "blob": blob_name}
        )
    doc = {"version": MANIFEST_VERSION, "layers": entries}
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path
