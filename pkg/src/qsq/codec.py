"""Bit-level code words, packed layer streams, and the QSQ1 container.

Level codes map to 3-bit words as 000:0, 001:+1, 010:+2, 011:+4, 100:-1,
101:-2, 110:-4; 111 is reserved and never written. The 2-bit table is 00:0,
01:+1, 10:-1 with 11 reserved. Words are packed LSB-first within bytes in
element order and the final byte is zero padded.

Decoding applies the scalar by magnitude: the +1 word uses it as is, +2
doubles it once, +4 doubles it twice, and negative words negate the result.
The zero word decodes to exactly 0.0 for any scalar, which is what lets a
consumer skip those multiplies entirely.

Container layout (little-endian): a 16-byte header "QSQ1", version u16,
flags u16, layer_count u32, reserved u32; then per layer name_len u16 +
UTF-8 name, kind u8 (0 coded conv, 1 dense passthrough), dims 4xu32,
grouping u8 (0 channel, 1 filter, 2 flat), n u32, phi u8, bit_width u8,
vector_count u32, vector_count x f32 scalars, code_bytes_len u32, packed
codes. Passthrough layers reuse the same field sequence with the raw f32
values in the scalar array and an empty code section.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .quantize import QuantConfig, level_set, quantize_slices
from .tensors import GroupingMode, LayerDims, WeightTensor, extract_vectors, vector_origins

MAGIC = b"QSQ1"
CONTAINER_VERSION = 1

RESERVED_WORD = {2: 0b11, 3: 0b111}
_LEVEL_OF_WORD = {
    3: {0b000: 0, 0b001: 1, 0b010: 2, 0b011: 4, 0b100: -1, 0b101: -2, 0b110: -4},
    2: {0b00: 0, 0b01: 1, 0b10: -1},
}
_WORD_OF_LEVEL = {bw: {lvl: word for word, lvl in table.items()} for bw, table in _LEVEL_OF_WORD.items()}

_KIND_CODE = {"conv": 0, "dense": 1}
_KIND_NAME = {code: kind for kind, code in _KIND_CODE.items()}
_GROUPING_CODE = {"channel": 0, "filter": 1, "flat": 2}
_GROUPING_NAME = {code: kind for kind, code in _GROUPING_CODE.items()}

__all__ = [
    "MAGIC",
    "CONTAINER_VERSION",
    "ContainerError",
    "encode_codes",
    "decode_codes",
    "decode_code",
    "decode_code_fixed",
    "EncodedLayer",
    "EncodedModel",
    "encode_layer",
    "passthrough_layer",
    "encode_model",
    "decode_layer",
    "decode_model",
    "serialize_model",
    "deserialize_model",
    "write_container",
    "read_container",
]


class ContainerError(ValueError):
    """Malformed, truncated, or corrupt container data."""


def word_of_level(level: int, bit_width: int) -> int:
    """Code word for an integer level; raises if the width cannot express it."""
    try:
        return _WORD_OF_LEVEL[bit_width][level]
    except KeyError:
        raise ValueError(f"level {level!r} not encodable in {bit_width} bits") from None


def level_of_word(word: int, bit_width: int = 3) -> int:
    """Integer level of a code word; the all-ones word is reserved."""
    if bit_width not in _LEVEL_OF_WORD:
        raise ValueError(f"bit width must be 2 or 3, got {bit_width!r}")
    if word == RESERVED_WORD[bit_width]:
        raise ValueError(f"reserved code word {word:#b}")
    table = _LEVEL_OF_WORD[bit_width]
    if word not in table:
        raise ValueError(f"code word {word!r} out of range for {bit_width} bits")
    return table[word]


def encode_codes(codes, bit_width: int) -> bytes:
    """Pack integer levels into an LSB-first bitstream, zero padded."""
    if bit_width not in _LEVEL_OF_WORD:
        raise ValueError(f"bit width must be 2 or 3, got {bit_width!r}")
    codes = np.asarray(codes, dtype=np.int64).reshape(-1)
    lut = np.full(9, -1, dtype=np.int64)
    for lvl, word in _WORD_OF_LEVEL[bit_width].items():
        lut[lvl + 4] = word
    shifted = codes + 4
    if codes.size and (shifted.min() < 0 or shifted.max() > 8):
        bad = codes[(shifted < 0) | (shifted > 8)][0]
        raise ValueError(f"code {bad} not encodable in {bit_width} bits")
    words = lut[shifted]
    if np.any(words < 0):
        bad = codes[words < 0][0]
        raise ValueError(f"code {bad} not encodable in {bit_width} bits")
    bits = ((words[:, None] >> np.arange(bit_width)) & 1).astype(np.uint8).reshape(-1)
    return np.packbits(bits, bitorder="little").tobytes()


def decode_codes(data: bytes, count: int, bit_width: int) -> np.ndarray:
    """Unpack `count` integer levels from an LSB-first bitstream.

    Rejects reserved words and any nonzero padding bit.
    """
    if bit_width not in _LEVEL_OF_WORD:
        raise ValueError(f"bit width must be 2 or 3, got {bit_width!r}")
    needed_bits = count * bit_width
    if len(data) * 8 < needed_bits:
        raise ContainerError("truncated code stream")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if bits[needed_bits:].any():
        raise ContainerError("nonzero padding bits in code stream")
    words = (bits[:needed_bits].reshape(count, bit_width).astype(np.int64) << np.arange(bit_width)).sum(axis=1)
    lut = np.full(1 << bit_width, 99, dtype=np.int64)
    for word, lvl in _LEVEL_OF_WORD[bit_width].items():
        lut[word] = lvl
    levels = lut[words]
    if np.any(levels == 99):
        raise ContainerError(f"reserved code word {RESERVED_WORD[bit_width]:#b} in stream")
    return levels.astype(np.int8)


def decode_code(word: int, alpha: float) -> float:
    """Decode one 3-bit word against a scalar by doubling and negating."""
    level = level_of_word(word, 3)
    if level == 0:
        return 0.0
    mag = float(alpha)
    for _ in range(abs(level).bit_length() - 1):
        mag += mag
    return -mag if level < 0 else mag


def decode_code_fixed(word: int, alpha_q: int, width: int = 32) -> int:
    """Fixed-point twin of decode_code.

    The scalar is an integer in any Q format; shifting happens on the raw
    integer and negation is a genuine two's-complement negate within
    `width` bits. Raises OverflowError when the shifted value no longer
    fits the signed width, so whenever this returns it agrees exactly with
    the real-valued path at the same Q scale.
    """
    level = level_of_word(word, 3)
    if level == 0:
        return 0
    lo = -(1 << (width - 1))
    hi = (1 << (width - 1)) - 1
    if not lo <= alpha_q <= hi:
        raise OverflowError(f"scalar {alpha_q} does not fit signed {width}-bit")
    raw = alpha_q << (abs(level).bit_length() - 1)
    if not lo <= raw <= hi:
        raise OverflowError(f"shifted scalar {raw} does not fit signed {width}-bit")
    if level > 0:
        return raw
    if raw == lo:
        raise OverflowError(f"negating {raw} does not fit signed {width}-bit")
    mask = (1 << width) - 1
    neg = ((raw ^ mask) + 1) & mask
    return neg - (1 << width) if neg >> (width - 1) else neg


@dataclass
class EncodedLayer:
    """One container layer: per-vector scalars plus a packed code stream,
    or the raw values when the layer is passthrough."""

    name: str
    dims: LayerDims
    kind: str
    grouping: GroupingMode | None
    n: int
    phi: int
    bit_width: int
    scalars: np.ndarray
    packed_codes: bytes

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"kind must be 'conv' or 'dense', got {self.kind!r}")
        self.scalars = np.asarray(self.scalars, dtype="<f4")
        if self.passthrough:
            if self.scalars.size != self.dims.count:
                raise ValueError(f"layer {self.name!r}: passthrough value count mismatch")
            if self.packed_codes:
                raise ValueError(f"layer {self.name!r}: passthrough layer with code bytes")
        else:
            if self.grouping is None:
                raise ValueError(f"layer {self.name!r}: coded layer needs a grouping")
            if self.phi not in (1, 2, 4):
                raise ValueError(f"layer {self.name!r}: bad phi {self.phi!r}")
            if self.bit_width not in (2, 3):
                raise ValueError(f"layer {self.name!r}: bad bit width {self.bit_width!r}")

    @property
    def passthrough(self) -> bool:
        return self.kind == "dense"

    @property
    def vector_count(self) -> int:
        return int(self.scalars.size)


@dataclass
class EncodedModel:
    """Ordered encoded layers with unique names; the transmitted artifact."""

    layers: list[EncodedLayer]
    version: int = CONTAINER_VERSION

    def __post_init__(self):
        names = [e.name for e in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate layer names in model")


def encode_layer(t: WeightTensor, cfg: QuantConfig, bit_width: int | None = None) -> EncodedLayer:
    """Quantize one tensor and pack its codes into a contiguous stream.

    The default bit width is the one the level set needs; a wider explicit
    width is allowed, a narrower one fails when a code does not fit.
    """
    bw = level_set(cfg.phi).theta_bits if bit_width is None else bit_width
    slices = extract_vectors(t, cfg.grouping)
    quantized = quantize_slices(slices, cfg)
    if quantized:
        codes = np.concatenate([q.codes for q in quantized])
    else:
        codes = np.zeros(0, dtype=np.int8)
    packed = encode_codes(codes, bw)
    scalars = np.asarray([q.alpha for q in quantized], dtype="<f4")
    return EncodedLayer(
        name=t.name,
        dims=t.dims,
        kind="conv",
        grouping=cfg.grouping,
        n=cfg.grouping.vector_length(t.dims),
        phi=cfg.phi,
        bit_width=bw,
        scalars=scalars,
        packed_codes=packed,
    )


def passthrough_layer(t: WeightTensor) -> EncodedLayer:
    """Store a tensor at full precision (no codes, raw f32 values)."""
    return EncodedLayer(
        name=t.name,
        dims=t.dims,
        kind="dense",
        grouping=None,
        n=0,
        phi=0,
        bit_width=0,
        scalars=t.values.reshape(-1),
        packed_codes=b"",
    )


def encode_model(
    tensors: list[WeightTensor],
    cfg: QuantConfig,
    bit_width: int | None = None,
    include_dense: bool = False,
) -> EncodedModel:
    """Encode conv layers, passing dense layers through untouched.

    With include_dense, dense layers are quantized too; a channel or filter
    grouping falls back to flat runs of the layer's fan-in for them.
    """
    layers = []
    for t in tensors:
        if t.kind == "conv" or include_dense:
            layer_cfg = cfg
            if t.kind == "dense" and cfg.grouping.kind != "flat":
                layer_cfg = replace(cfg, grouping=GroupingMode.flat(t.dims.channels))
            layers.append(encode_layer(t, layer_cfg, bit_width))
        else:
            layers.append(passthrough_layer(t))
    return EncodedModel(layers)


def _decode_values(levels: np.ndarray, scalars: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """alpha * level for every element, computed as exponent shifts of alpha."""
    alphas = np.repeat(scalars.astype(np.float32), lengths)
    shifts = np.zeros(levels.shape, dtype=np.int64)
    mags = np.abs(levels)
    shifts[mags == 2] = 1
    shifts[mags == 4] = 2
    return (np.ldexp(alphas, shifts) * np.sign(levels)).astype(np.float32)


def decode_layer(e: EncodedLayer) -> WeightTensor:
    """Reconstruct the approximate tensor of one encoded layer."""
    if e.passthrough:
        return WeightTensor(e.name, e.dims, np.asarray(e.scalars, dtype=np.float32), "dense")
    origins = vector_origins(e.dims, e.grouping)
    if e.vector_count != len(origins):
        raise ValueError(
            f"layer {e.name!r}: {e.vector_count} scalars for {len(origins)} vectors"
        )
    levels = decode_codes(e.packed_codes, e.dims.count, e.bit_width)
    lengths = np.fromiter((o.size for o in origins), dtype=np.int64, count=len(origins))
    values = _decode_values(levels, e.scalars, lengths)
    flat = np.empty(e.dims.count, dtype=np.float32)
    flat[np.concatenate(origins)] = values
    return WeightTensor(e.name, e.dims, flat, "conv")


def decode_model(m: EncodedModel) -> list[WeightTensor]:
    """Decode every layer of an encoded model."""
    return [decode_layer(e) for e in m.layers]


def serialize_model(m: EncodedModel) -> bytes:
    """Deterministic byte encoding of an encoded model."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<HHII", CONTAINER_VERSION, 0, len(m.layers), 0)
    for e in m.layers:
        name_bytes = e.name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ValueError(f"layer name too long: {e.name!r}")
        buf += struct.pack("<H", len(name_bytes))
        buf += name_bytes
        grouping_code = 2 if e.grouping is None else _GROUPING_CODE[e.grouping.kind]
        buf += struct.pack(
            "<BIIIIBIBBI",
            _KIND_CODE[e.kind],
            *e.dims.as_tuple(),
            grouping_code,
            e.n,
            e.phi,
            e.bit_width,
            e.vector_count,
        )
        buf += np.asarray(e.scalars, dtype="<f4").tobytes()
        buf += struct.pack("<I", len(e.packed_codes))
        buf += e.packed_codes
    return bytes(buf)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError("truncated stream")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


def deserialize_model(data: bytes) -> EncodedModel:
    """Parse container bytes; any structural defect raises ContainerError."""
    cur = _Cursor(data)
    if cur.take(4) != MAGIC:
        raise ContainerError("bad magic")
    version, flags, layer_count, reserved = cur.unpack("<HHII")
    if version != CONTAINER_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if flags != 0 or reserved != 0:
        raise ContainerError("nonzero reserved header fields")
    layers = []
    for _ in range(layer_count):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        kind_code, nf, ch, hh, ww, grouping_code, n, phi, bw, vcount = cur.unpack("<BIIIIBIBBI")
        if kind_code not in _KIND_NAME:
            raise ContainerError(f"layer {name!r}: unknown kind {kind_code}")
        kind = _KIND_NAME[kind_code]
        try:
            dims = LayerDims(nf, ch, hh, ww)
        except ValueError as err:
            raise ContainerError(f"layer {name!r}: {err}") from None
        scalars = np.frombuffer(cur.take(vcount * 4), dtype="<f4").copy()
        (code_len,) = cur.unpack("<I")
        packed = cur.take(code_len)

        if kind == "dense":
            if (grouping_code, n, phi, bw) != (2, 0, 0, 0) or code_len != 0:
                raise ContainerError(f"layer {name!r}: malformed passthrough fields")
            if vcount != dims.count:
                raise ContainerError(f"layer {name!r}: passthrough value count mismatch")
            grouping = None
        else:
            if grouping_code not in _GROUPING_NAME:
                raise ContainerError(f"layer {name!r}: unknown grouping {grouping_code}")
            gkind = _GROUPING_NAME[grouping_code]
            try:
                grouping = GroupingMode.flat(n) if gkind == "flat" else GroupingMode(gkind)
            except ValueError as err:
                raise ContainerError(f"layer {name!r}: {err}") from None
            if n != grouping.vector_length(dims):
                raise ContainerError(f"layer {name!r}: stored n disagrees with grouping")
            if phi not in (1, 2, 4) or bw not in (2, 3):
                raise ContainerError(f"layer {name!r}: bad phi/bit width")
            expected_len = -(-(bw * dims.count) // 8)
            if code_len != expected_len:
                raise ContainerError(f"layer {name!r}: code length mismatch")
            pad_bits = code_len * 8 - bw * dims.count
            if pad_bits and packed and (packed[-1] >> (8 - pad_bits)):
                raise ContainerError(f"layer {name!r}: nonzero padding bits")
        try:
            layers.append(EncodedLayer(name, dims, kind, grouping, n, phi, bw, scalars, packed))
        except ValueError as err:
            raise ContainerError(f"layer {name!r}: {err}") from None
    if cur.remaining:
        raise ContainerError("trailing bytes after last layer")
    return EncodedModel(layers)


def write_container(m: EncodedModel, path) -> int:
    """Serialize a model to disk atomically; returns the byte count."""
    data = serialize_model(m)
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return len(data)


def read_container(path) -> EncodedModel:
    """Read and validate a container file."""
    return deserialize_model(Path(path).read_bytes())
