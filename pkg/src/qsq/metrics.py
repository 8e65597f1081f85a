"""Bit counts, memory savings, and DRAM transfer energy for encoded models.

A full-precision layer costs fpb bits per weight. An encoded layer costs
its code width per weight plus scalar storage: the "vector" policy charges
one full-precision scalar per actual vector, while the "paper" policy
charges a fixed height*width*channels scalars per layer regardless of the
grouping (so it over- or under-counts whenever the vector count differs).
DRAM energy is charged at a flat rate per 32 bits moved.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .codec import EncodedModel, decode_codes
from .quantize import QuantConfig
from .tensors import GroupingMode, LayerDims, WeightTensor

DRAM_PJ_PER_32_BITS = 6400.0

# Code width to the largest level bound it can express.
PHI_FOR_BE = {2: 1, 3: 4}

__all__ = [
    "DRAM_PJ_PER_32_BITS",
    "PHI_FOR_BE",
    "EncodingParams",
    "EnergyReport",
    "nbits_full",
    "nbits_encoded",
    "dram_energy",
    "model_report",
    "SweepRow",
    "sweep",
    "sweep_csv_text",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class EncodingParams:
    """Bit accounting knobs: full-precision width, code width, scalar policy."""

    fpb: int = 32
    be: int = 3
    scalar_policy: str = "vector"

    def __post_init__(self):
        if self.be not in (2, 3):
            raise ValueError(f"be must be 2 or 3, got {self.be!r}")
        if self.fpb < self.be:
            raise ValueError(f"fpb must be >= be, got fpb={self.fpb} be={self.be}")
        if self.scalar_policy not in ("vector", "paper"):
            raise ValueError(f"scalar_policy must be 'vector' or 'paper', got {self.scalar_policy!r}")


@dataclass(frozen=True)
class EnergyReport:
    """Aggregate bit counts, savings, DRAM energy, and zero fractions."""

    bits_full: int
    bits_encoded: int
    savings_fraction: float
    dram_pj_full: float
    dram_pj_encoded: float
    zero_fraction_before: float
    zero_fraction_after: float


def nbits_full(d: LayerDims, fpb: int = 32) -> int:
    """Bits to store one layer at full precision."""
    if fpb < 0:
        raise ValueError("fpb must be >= 0")
    return fpb * d.count


def nbits_encoded(d: LayerDims, p: EncodingParams, n_vector: int) -> int:
    """Bits to store one encoded layer: codes plus scalars per policy."""
    if n_vector < 1:
        raise ValueError("n_vector must be >= 1")
    code_bits = p.be * d.count
    if p.scalar_policy == "paper":
        scalar_bits = d.height * d.width * d.channels * p.fpb
    else:
        scalar_bits = -(-d.count // n_vector) * p.fpb
    return code_bits + scalar_bits


def dram_energy(bits: int) -> float:
    """Picojoules to move `bits` from DRAM at the flat per-32-bit rate."""
    if bits < 0:
        raise ValueError("bits must be >= 0")
    return bits / 32 * DRAM_PJ_PER_32_BITS


def model_report(
    model: Sequence[WeightTensor],
    encoded: EncodedModel,
    params: EncodingParams = EncodingParams(),
    include_dense: bool = False,
) -> EnergyReport:
    """Compare a model against its encoded form layer by layer.

    Coded layers are charged at their actual bit width, with the scalar
    term per params.scalar_policy ("vector" uses the actual scalar count,
    "paper" the fixed per-position count). Passthrough layers cost full
    precision. Without include_dense only coded layers enter the totals.
    """
    if len(model) != len(encoded.layers):
        raise ValueError("layer count mismatch between model and encoded model")
    bits_full = 0
    bits_encoded = 0
    zeros_before = 0
    zeros_after = 0
    elements = 0
    for t, e in zip(model, encoded.layers):
        if t.name != e.name or t.dims != e.dims:
            raise ValueError(f"layer mismatch: {t.name!r} {t.dims} vs {e.name!r} {e.dims}")
        if e.passthrough and not include_dense:
            continue
        count = t.dims.count
        bits_full += nbits_full(t.dims, params.fpb)
        if e.passthrough:
            bits_encoded += params.fpb * count
            zeros_after += int(np.count_nonzero(e.scalars == 0.0))
        else:
            if params.scalar_policy == "paper":
                scalar_bits = t.dims.height * t.dims.width * t.dims.channels * params.fpb
            else:
                scalar_bits = e.vector_count * params.fpb
            bits_encoded += e.bit_width * count + scalar_bits
            levels = decode_codes(e.packed_codes, count, e.bit_width)
            zeros_after += int(np.count_nonzero(levels == 0))
        zeros_before += int(np.count_nonzero(t.values == 0.0))
        elements += count
    savings = 1.0 - bits_encoded / bits_full if bits_full else 0.0
    return EnergyReport(
        bits_full=bits_full,
        bits_encoded=bits_encoded,
        savings_fraction=savings,
        dram_pj_full=dram_energy(bits_full),
        dram_pj_encoded=dram_energy(bits_encoded),
        zero_fraction_before=zeros_before / elements if elements else 0.0,
        zero_fraction_after=zeros_after / elements if elements else 0.0,
    )


@dataclass(frozen=True)
class SweepRow:
    """One design point of the (vector length, code width) space."""

    n: int
    be: int
    phi: int
    accuracy: float | None
    savings_fraction: float
    dram_pj_encoded: float


def sweep(
    model: Sequence[WeightTensor],
    n_list: Sequence[int],
    be_list: Sequence[int],
    eval_fn: Callable[[QuantConfig], float] | None = None,
    *,
    fpb: int = 32,
    scalar_policy: str = "vector",
    include_dense: bool = False,
) -> list[SweepRow]:
    """One row per (n, be) pair, ordered by n then be.

    Savings and energy come from the bit model with flat vectors of length
    n; accuracy is filled by eval_fn(cfg) when given, where cfg is the
    quantizer configuration of that design point (phi 1 for 2-bit codes,
    phi 4 for 3-bit).
    """
    included = [t for t in model if t.kind == "conv" or include_dense]
    rows = []
    for n in sorted(set(int(n) for n in n_list)):
        for be in sorted(set(int(b) for b in be_list)):
            phi = PHI_FOR_BE[be]
            params = EncodingParams(fpb=fpb, be=be, scalar_policy=scalar_policy)
            bits_full = sum(nbits_full(t.dims, fpb) for t in included)
            bits_enc = sum(nbits_encoded(t.dims, params, n) for t in included)
            accuracy = None
            if eval_fn is not None:
                cfg = QuantConfig(phi=phi, grouping=GroupingMode.flat(n))
                accuracy = float(eval_fn(cfg))
            rows.append(
                SweepRow(
                    n=n,
                    be=be,
                    phi=phi,
                    accuracy=accuracy,
                    savings_fraction=1.0 - bits_enc / bits_full if bits_full else 0.0,
                    dram_pj_encoded=dram_energy(bits_enc),
                )
            )
    return rows


def sweep_csv_text(rows: Sequence[SweepRow]) -> str:
    """Render sweep rows as CSV; byte-identical for identical rows."""
    lines = ["n,be,phi,accuracy,savings_fraction,dram_pj_encoded"]
    for r in rows:
        acc = "" if r.accuracy is None else f"{r.accuracy:.6f}"
        lines.append(f"{r.n},{r.be},{r.phi},{acc},{r.savings_fraction:.6f},{r.dram_pj_encoded:.3f}")
    return "\n".join(lines) + "\n"


def write_sweep_csv(rows: Sequence[SweepRow], path) -> Path:
    """Write the sweep CSV atomically (UTF-8, LF endings)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(sweep_csv_text(rows).encode("utf-8"))
    tmp.replace(path)
    return path
