"""Per-vector statistics, scaled power-of-two code assignment, threshold search.

Each vector w of length N gets one full-precision scalar

    alpha = sum_j |w_j| / (phi * N)

and one integer code per element from the level set {0} union {+-2^k, 2^k <= phi}.
Two assignment modes exist:

* "sigma": band thresholds relative to the side-wise RMS scale of the vector
  (positive entries are measured against sigma_p, negative ones against
  sigma_n). Magnitude 0 below gamma*sigma, 1 up to sigma, 2 up to
  delta*sigma, 4 at or above delta*sigma; magnitudes above phi clamp to phi.
  The code always carries the sign of the weight.
* "nearest": per-element argmin of |w - alpha*level| over the level set,
  ties resolved toward the smaller |level|.

The sigma-band thresholds delta and gamma can be tuned per model by
exhaustive grid search over the total squared error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensors import GroupingMode, VectorSlice

PHI_VALUES = (1, 2, 4)

# Grid defaults for search_thresholds; small on purpose so searches stay fast
# and reproducible.
DEFAULT_DELTA_GRID = (1.25, 1.5, 2.0, 2.5, 3.0)
DEFAULT_GAMMA_GRID = (0.05, 0.1, 0.2, 0.3, 0.5)

__all__ = [
    "PHI_VALUES",
    "DEFAULT_DELTA_GRID",
    "DEFAULT_GAMMA_GRID",
    "LevelSet",
    "level_set",
    "QuantConfig",
    "VectorStats",
    "gaussian_stats",
    "alpha_star",
    "QuantizedVector",
    "quantize_rows",
    "quantize_vector",
    "quantize_slices",
    "quantization_error",
    "search_thresholds",
    "search_config",
]


def _as_elements(v) -> np.ndarray:
    w = np.asarray(getattr(v, "elements", v), dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("expected a 1-D vector")
    return w


@dataclass(frozen=True)
class LevelSet:
    """Allowed integer codes for one phi, plus the bit width that addresses them."""

    phi: int
    levels: tuple[int, ...]
    theta_bits: int


def level_set(phi: int) -> LevelSet:
    """Level set for a quality parameter phi in {1, 2, 4}.

    Levels are zero plus the signed powers of two up to phi. theta_bits is
    ceil(log2(len(levels))): 2 bits for the ternary set, 3 bits otherwise.
    """
    if phi not in PHI_VALUES:
        raise ValueError(f"phi must be one of {PHI_VALUES}, got {phi!r}")
    mags = [2**k for k in range(phi.bit_length())]
    levels = tuple(sorted([-m for m in mags] + [0] + mags))
    theta = int(np.ceil(np.log2(len(levels))))
    return LevelSet(phi, levels, theta)


@dataclass(frozen=True)
class QuantConfig:
    """Quantizer settings: level bound phi, band thresholds, mode, grouping.

    gamma is a multiple of the side-wise sigma unless gamma_absolute is set,
    in which case it is a raw weight magnitude.
    """

    phi: int = 4
    delta: float = 1.5
    gamma: float = 0.1
    mode: str = "sigma"
    grouping: GroupingMode = field(default_factory=GroupingMode.channel_wise)
    gamma_absolute: bool = False

    def __post_init__(self):
        if self.phi not in PHI_VALUES:
            raise ValueError(f"phi must be one of {PHI_VALUES}, got {self.phi!r}")
        if not self.delta > 1.0:
            raise ValueError(f"delta must exceed 1, got {self.delta!r}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        if self.mode not in ("sigma", "nearest"):
            raise ValueError(f"mode must be 'sigma' or 'nearest', got {self.mode!r}")


@dataclass(frozen=True)
class VectorStats:
    """Population moments and side-wise RMS scales of one vector."""

    mean: float
    variance: float
    sigma_p: float
    sigma_n: float
    abs_sum: float


def gaussian_stats(v) -> VectorStats:
    """Empirical mean/variance (population form) plus side-wise scales.

    sigma_p is the root mean square of the strictly positive entries about
    zero, sigma_n the same for the magnitudes of the negative entries; a
    side with no entries gets scale 0. Zeros belong to neither side.
    """
    w = _as_elements(v)
    if w.size == 0:
        raise ValueError("empty vector")
    mean = float(w.mean())
    variance = float(np.mean((w - mean) ** 2))
    pos = w[w > 0]
    neg = w[w < 0]
    sigma_p = float(np.sqrt(np.mean(pos * pos))) if pos.size else 0.0
    sigma_n = float(np.sqrt(np.mean(neg * neg))) if neg.size else 0.0
    return VectorStats(mean, variance, sigma_p, sigma_n, float(np.abs(w).sum()))


def alpha_star(v, phi: int) -> float:
    """Per-vector scalar: mean absolute value divided by phi."""
    if phi not in PHI_VALUES:
        raise ValueError(f"phi must be one of {PHI_VALUES}, got {phi!r}")
    w = _as_elements(v)
    if w.size == 0:
        raise ValueError("empty vector")
    return float(np.abs(w).sum() / (phi * w.size))


@dataclass
class QuantizedVector:
    """One quantized vector: scalar, integer codes, and residual squared error."""

    alpha: float
    codes: np.ndarray
    l2_error: float


def _codes_sigma(rows: np.ndarray, cfg: QuantConfig) -> np.ndarray:
    pos = rows > 0
    neg = rows < 0
    sq = rows * rows
    npos = pos.sum(axis=1)
    nneg = neg.sum(axis=1)
    sigma_p = np.sqrt((sq * pos).sum(axis=1) / np.maximum(npos, 1))
    sigma_n = np.sqrt((sq * neg).sum(axis=1) / np.maximum(nneg, 1))
    # Zero entries always code to 0 via the sign factor; give them a dummy
    # scale of 1 so no threshold arithmetic sees inf or nan.
    sigma = np.where(pos, sigma_p[:, None], np.where(neg, sigma_n[:, None], 1.0))
    absw = np.abs(rows)
    t0 = cfg.gamma if cfg.gamma_absolute else cfg.gamma * sigma
    mag = np.select(
        [absw < t0, absw < sigma, absw < cfg.delta * sigma],
        [0, 1, 2],
        default=4,
    )
    mag = np.minimum(mag, cfg.phi)
    return (np.sign(rows) * mag).astype(np.int8)


def _codes_nearest(rows: np.ndarray, alphas: np.ndarray, phi: int) -> np.ndarray:
    # Levels ordered by |level| so that argmin's first-hit rule realises the
    # smaller-|level| tie break.
    order = sorted(level_set(phi).levels, key=lambda lvl: (abs(lvl), lvl))
    lv = np.asarray(order, dtype=np.float64)
    dist = np.abs(rows[:, :, None] - alphas[:, None, None] * lv[None, None, :])
    idx = dist.argmin(axis=2)
    return np.asarray(order, dtype=np.int8)[idx]


def quantize_rows(rows, cfg: QuantConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quantize a stack of equal-length vectors at once.

    Returns (alphas, codes, l2_errors) aligned with the rows; agrees with
    quantize_vector applied row by row.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] == 0:
        raise ValueError("rows must be a 2-D stack of non-empty vectors")
    alphas = np.abs(rows).sum(axis=1) / (cfg.phi * rows.shape[1])
    if cfg.mode == "sigma":
        codes = _codes_sigma(rows, cfg)
    else:
        codes = _codes_nearest(rows, alphas, cfg.phi)
    resid = rows - alphas[:, None] * codes
    errors = (resid * resid).sum(axis=1)
    return alphas, codes, errors


def quantize_vector(v, cfg: QuantConfig) -> QuantizedVector:
    """Quantize one vector under the configured mode."""
    w = _as_elements(v)
    if w.size == 0:
        raise ValueError("empty vector")
    alphas, codes, errors = quantize_rows(w[None, :], cfg)
    return QuantizedVector(float(alphas[0]), codes[0], float(errors[0]))


def quantize_slices(slices: Sequence[VectorSlice], cfg: QuantConfig) -> list[QuantizedVector]:
    """Quantize many slices, batching equal lengths; order is preserved."""
    by_length: dict[int, list[int]] = {}
    for i, s in enumerate(slices):
        by_length.setdefault(np.asarray(s.elements).size, []).append(i)
    out: list[QuantizedVector | None] = [None] * len(slices)
    for n, idxs in by_length.items():
        if n == 0:
            raise ValueError("empty vector")
        rows = np.stack([np.asarray(slices[i].elements, dtype=np.float64) for i in idxs])
        alphas, codes, errors = quantize_rows(rows, cfg)
        for j, i in enumerate(idxs):
            out[i] = QuantizedVector(float(alphas[j]), codes[j], float(errors[j]))
    return out  # type: ignore[return-value]


def quantization_error(v, q: QuantizedVector) -> float:
    """Squared reconstruction error sum((w - alpha*code)^2); equals q.l2_error."""
    w = _as_elements(v)
    codes = np.asarray(q.codes)
    if codes.shape != w.shape:
        raise ValueError("vector and code lengths differ")
    resid = w - q.alpha * codes
    return float((resid * resid).sum())


def search_thresholds(
    vectors: Sequence[VectorSlice],
    phi: int,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    *,
    gamma_absolute: bool = False,
) -> tuple[float, float, float]:
    """Exhaustive grid search for the sigma-mode thresholds.

    Returns the (delta, gamma, total_error) triple minimizing the summed
    squared error over all vectors; ties prefer the smaller delta, then the
    smaller gamma.
    """
    if not vectors:
        raise ValueError("no vectors to search over")
    deltas = sorted(float(d) for d in delta_grid)
    gammas = sorted(float(g) for g in gamma_grid)
    if not deltas or not gammas:
        raise ValueError("threshold grids must be non-empty")
    if deltas[0] <= 1.0:
        raise ValueError("delta grid values must exceed 1")

    by_length: dict[int, list[np.ndarray]] = {}
    for s in vectors:
        w = _as_elements(s)
        if w.size == 0:
            raise ValueError("empty vector")
        by_length.setdefault(w.size, []).append(w)
    stacks = [np.stack(group) for group in by_length.values()]

    best: tuple[float, float, float] | None = None
    for d in deltas:
        for g in gammas:
            cfg = QuantConfig(phi=phi, delta=d, gamma=g, mode="sigma", gamma_absolute=gamma_absolute)
            total = 0.0
            for rows in stacks:
                total += float(quantize_rows(rows, cfg)[2].sum())
            if best is None or total < best[2]:
                best = (d, g, total)
    assert best is not None
    return best


def search_config(
    vectors: Sequence[VectorSlice],
    phi: int,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    *,
    grouping: GroupingMode | None = None,
    gamma_absolute: bool = False,
) -> tuple[QuantConfig, float]:
    """Exhaustive search over quantizer configurations, by total squared error.

    Candidates are every (delta, gamma) grid point of the sigma-band mode
    plus the per-element argmin assignment; the returned config is the one
    with the least summed error (the grid winner's thresholds are kept
    either way so they stay reported and reproducible). Ties keep the
    sigma-band candidate.
    """
    delta, gamma, sigma_error = search_thresholds(
        vectors, phi, delta_grid, gamma_grid, gamma_absolute=gamma_absolute
    )
    kwargs = dict(phi=phi, delta=delta, gamma=gamma, gamma_absolute=gamma_absolute)
    if grouping is not None:
        kwargs["grouping"] = grouping
    nearest = QuantConfig(mode="nearest", **kwargs)
    by_length: dict[int, list[np.ndarray]] = {}
    for s in vectors:
        w = _as_elements(s)
        by_length.setdefault(w.size, []).append(w)
    nearest_error = 0.0
    for group in by_length.values():
        nearest_error += float(quantize_rows(np.stack(group), nearest)[2].sum())
    if nearest_error < sigma_error:
        return nearest, nearest_error
    return QuantConfig(mode="sigma", **kwargs), sigma_error
