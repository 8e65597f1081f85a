"""Per-vector scaled power-of-two weight quantization toolkit.

Converts trained CNN weights into packed 2- or 3-bit codes with one
full-precision scalar per vector, decodes them back by shifting and
negating that scalar, measures the accuracy impact with a built-in
forward-only evaluator, and accounts for memory and DRAM-energy savings.
A canonic-signed-digit module simulates quality scalable shift-add
multipliers at the bit level.
"""

from .codec import (
    ContainerError,
    EncodedLayer,
    EncodedModel,
    decode_code,
    decode_code_fixed,
    decode_codes,
    decode_layer,
    decode_model,
    encode_codes,
    encode_layer,
    encode_model,
    passthrough_layer,
    read_container,
    write_container,
)
from .csd import ApproxProduct, CsdNumber, csd_multiply, from_csd, nonzero_histogram, to_csd, truncate_csd
from .datasets import Dataset, load_cifar10, load_mnist
from .inference import (
    Conv,
    Dense,
    Flatten,
    MaxPool,
    Network,
    ReLU,
    Softmax,
    evaluate,
    evaluate_quantized,
    load_network,
    predict,
    quantize_network,
)
from .metrics import (
    DRAM_PJ_PER_32_BITS,
    EncodingParams,
    EnergyReport,
    SweepRow,
    dram_energy,
    model_report,
    nbits_encoded,
    nbits_full,
    sweep,
    write_sweep_csv,
)
from .quantize import (
    DEFAULT_DELTA_GRID,
    DEFAULT_GAMMA_GRID,
    LevelSet,
    QuantConfig,
    QuantizedVector,
    VectorStats,
    alpha_star,
    gaussian_stats,
    level_set,
    quantization_error,
    quantize_slices,
    quantize_vector,
    search_config,
    search_thresholds,
)
from .tensors import (
    GroupingMode,
    LayerDims,
    VectorSlice,
    WeightTensor,
    extract_vectors,
    load_model,
    reassemble,
    save_model,
)

__version__ = "0.1.0"
