"""Hardware-aware mixed-precision bitwidth search toolkit."""

from ._core import (
    Dataset,
    DatasetSplit,
    DdpgAgent,
    HardwareConfig,
    Model,
    action_to_bits,
    bitops,
    calibrate_clip,
    cost_report,
    enforce_budget,
    generate_dataset,
    kmeans_quantize,
    linear_quantize,
    load_dataset,
    model_size_bits,
    quantized_accuracy,
    roofline,
    save_dataset,
    search,
)
from ._core import __version__

__all__ = [
    "Dataset",
    "DatasetSplit",
    "DdpgAgent",
    "HardwareConfig",
    "Model",
    "__version__",
    "action_to_bits",
    "bitops",
    "calibrate_clip",
    "cost_report",
    "enforce_budget",
    "generate_dataset",
    "kmeans_quantize",
    "linear_quantize",
    "load_dataset",
    "model_size_bits",
    "quantized_accuracy",
    "roofline",
    "save_dataset",
    "search",
]
