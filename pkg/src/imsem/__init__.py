"""EM-based denoising, baseline correction and peak clustering for MCC/IMS spectrum-chromatograms."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AxisConfig,
    ClusterParams,
    Clustering,
    ContractError,
    FormatError,
    Imsc,
    ImsemError,
    PeakLocation,
    read_imsc,
    read_peaks,
    write_imsc,
    write_peaks,
)
from .em import EmConfig  # noqa: E402

__all__ = [
    "AxisConfig",
    "ClusterParams",
    "Clustering",
    "ContractError",
    "EmConfig",
    "FormatError",
    "Imsc",
    "ImsemError",
    "PeakLocation",
    "read_imsc",
    "read_peaks",
    "write_imsc",
    "write_peaks",
]
