"""wisense: WiFi channel-state-information activity sensing toolkit.

Covers the whole pipeline at desk scale: a multipath CSI simulator, capture
ingestion, phase sanitization and amplitude denoising, spectral and wavelet
features, Doppler gesture segmentation, four classifier families, and a
cross-validation CLI.
"""

from .config import PipelineConfig
from .model import (
    ActivityLabel,
    CsiFrame,
    CsiStream,
    LabeledDataset,
    amplitude_matrix,
    phase_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityLabel",
    "CsiFrame",
    "CsiStream",
    "LabeledDataset",
    "PipelineConfig",
    "amplitude_matrix",
    "phase_matrix",
    "__version__",
]
