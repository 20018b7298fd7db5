"""pcmbridge: probe-feature extraction from pre-trained models into FMX files."""

from .extraction import (
    BridgeError,
    ExtractionConfig,
    ExtractionSummary,
    extract_features,
    model_id_from_ref,
    write_fmx,
)

__version__ = "0.1.0"
