"""wavlm_extractor: layer-wise WavLM features with causal variants."""

from .extract import ExtractionRequest, extract, extract_all_layers, read_wav_16k
from .model import (
    EMBEDDING_DIM,
    FRAME_RATE_HZ,
    N_TRANSFORMER_LAYERS,
    SetupError,
    Variant,
    build_random,
    encode,
    large_config,
    load_pretrained,
)

__version__ = "0.1.0"
