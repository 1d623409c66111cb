"""Layer-wise feature extraction to FTR1 files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile

from .ftr import write_feature_file
from .model import (
    EMBEDDING_DIM,
    EXPECTED_SAMPLE_RATE,
    FRAME_RATE_HZ,
    N_TRANSFORMER_LAYERS,
    SetupError,
    Variant,
    build_random,
    encode,
    load_pretrained,
)


@dataclass(frozen=True)
class ExtractionRequest:
    wav: Path
    layer: int
    variant: Variant
    out: Path
    attention_span_s: float = 6.0
    checkpoint: Path | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.layer <= N_TRANSFORMER_LAYERS:
            raise ValueError(f"layer must be in [0, {N_TRANSFORMER_LAYERS}], got {self.layer}")
        if self.attention_span_s <= 0:
            raise ValueError("attention span must be positive")


def read_wav_16k(path: str | Path) -> torch.Tensor:
    """Mono 16 kHz PCM WAV (16-bit int or 32-bit float) as a float tensor."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise SetupError(f"cannot decode WAV file {path}: {exc}") from exc
    if rate != EXPECTED_SAMPLE_RATE:
        raise ValueError(f"{path}: expected {EXPECTED_SAMPLE_RATE:g} Hz input, got {rate} Hz")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        samples = data
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    return torch.from_numpy(np.ascontiguousarray(samples))


def load_variant_model(variant: Variant, checkpoint: Path | None, seed: int):
    if variant is Variant.RANDOM_INIT:
        return build_random(seed)
    return load_pretrained(checkpoint)


def _checkpoint_id(variant: Variant, checkpoint: Path | None, seed: int) -> str:
    if variant is Variant.RANDOM_INIT:
        return f"random-init(seed={seed})"
    return str(checkpoint)


def _meta(layer: int, variant: Variant, checkpoint_id: str, span_s: float) -> dict[str, str]:
    return {
        "layer": str(layer),
        "variant": variant.value,
        "checkpoint": checkpoint_id,
        "attention_span_s": repr(span_s),
        "layer_convention": "0=conv-encoder output, 1-24=transformer layers",
    }


def extract(req: ExtractionRequest, model=None) -> Path:
    """Extract one layer's representation and write it as an FTR1 file."""
    if model is None:
        model = load_variant_model(req.variant, req.checkpoint, req.seed)
    waveform = read_wav_16k(req.wav)
    result = encode(model, waveform, req.variant, req.attention_span_s)
    layer = result.hidden_states[req.layer]
    data = layer.T.numpy().astype(np.float32)
    assert data.shape[0] == EMBEDDING_DIM
    req.out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_file(
        data,
        FRAME_RATE_HZ,
        _meta(req.layer, req.variant, _checkpoint_id(req.variant, req.checkpoint, req.seed), req.attention_span_s),
        req.out,
    )
    return req.out


def extract_all_layers(
    wav: str | Path,
    variant: Variant,
    out_dir: str | Path,
    attention_span_s: float = 6.0,
    checkpoint: Path | None = None,
    seed: int = 0,
    model=None,
) -> list[Path]:
    """One forward pass, 25 files named layer00.ftr .. layer24.ftr."""
    if model is None:
        model = load_variant_model(variant, checkpoint, seed)
    waveform = read_wav_16k(wav)
    result = encode(model, waveform, variant, attention_span_s)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_id = _checkpoint_id(variant, checkpoint, seed)
    written: list[Path] = []
    errors: list[str] = []
    for layer in range(N_TRANSFORMER_LAYERS + 1):
        path = out_dir / f"layer{layer:02d}.ftr"
        data = result.hidden_states[layer].T.numpy().astype(np.float32)
        try:
            write_feature_file(
                data, FRAME_RATE_HZ, _meta(layer, variant, ckpt_id, attention_span_s), path
            )
            written.append(path)
        except (OSError, ValueError) as exc:
            errors.append(f"layer {layer}: {exc}")
    if errors:
        raise SetupError("some layers failed to write: " + "; ".join(errors))
    return written
