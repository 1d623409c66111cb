"""WavLM backbone with restricted-span and causal attention variants.

The pretrained model is noncausal: every frame attends both directions and
the convolutional position embedding sees future frames.  Four configurations
are supported, none of which changes any weight:

    noncausal      attention restricted to +-span/2 around each frame
    causal-att     attention restricted to the past `span` seconds
    causal-att-pe  causal attention plus a causal (left-padded) position conv
    random-init    noncausal masking on seeded random weights (control)

Masks are injected as additive -inf terms on the relative-position bias that
the first transformer layer shares with all later layers; the per-layer gate
applied to that bias is sigmoid-bounded positive, so masked logits stay -inf
and masked attention probabilities are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import torch
import torch.nn.functional as F
from transformers import WavLMConfig, WavLMModel

EXPECTED_SAMPLE_RATE = 16000.0
FRAME_RATE_HZ = 50.0
N_TRANSFORMER_LAYERS = 24
EMBEDDING_DIM = 1024

_DOWNLOAD_HINT = (
    "no WavLM checkpoint available: pass --checkpoint/-c pointing at a local "
    "directory containing a WavLM Large checkpoint (config.json + weights). "
    "Download one with e.g. "
    "`huggingface-cli download microsoft/wavlm-large --local-dir wavlm-large` "
    "or from https://github.com/microsoft/unilm/tree/master/wavlm, then pass "
    "that directory."
)


class SetupError(RuntimeError):
    """The environment is missing something the extractor needs."""


class Variant(Enum):
    NONCAUSAL = "noncausal"
    CAUSAL_ATT = "causal-att"
    CAUSAL_ATT_PE = "causal-att-pe"
    RANDOM_INIT = "random-init"

    @property
    def causal_attention(self) -> bool:
        return self in (Variant.CAUSAL_ATT, Variant.CAUSAL_ATT_PE)

    @property
    def causal_position_conv(self) -> bool:
        return self is Variant.CAUSAL_ATT_PE


def large_config() -> WavLMConfig:
    """The WavLM Large architecture (1024-dim embeddings, 24 layers, 16 heads)."""
    return WavLMConfig(
        hidden_size=EMBEDDING_DIM,
        num_hidden_layers=N_TRANSFORMER_LAYERS,
        num_attention_heads=16,  # 1024 must split evenly across heads
        intermediate_size=4096,
        feat_extract_norm="layer",
        do_stable_layer_norm=True,
        conv_bias=True,
        apply_spec_augment=False,
        layerdrop=0.0,
    )


def _check_model(model: WavLMModel) -> WavLMModel:
    cfg = model.config
    if cfg.hidden_size != EMBEDDING_DIM or cfg.num_hidden_layers != N_TRANSFORMER_LAYERS:
        raise SetupError(
            f"checkpoint has hidden_size={cfg.hidden_size}, layers={cfg.num_hidden_layers}; "
            f"expected the Large architecture ({EMBEDDING_DIM}, {N_TRANSFORMER_LAYERS})"
        )
    if not cfg.do_stable_layer_norm:
        raise SetupError("checkpoint must use the stable-layer-norm (Large) encoder")
    for layer in model.encoder.layers:
        # -inf masking of the position bias survives gating only for a
        # nonnegative gate constant (true at init and for released weights)
        if (layer.attention.gru_rel_pos_const < 0).any():
            raise SetupError("checkpoint has negative attention gate constants")
    model.config.apply_spec_augment = False
    model.eval()
    return model


def load_pretrained(checkpoint: str | Path | None) -> WavLMModel:
    """Load a local WavLM checkpoint directory, or fail with instructions."""
    if checkpoint is None:
        raise SetupError(_DOWNLOAD_HINT)
    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise SetupError(f"checkpoint path {checkpoint} does not exist. " + _DOWNLOAD_HINT)
    model = WavLMModel.from_pretrained(str(checkpoint))
    return _check_model(model)


def build_random(seed: int) -> WavLMModel:
    """The Large architecture with seeded random weights (control model)."""
    torch.manual_seed(seed)
    model = WavLMModel(large_config())
    return _check_model(model)


@dataclass(frozen=True)
class EncodeResult:
    """Per-layer hidden states (tensors of shape (frames, channels))."""

    hidden_states: tuple[torch.Tensor, ...]  # length 25: index 0 (conv output) .. 24
    attentions: tuple[torch.Tensor, ...] | None


def _band_bias(n_frames: int, variant: Variant, span_frames: int) -> torch.Tensor:
    """(n_frames, n_frames) additive mask: 0 inside the allowed band, -inf outside."""
    idx = torch.arange(n_frames)
    rel = idx[None, :] - idx[:, None]  # key position minus query position
    if variant.causal_attention:
        allowed = (rel <= 0) & (rel >= -span_frames)
    else:
        half = span_frames // 2
        allowed = rel.abs() <= half
    bias = torch.zeros((n_frames, n_frames))
    bias[~allowed] = float("-inf")
    return bias


def _position_embedding(encoder, hidden: torch.Tensor, causal: bool) -> torch.Tensor:
    """Convolutional position embedding; left-padded only when causal."""
    pos_conv = encoder.pos_conv_embed
    if not causal:
        return pos_conv(hidden)
    conv = pos_conv.conv
    kernel = conv.kernel_size[0]
    x = hidden.transpose(1, 2)
    x = F.pad(x, (kernel - 1, 0))
    out = F.conv1d(x, conv.weight, conv.bias, groups=conv.groups)
    out = pos_conv.activation(out)
    return out.transpose(1, 2)


@torch.no_grad()
def encode(
    model: WavLMModel,
    waveform: torch.Tensor,
    variant: Variant,
    attention_span_s: float = 6.0,
    output_attentions: bool = False,
) -> EncodeResult:
    """Run the conv encoder and all transformer layers under the variant's masks.

    ``waveform`` is a 1-D 16 kHz tensor.  Layer 0 is the transformer input
    (projected convolutional features plus position embedding); layers 1..24
    are transformer outputs, with the encoder's final layer norm applied to
    the last one, mirroring the backbone's hidden-state convention.
    """
    if waveform.ndim != 1:
        raise ValueError("waveform must be 1-D")
    encoder = model.encoder
    features = model.feature_extractor(waveform[None, :])
    features = features.transpose(1, 2)
    hidden, _ = model.feature_projection(features)

    n_frames = hidden.shape[1]
    span_frames = int(round(attention_span_s * FRAME_RATE_HZ))
    hidden = hidden + _position_embedding(encoder, hidden, variant.causal_position_conv)
    states = [hidden[0]]
    hidden = encoder.dropout(hidden)

    attn0 = encoder.layers[0].attention
    position_bias = attn0.compute_bias(n_frames, n_frames)  # (heads, T, T)
    position_bias = position_bias + _band_bias(n_frames, variant, span_frames)[None, :, :]
    position_bias = position_bias.reshape(-1, n_frames, n_frames)

    attentions = [] if output_attentions else None
    for i, layer in enumerate(encoder.layers):
        out = layer(
            hidden,
            attention_mask=None,
            position_bias=position_bias,
            output_attentions=output_attentions,
        )
        hidden, position_bias = out[:2]
        if output_attentions:
            attentions.append(out[2][0] if out[2].ndim == 4 else out[2])
        if i == len(encoder.layers) - 1:
            states.append(encoder.layer_norm(hidden)[0])
        else:
            states.append(hidden[0])
    return EncodeResult(
        hidden_states=tuple(states),
        attentions=tuple(attentions) if output_attentions else None,
    )
