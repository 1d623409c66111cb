"""Synthetic experiments with known ground truth.

Two talkers' feature streams are AR(1) Gaussian processes; neural activity is
generated through a planted forward filter with an attentional gain contrast,

    R = alpha * (G @ X_attended) + beta * (G @ X_unattended) + sigma * noise,

so decoding claims can be checked against the generator.  Everything is a
pure function of the configuration: regenerating with the same config yields
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .core import (
    LagWindow,
    SignalMatrix,
    Talker,
    load_manifest,
    write_manifest,
    write_matrix_file,
)
from .errors import ValidationError
from .linmap import (
    DEFAULT_FORWARD_LAG,
    Direction,
    SpatioTemporalFilter,
    apply_filter,
    load_filter,
    save_filter,
)

NEURAL_RATE_HZ = 100.0


@dataclass(frozen=True)
class LayerGains:
    """One synthetic feature family with its own attentional gain contrast."""

    name: str
    attended_gain: float
    unattended_gain: float


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_trials: int = 28
    trial_s: float = 60.0
    n_electrodes: int = 32
    n_feature_channels: int = 28
    attended_gain: float = 1.0
    unattended_gain: float = 0.3
    noise_std: float = 1.0
    ar_coeff: float = 0.95
    forward_lag: LagWindow = DEFAULT_FORWARD_LAG
    feature_name: str = "synth"
    layers: tuple[LayerGains, ...] = ()

    def __post_init__(self) -> None:
        if self.n_trials < 1 or self.n_electrodes < 1 or self.n_feature_channels < 1:
            raise ValidationError("counts must be positive")
        if self.trial_s < 1.0:
            raise ValidationError("trials must be at least 1 s long")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be nonnegative")
        if not 0 <= self.ar_coeff < 1:
            raise ValidationError("ar_coeff must be in [0, 1)")

    def families(self) -> tuple[LayerGains, ...]:
        if self.layers:
            return self.layers
        return (LayerGains(self.feature_name, self.attended_gain, self.unattended_gain),)


def gen_talker_features(
    seed, channels: int, duration_s: float, ar_coeff: float, rate_hz: float = NEURAL_RATE_HZ
) -> SignalMatrix:
    """Per-channel AR(1) Gaussian features with unit stationary variance."""
    if duration_s < 1.0:
        raise ValidationError("feature streams must be at least 1 s long")
    if not 0 <= ar_coeff < 1:
        raise ValidationError("ar_coeff must be in [0, 1)")
    n = int(round(duration_s * rate_hz))
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((channels, n))
    x = np.empty_like(eps)
    x[:, 0] = eps[:, 0]
    scale = np.sqrt(1.0 - ar_coeff**2)
    for t in range(1, n):
        x[:, t] = ar_coeff * x[:, t - 1] + scale * eps[:, t]
    return SignalMatrix(x.astype(np.float32), rate_hz, {})


def _planted_map(
    rng: np.random.Generator,
    n_electrodes: int,
    n_features: int,
    lag: LagWindow,
    ar_coeff: float,
    tap_decay: float = 0.6,
    tap_scale: float = 0.25,
) -> SpatioTemporalFilter:
    """A well-conditioned forward map with exactly unit output variance.

    The zero-lag tap is a partial isometry (so the map is stably invertible by
    a lagged backward filter) plus geometrically decaying random later taps;
    rows are rescaled so each electrode's response to unit-variance AR(1)
    features has variance exactly 1.
    """
    n_lags = lag.n_lags
    a = rng.standard_normal((n_electrodes, n_features))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    w = np.zeros((n_electrodes, n_features, n_lags))
    w[:, :, 0] = u @ vt
    for j in range(1, n_lags):
        w[:, :, j] = tap_scale * tap_decay**j * rng.standard_normal((n_electrodes, n_features)) / np.sqrt(n_features)
    # exact per-electrode stationary variance under AR(1) inputs
    toep = scipy.linalg.toeplitz(ar_coeff ** np.arange(n_lags))
    var = np.einsum("enl,lm,enm->e", w, toep, w)
    w /= np.sqrt(var)[:, np.newaxis, np.newaxis]
    w = w.astype(np.float32).astype(np.float64)  # freeze at file precision
    return SpatioTemporalFilter(
        weights=w, bias=np.zeros(n_electrodes), lags=lag, direction=Direction.FORWARD
    )


@dataclass(frozen=True)
class GroundTruth:
    """The generator's secrets: planted maps, gains, and attended labels."""

    seed: int
    filters: dict[str, SpatioTemporalFilter]
    gains: dict[str, tuple[float, float]]
    noise_std: float
    ar_coeff: float
    labels: tuple[Talker, ...]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        for name, filt in self.filters.items():
            save_filter(filt, directory / f"ground_truth.{name}.filt.ftr")
        doc = {
            "seed": self.seed,
            "noise_std": self.noise_std,
            "ar_coeff": self.ar_coeff,
            "gains": {k: list(v) for k, v in self.gains.items()},
            "labels": [t.value for t in self.labels],
            "filters": {k: f"ground_truth.{k}.filt.ftr" for k in self.filters},
        }
        (directory / "ground_truth.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "GroundTruth":
        directory = Path(directory)
        doc = json.loads((directory / "ground_truth.json").read_text())
        return cls(
            seed=doc["seed"],
            filters={k: load_filter(directory / rel) for k, rel in doc["filters"].items()},
            gains={k: (v[0], v[1]) for k, v in doc["gains"].items()},
            noise_std=doc["noise_std"],
            ar_coeff=doc["ar_coeff"],
            labels=tuple(Talker(v) for v in doc["labels"]),
        )


def gen_dataset(cfg: SynthConfig, out_dir: str | Path) -> tuple[Path, GroundTruth]:
    """Write a complete synthetic experiment and return (manifest path, truth).

    Attended labels alternate talker 1 / talker 2 across trials.  Each feature
    family gets its own planted forward map; the neural recording sums all
    family contributions plus white noise.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    families = cfg.families()

    filters = {}
    gains = {}
    for li, fam in enumerate(families):
        rng = np.random.default_rng([cfg.seed, 101, li])
        filters[fam.name] = _planted_map(
            rng, cfg.n_electrodes, cfg.n_feature_channels, cfg.forward_lag, cfg.ar_coeff
        )
        gains[fam.name] = (fam.attended_gain, fam.unattended_gain)

    labels = tuple(Talker.TALKER1 if i % 2 == 0 else Talker.TALKER2 for i in range(cfg.n_trials))
    entries = []
    for i in range(cfg.n_trials):
        tid = f"trial{i:02d}"
        attended = labels[i]
        n_frames = int(round(cfg.trial_s * NEURAL_RATE_HZ))
        neural_acc = np.zeros((cfg.n_electrodes, n_frames))
        t1_paths: dict[str, str] = {}
        t2_paths: dict[str, str] = {}
        for li, fam in enumerate(families):
            f1 = gen_talker_features(
                [cfg.seed, 17, i, 1, li], cfg.n_feature_channels, cfg.trial_s, cfg.ar_coeff
            )
            f2 = gen_talker_features(
                [cfg.seed, 17, i, 2, li], cfg.n_feature_channels, cfg.trial_s, cfg.ar_coeff
            )
            att, unatt = (f1, f2) if attended is Talker.TALKER1 else (f2, f1)
            alpha, beta = gains[fam.name]
            contrib = alpha * apply_filter(filters[fam.name], att).data
            if beta != 0.0:
                contrib = contrib + beta * apply_filter(filters[fam.name], unatt).data
            neural_acc += contrib
            p1 = f"{tid}.t1.{fam.name}.ftr"
            p2 = f"{tid}.t2.{fam.name}.ftr"
            write_matrix_file(f1.with_meta(trial=tid, talker="1", feature=fam.name), out_dir / p1)
            write_matrix_file(f2.with_meta(trial=tid, talker="2", feature=fam.name), out_dir / p2)
            t1_paths[fam.name] = p1
            t2_paths[fam.name] = p2
        if cfg.noise_std > 0:
            noise_rng = np.random.default_rng([cfg.seed, 999, i])
            neural_acc += cfg.noise_std * noise_rng.standard_normal(neural_acc.shape)
        neural = SignalMatrix(
            neural_acc.astype(np.float32), NEURAL_RATE_HZ, {"trial": tid, "kind": "neural"}
        )
        neural_path = f"{tid}.neural.ftr"
        write_matrix_file(neural, out_dir / neural_path)
        entries.append(
            {
                "trial_id": tid,
                "neural": neural_path,
                "attended": attended.value,
                "talker1": t1_paths,
                "talker2": t2_paths,
            }
        )

    manifest_path = out_dir / "manifest.json"
    write_manifest(f"synth-{cfg.seed}", entries, manifest_path)
    truth = GroundTruth(
        seed=cfg.seed,
        filters=filters,
        gains=gains,
        noise_std=cfg.noise_std,
        ar_coeff=cfg.ar_coeff,
        labels=labels,
    )
    truth.save(out_dir)
    load_manifest(manifest_path)  # generated output must always validate
    return manifest_path, truth
