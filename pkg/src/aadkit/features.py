"""Acoustic feature extraction and feature-space conditioning.

Baseline stimulus representations (broadband envelope, log-mel spectrogram)
are computed from 16 kHz mono waveforms at the 100 Hz neural frame rate.
Feature sequences at lower rates are upsampled with linear interpolation,
and z-scoring / PCA reduce and condition feature channels before filter
training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .core import SignalMatrix
from .errors import (
    DimensionError,
    FormatError,
    UnsupportedRateError,
    ValidationError,
)

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Waveform:
    """A mono waveform; 16 kHz is expected throughout the pipeline."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("waveform must be a non-empty 1-D sample sequence")
        if not np.isfinite(arr).all():
            raise ValidationError("waveform contains non-finite samples")
        view = arr.view()
        view.flags.writeable = False
        object.__setattr__(self, "samples", view)
        if self.sample_rate_hz <= 0:
            raise ValidationError("waveform sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def read_wav(path) -> Waveform:
    """Read a mono PCM WAV file (16-bit int or 32-bit float)."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot decode WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise FormatError(f"{path}: only mono WAV input is supported, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported WAV sample format {data.dtype}")
    return Waveform(samples, float(rate))


def write_wav(path, w: Waveform) -> None:
    wavfile.write(path, int(round(w.sample_rate_hz)), w.samples.astype(np.float32))


def _lowpass_taps(cutoff_hz: float, rate_hz: float, n_taps: int) -> np.ndarray:
    """Hamming-windowed sinc lowpass with unit DC gain (odd tap count)."""
    mid = (n_taps - 1) // 2
    n = np.arange(n_taps) - mid
    h = 2.0 * cutoff_hz / rate_hz * np.sinc(2.0 * cutoff_hz / rate_hz * n)
    h *= np.hamming(n_taps)
    return h / h.sum()


def envelope(w: Waveform, out_rate_hz: float = 100.0) -> SignalMatrix:
    """Broadband amplitude envelope at ``out_rate_hz`` (1 channel).

    Full-wave rectification, 401-tap windowed-sinc lowpass at 20 Hz applied
    zero-phase (single pass with group-delay compensation), then decimation.
    ``out_rate_hz`` must divide the waveform rate.
    """
    ratio = w.sample_rate_hz / out_rate_hz
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise UnsupportedRateError(
            f"output rate {out_rate_hz} Hz must divide the input rate {w.sample_rate_hz} Hz"
        )
    decim = int(round(ratio))
    n_taps = 401
    h = _lowpass_taps(20.0, w.sample_rate_hz, n_taps)
    rect = np.abs(w.samples)
    smooth = np.convolve(rect, h)[(n_taps - 1) // 2 :][: rect.size]
    n_out = rect.size // decim
    env = smooth[: n_out * decim : decim]
    return SignalMatrix(env[np.newaxis, :], out_rate_hz, {"feature": "envelope"})


@dataclass(frozen=True)
class MelConfig:
    n_bands: int = 28
    frame_len_ms: float = 25.0
    hop_ms: float = 10.0
    fmin_hz: float = 50.0
    fmax_hz: float = 8000.0
    log_floor: float = 1e-6
    compression: str = "log"  # "log" or "linear"

    def __post_init__(self) -> None:
        if self.n_bands < 1:
            raise ValidationError("n_bands must be positive")
        if not 0 < self.fmin_hz < self.fmax_hz:
            raise ValidationError("need 0 < fmin_hz < fmax_hz")
        if self.log_floor <= 0:
            raise ValidationError("log_floor must be positive")
        if self.compression not in ("log", "linear"):
            raise ValidationError(f"unknown compression '{self.compression}'")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(cfg: MelConfig) -> np.ndarray:
    """Center frequencies (Hz) of the triangular mel filters."""
    pts = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_bands + 2)
    return mel_to_hz(pts)[1:-1]


def _mel_filterbank(cfg: MelConfig, rate_hz: float, n_fft: int) -> np.ndarray:
    """Triangular peak-1 filters on rFFT bin frequencies, (n_bands, n_fft//2+1)."""
    if cfg.fmax_hz > rate_hz / 2 + 1e-9:
        raise ValidationError(f"fmax {cfg.fmax_hz} Hz exceeds Nyquist {rate_hz / 2} Hz")
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_bands + 2))
    freqs = np.arange(n_fft // 2 + 1) * rate_hz / n_fft
    bank = np.zeros((cfg.n_bands, freqs.size))
    for b in range(cfg.n_bands):
        lo, center, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / (center - lo)
        down = (hi - freqs) / (hi - center)
        bank[b] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def _frame_hop_samples(cfg: MelConfig, rate_hz: float) -> tuple[int, int]:
    frame = cfg.frame_len_ms * rate_hz / 1000.0
    hop = cfg.hop_ms * rate_hz / 1000.0
    if abs(frame - round(frame)) > 1e-9 or abs(hop - round(hop)) > 1e-9:
        raise ValidationError(
            f"frame ({cfg.frame_len_ms} ms) and hop ({cfg.hop_ms} ms) must be whole samples at {rate_hz} Hz"
        )
    return int(round(frame)), int(round(hop))


def mel_spectrogram(w: Waveform, cfg: MelConfig = MelConfig()) -> SignalMatrix:
    """Log-mel spectrogram with centered Hann frames and reflect padding.

    Defaults give 28 bands at exactly 100 Hz from 16 kHz input.  Power per
    band is compressed as ``ln(power + log_floor)``.
    """
    frame_n, hop_n = _frame_hop_samples(cfg, w.sample_rate_hz)
    x = w.samples
    if x.size < frame_n:
        raise ValidationError(
            f"waveform of {x.size} samples is shorter than one {frame_n}-sample frame"
        )
    pad = frame_n // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = (xp.size - frame_n) // hop_n + 1
    idx = np.arange(frame_n)[np.newaxis, :] + hop_n * np.arange(n_frames)[:, np.newaxis]
    frames = xp[idx]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(frame_n) / frame_n)
    n_fft = 1 << (frame_n - 1).bit_length()
    spectra = np.fft.rfft(frames * window, n=n_fft, axis=1)
    power = spectra.real**2 + spectra.imag**2
    bank = _mel_filterbank(cfg, w.sample_rate_hz, n_fft)
    mel_power = power @ bank.T
    if cfg.compression == "log":
        out = np.log(mel_power + cfg.log_floor)
    else:
        out = mel_power
    rate = w.sample_rate_hz / hop_n
    return SignalMatrix(out.T, rate, {"feature": "mel", "n_bands": str(cfg.n_bands)})


def resample_linear(m: SignalMatrix, out_rate_hz: float) -> SignalMatrix:
    """Upsample per channel by linear interpolation on the uniform time grid.

    The first output sample coincides with the first input sample and the
    output length is ``floor((n_frames - 1) * out/in) + 1``.
    """
    if out_rate_hz < m.sample_rate_hz:
        raise UnsupportedRateError(
            f"resample_linear only upsamples; requested {out_rate_hz} Hz from {m.sample_rate_hz} Hz"
        )
    if out_rate_hz == m.sample_rate_hz:
        return m
    n_out = int(np.floor((m.n_frames - 1) * out_rate_hz / m.sample_rate_hz)) + 1
    t_in = np.arange(m.n_frames) / m.sample_rate_hz
    t_out = np.arange(n_out) / out_rate_hz
    out = np.empty((m.n_channels, n_out))
    for c in range(m.n_channels):
        out[c] = np.interp(t_out, t_in, m.data[c].astype(np.float64))
    return SignalMatrix(out, out_rate_hz, dict(m.meta))


@dataclass(frozen=True)
class ZScoreModel:
    """Per-channel mean and (floored) population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.mean.size


def zscore_fit(training: list[SignalMatrix]) -> ZScoreModel:
    """Fit per-channel mean/std pooled over all frames of all matrices."""
    if not training:
        raise ValidationError("zscore_fit needs at least one matrix")
    d = training[0].n_channels
    total = np.zeros(d)
    total_sq = np.zeros(d)
    n = 0
    for m in training:
        if m.n_channels != d:
            raise DimensionError(f"channel count mismatch: {m.n_channels} vs {d}")
        x = m.data.astype(np.float64)
        total += x.sum(axis=1)
        total_sq += (x**2).sum(axis=1)
        n += m.n_frames
    if n < 2:
        raise ValidationError("zscore_fit needs at least two pooled frames")
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0)
    std = np.maximum(np.sqrt(var), STD_FLOOR)
    return ZScoreModel(mean, std)


def zscore_apply(model: ZScoreModel, m: SignalMatrix) -> SignalMatrix:
    if m.n_channels != model.n_channels:
        raise DimensionError(
            f"matrix has {m.n_channels} channels, z-score model has {model.n_channels}"
        )
    out = (m.data.astype(np.float64) - model.mean[:, np.newaxis]) / model.std[:, np.newaxis]
    return SignalMatrix(out, m.sample_rate_hz, dict(m.meta))


@dataclass(frozen=True)
class PcaModel:
    """Channel mean, orthonormal component rows, and explained variances."""

    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # length k, nonincreasing

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_channels(self) -> int:
        return self.components.shape[1]


def pca_fit(training: list[SignalMatrix], k: int) -> PcaModel:
    """Top-k principal directions of frames pooled across ``training``.

    Computed by SVD of the centered pooled data matrix.  Components follow the
    sign convention that each row's largest-magnitude entry is positive;
    explained variances use the sample (n-1) normalization.
    """
    if not training:
        raise ValidationError("pca_fit needs at least one matrix")
    d = training[0].n_channels
    if k < 1 or k > d:
        raise DimensionError(f"k must be in [1, {d}], got {k}")
    for m in training:
        if m.n_channels != d:
            raise DimensionError(f"channel count mismatch: {m.n_channels} vs {d}")
    pooled = np.concatenate([m.data.T.astype(np.float64) for m in training], axis=0)
    n = pooled.shape[0]
    if n < 2:
        raise ValidationError("pca_fit needs at least two pooled frames")
    mean = pooled.mean(axis=0)
    centered = pooled - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    explained = (s[:k] ** 2) / (n - 1)
    return PcaModel(mean, components, explained)


def pca_apply(model: PcaModel, m: SignalMatrix) -> SignalMatrix:
    """Project centered frames onto the component basis (k channels)."""
    if m.n_channels != model.n_channels:
        raise DimensionError(
            f"matrix has {m.n_channels} channels, PCA model has {model.n_channels}"
        )
    z = (m.data.T.astype(np.float64) - model.mean) @ model.components.T
    return SignalMatrix(z.T, m.sample_rate_hz, dict(m.meta))


def pca_reconstruct(model: PcaModel, projected: SignalMatrix) -> SignalMatrix:
    """Inverse projection back to the original channel space."""
    if projected.n_channels != model.n_components:
        raise DimensionError(
            f"matrix has {projected.n_channels} channels, PCA model has {model.n_components} components"
        )
    x = projected.data.T.astype(np.float64) @ model.components + model.mean
    return SignalMatrix(x.T, projected.sample_rate_hz, dict(projected.meta))


@dataclass(frozen=True)
class FeatureTransform:
    """Affine feature-space map ``y' = (y - shift) @ matrix``.

    Represents any composition of z-scoring and PCA projection as a single
    affine transform, which lets cross-product accumulators be re-expressed in
    the transformed target space without touching raw frames again.
    """

    shift: np.ndarray  # (d,)
    matrix: np.ndarray  # (d, k)

    @property
    def in_dim(self) -> int:
        return self.shift.size

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, d: int) -> "FeatureTransform":
        return cls(np.zeros(d), np.eye(d))

    @classmethod
    def from_models(cls, d: int, zscore: ZScoreModel | None, pca: PcaModel | None) -> "FeatureTransform":
        """Compose optional z-scoring followed by optional PCA (fit in z-space)."""
        if zscore is None and pca is None:
            return cls.identity(d)
        if pca is None:
            return cls(zscore.mean.copy(), np.diag(1.0 / zscore.std))
        if zscore is None:
            return cls(pca.mean.copy(), pca.components.T.copy())
        shift = zscore.mean + pca.mean * zscore.std
        matrix = (pca.components / zscore.std[np.newaxis, :]).T
        return cls(shift, matrix)

    def apply(self, m: SignalMatrix) -> SignalMatrix:
        if m.n_channels != self.in_dim:
            raise DimensionError(f"matrix has {m.n_channels} channels, transform expects {self.in_dim}")
        out = (m.data.T.astype(np.float64) - self.shift) @ self.matrix
        return SignalMatrix(out.T, m.sample_rate_hz, dict(m.meta))

    def transform_cross(self, cross: np.ndarray, col_sums: np.ndarray) -> np.ndarray:
        """Map ``D^T Y`` computed on raw targets into the transformed space."""
        return (cross - np.outer(col_sums, self.shift)) @ self.matrix

    def transform_mean(self, target_mean: np.ndarray) -> np.ndarray:
        return (target_mean - self.shift) @ self.matrix


def fit_feature_transform(
    training: list[SignalMatrix], zscore: bool = True, pca_k: int | None = None
) -> FeatureTransform:
    """Fit the configured conditioning chain on pooled training features."""
    if not training:
        raise ValidationError("fit_feature_transform needs training matrices")
    d = training[0].n_channels
    zs = zscore_fit(training) if zscore else None
    pca = None
    if pca_k is not None and pca_k < d:
        pool = [zscore_apply(zs, m) for m in training] if zs is not None else list(training)
        pca = pca_fit(pool, pca_k)
    return FeatureTransform.from_models(d, zs, pca)
