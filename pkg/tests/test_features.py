"""Envelope, mel spectrogram, resampling, z-scoring, and PCA."""

import numpy as np
import pytest

from aadkit import (
    MelConfig,
    SignalMatrix,
    Waveform,
    envelope,
    mel_spectrogram,
    pca_apply,
    pca_fit,
    pca_reconstruct,
    resample_linear,
    zscore_apply,
    zscore_fit,
)
from aadkit.errors import DimensionError, UnsupportedRateError, ValidationError
from aadkit.features import FeatureTransform, fit_feature_transform

FS = 16000.0


def tone(freq, duration_s, amp=1.0, fs=FS):
    t = np.arange(int(duration_s * fs)) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq * t), fs)


# --- envelope ---------------------------------------------------------------


def test_envelope_zero_input():
    env = envelope(Waveform(np.zeros(16000), FS), 100.0)
    assert env.n_channels == 1 and env.n_frames == 100
    np.testing.assert_array_equal(env.data, 0.0)


def test_envelope_sine_mean_abs():
    env = envelope(tone(1000.0, 2.0), 100.0).data[0]
    interior = env[15:-15]  # one filter length (401 taps ~ 0.025 s) clear of edges
    np.testing.assert_allclose(interior, 2.0 / np.pi, atol=1e-2)


def test_envelope_dc_identity():
    env = envelope(Waveform(np.full(16000, 0.5), FS), 100.0).data[0]
    np.testing.assert_allclose(env[5:-5], 0.5, atol=1e-6)


def test_envelope_sign_flip_invariance():
    w = tone(440.0, 1.0)
    flipped = Waveform(-w.samples, FS)
    np.testing.assert_array_equal(envelope(w).data, envelope(flipped).data)


def test_envelope_interior_nonnegative():
    rng = np.random.default_rng(0)
    env = envelope(Waveform(rng.standard_normal(16000), FS)).data[0]
    assert (env[5:-5] >= 0).all()


def test_envelope_rate_must_divide():
    with pytest.raises(UnsupportedRateError):
        envelope(tone(440.0, 1.0), 3000.0)


# --- mel spectrogram --------------------------------------------------------


def test_mel_silence_is_log_floor():
    m = mel_spectrogram(Waveform(np.zeros(16000), FS))
    assert m.n_channels == 28
    assert m.sample_rate_hz == 100.0
    np.testing.assert_allclose(m.data, np.log(1e-6), atol=1e-9)


def test_mel_frame_count_two_seconds():
    m = mel_spectrogram(Waveform(np.zeros(32000), FS))
    assert abs(m.n_frames - 200) <= 1


def test_mel_tone_peaks_in_nearest_band():
    # independent filterbank geometry: HTK mel centers recomputed here
    cfg = MelConfig()
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10 ** (m / 2595.0) - 1.0)
    centers = inv(np.linspace(mel(cfg.fmin_hz), mel(cfg.fmax_hz), cfg.n_bands + 2))[1:-1]
    expected_band = int(np.argmin(np.abs(centers - 1000.0)))
    m = mel_spectrogram(tone(1000.0, 1.0))
    per_frame_max = np.argmax(m.data, axis=0)
    interior = per_frame_max[3:-3]
    assert (interior == expected_band).all()


def test_mel_shift_covariance():
    rng = np.random.default_rng(1)
    base = rng.standard_normal(16000)
    hop = 160
    a = mel_spectrogram(Waveform(base, FS))
    b = mel_spectrogram(Waveform(np.concatenate([np.zeros(hop), base[:-hop]]), FS))
    # shifting by one hop shifts the output by one frame on interior frames
    np.testing.assert_allclose(a.data[:, 5:60], b.data[:, 6:61], atol=1e-5)


def test_mel_too_short():
    with pytest.raises(ValidationError, match="short"):
        mel_spectrogram(Waveform(np.zeros(399), FS))


# --- linear resampling ------------------------------------------------------


def test_resample_doubling():
    m = SignalMatrix(np.array([[0.0, 1.0]]), 50.0)
    out = resample_linear(m, 100.0)
    np.testing.assert_allclose(out.data, [[0.0, 0.5, 1.0]])
    assert out.sample_rate_hz == 100.0


def test_resample_hand_example():
    m = SignalMatrix(np.array([[0.0, 2.0, 4.0, 6.0]]), 50.0)
    np.testing.assert_allclose(resample_linear(m, 100.0).data, [[0, 1, 2, 3, 4, 5, 6]])


def test_resample_constant():
    m = SignalMatrix(np.full((2, 7), 3.25), 50.0)
    out = resample_linear(m, 100.0)
    assert out.n_frames == 13
    np.testing.assert_array_equal(out.data, 3.25)


def test_resample_affine_exact():
    t = np.arange(11) / 50.0
    m = SignalMatrix((2.5 * t - 1.0)[np.newaxis, :], 50.0)
    out = resample_linear(m, 200.0)
    t_out = np.arange(out.n_frames) / 200.0
    np.testing.assert_allclose(out.data[0], 2.5 * t_out - 1.0, atol=1e-12)


def test_resample_rejects_downsampling():
    with pytest.raises(UnsupportedRateError):
        resample_linear(SignalMatrix(np.zeros((1, 10)), 100.0), 50.0)


# --- z-scoring ---------------------------------------------------------------


def test_zscore_fit_apply_normalizes():
    rng = np.random.default_rng(2)
    m = SignalMatrix(rng.standard_normal((3, 400)) * 5 + 2, 100.0)
    model = zscore_fit([m])
    out = zscore_apply(model, m)
    np.testing.assert_allclose(out.data.mean(axis=1), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.data.std(axis=1), 1.0, atol=1e-6)


def test_zscore_constant_channel_floored():
    m = SignalMatrix(np.full((1, 50), 7.0), 100.0)
    model = zscore_fit([m])
    assert model.std[0] == pytest.approx(1e-8)
    np.testing.assert_array_equal(zscore_apply(model, m).data, 0.0)


def test_zscore_hand_example():
    m = SignalMatrix(np.array([[1.0, 3.0]]), 100.0)
    model = zscore_fit([m])
    assert model.mean[0] == 2.0 and model.std[0] == 1.0  # population std
    np.testing.assert_allclose(zscore_apply(model, m).data, [[-1.0, 1.0]])


def test_zscore_channel_mismatch():
    model = zscore_fit([SignalMatrix(np.zeros((2, 10)), 100.0)])
    with pytest.raises(DimensionError):
        zscore_apply(model, SignalMatrix(np.zeros((3, 10)), 100.0))


# --- PCA ---------------------------------------------------------------------


def test_pca_rank_one_data():
    rng = np.random.default_rng(3)
    c1 = rng.standard_normal(300)
    m = SignalMatrix(np.stack([c1, 2.0 * c1]), 100.0)
    model = pca_fit([m], k=1)
    assert model.explained_variance[0] > 0
    recon = pca_reconstruct(model, pca_apply(model, m))
    np.testing.assert_allclose(recon.data, m.data, atol=1e-8)


def test_pca_complete_basis_reconstructs():
    rng = np.random.default_rng(4)
    m = SignalMatrix(rng.standard_normal((4, 200)), 100.0)
    model = pca_fit([m], k=4)
    recon = pca_reconstruct(model, pca_apply(model, m))
    np.testing.assert_allclose(recon.data, m.data, atol=1e-6)


def test_pca_matches_eigendecomposition_oracle():
    rng = np.random.default_rng(5)
    frames = rng.standard_normal((500, 5)) @ rng.standard_normal((5, 5))
    m = SignalMatrix(frames.T, 100.0)
    model = pca_fit([m], k=3)
    # oracle: eigendecomposition of the sample covariance
    cov = np.cov(frames.T, ddof=1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    np.testing.assert_allclose(model.explained_variance, evals[order][:3], atol=1e-6)
    for i in range(3):
        v = evecs[:, order[i]]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        np.testing.assert_allclose(model.components[i], v, atol=1e-6)


def test_pca_invariants():
    rng = np.random.default_rng(6)
    mats = [SignalMatrix(rng.standard_normal((6, 150)), 100.0) for _ in range(3)]
    model = pca_fit(mats, k=4)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(4), atol=1e-8)
    assert (np.diff(model.explained_variance) <= 1e-12).all()
    projected = np.concatenate([pca_apply(model, m).data.T for m in mats], axis=0)
    cov = np.cov(projected.T, ddof=1)
    np.testing.assert_allclose(cov, np.diag(model.explained_variance), atol=1e-6)


def test_pca_k_too_large():
    with pytest.raises(DimensionError):
        pca_fit([SignalMatrix(np.zeros((2, 10)), 100.0)], k=3)


# --- feature transform composition -------------------------------------------


def test_feature_transform_matches_explicit_chain():
    rng = np.random.default_rng(7)
    mats = [SignalMatrix(rng.standard_normal((5, 300)) * 3 + 1, 100.0) for _ in range(2)]
    tf = fit_feature_transform(mats, zscore=True, pca_k=3)
    model_z = zscore_fit(mats)
    zs = [zscore_apply(model_z, m) for m in mats]
    model_p = pca_fit(zs, k=3)
    expected = pca_apply(model_p, zs[0])
    np.testing.assert_allclose(tf.apply(mats[0]).data, expected.data, atol=1e-10)


def test_feature_transform_cross_products_consistent():
    """The accumulator-side transform equals transforming frames directly."""
    rng = np.random.default_rng(8)
    design = rng.standard_normal((100, 4))
    target = rng.standard_normal((100, 5)) * 2 + 3
    mats = [SignalMatrix(target.T, 100.0)]
    tf = fit_feature_transform(mats, zscore=True, pca_k=2)
    direct = design.T @ ((target - tf.shift) @ tf.matrix)
    via_accum = tf.transform_cross(design.T @ target, design.sum(axis=0))
    np.testing.assert_allclose(via_accum, direct, atol=1e-9)
