"""Synthetic dataset generator: determinism, AR statistics, ground truth."""

import filecmp

import numpy as np
import pytest

from aadkit import (
    GroundTruth,
    LayerGains,
    SynthConfig,
    Talker,
    gen_dataset,
    gen_talker_features,
    load_manifest,
    read_matrix_file,
)
from aadkit.errors import ValidationError
from aadkit.linmap import RidgeConfig, apply_filter, loo_cv, loo_forward
from aadkit.synth import NEURAL_RATE_HZ

SMALL = dict(n_trials=4, trial_s=10.0, n_electrodes=6, n_feature_channels=4)


def test_features_deterministic_per_seed():
    a = gen_talker_features(7, 3, 5.0, 0.9)
    b = gen_talker_features(7, 3, 5.0, 0.9)
    np.testing.assert_array_equal(a.data, b.data)
    c = gen_talker_features(8, 3, 5.0, 0.9)
    assert not np.array_equal(a.data, c.data)


def lag1_autocorr(x):
    x = x - x.mean()
    return float(x[:-1] @ x[1:] / np.sqrt((x[:-1] @ x[:-1]) * (x[1:] @ x[1:])))


def test_white_features_uncorrelated():
    m = gen_talker_features(1, 2, 60.0, 0.0)
    for ch in range(2):
        assert abs(lag1_autocorr(m.data[ch].astype(np.float64))) < 0.05


def test_ar_features_lag_one_autocorrelation():
    m = gen_talker_features(2, 2, 60.0, 0.95)
    for ch in range(2):
        assert lag1_autocorr(m.data[ch].astype(np.float64)) == pytest.approx(0.95, abs=0.03)


def test_ar_features_unit_variance():
    m = gen_talker_features(3, 4, 60.0, 0.95)
    assert m.data.std() == pytest.approx(1.0, abs=0.15)


def test_gen_dataset_byte_identical(tmp_path):
    cfg = SynthConfig(seed=5, **SMALL)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    gen_dataset(cfg, d1)
    gen_dataset(cfg, d2)
    names = sorted(p.name for p in d1.iterdir())
    assert names == sorted(p.name for p in d2.iterdir())
    for name in names:
        assert filecmp.cmp(d1 / name, d2 / name, shallow=False), name


def test_gen_dataset_manifest_valid_and_labeled(tmp_path):
    cfg = SynthConfig(seed=6, **SMALL)
    manifest, truth = gen_dataset(cfg, tmp_path)
    ds = load_manifest(manifest)
    assert len(ds.trials) == 4
    assert [t.attended for t in ds.trials] == [
        Talker.TALKER1,
        Talker.TALKER2,
        Talker.TALKER1,
        Talker.TALKER2,
    ]
    assert ds.n_electrodes == 6
    assert ds.feature_names() == ["synth"]
    assert truth.labels == tuple(t.attended for t in ds.trials)


def test_ground_truth_round_trip(tmp_path):
    cfg = SynthConfig(seed=7, **SMALL)
    _, truth = gen_dataset(cfg, tmp_path)
    back = GroundTruth.load(tmp_path)
    assert back.seed == truth.seed
    assert back.gains == truth.gains
    np.testing.assert_array_equal(back.filters["synth"].weights, truth.filters["synth"].weights)
    assert back.labels == truth.labels


def test_neural_matches_planted_map_when_noiseless(tmp_path):
    cfg = SynthConfig(seed=8, noise_std=0.0, unattended_gain=0.0, **SMALL)
    manifest, truth = gen_dataset(cfg, tmp_path)
    ds = load_manifest(manifest)
    trial = ds.trials[0]
    att = read_matrix_file(trial.talker1_features["synth"])  # trial 0 attends talker 1
    expected = apply_filter(truth.filters["synth"], att)
    neural = trial.load_neural()
    np.testing.assert_allclose(neural.data, expected.data.astype(np.float32), atol=1e-6)


def test_forward_recovery_on_small_noiseless(tmp_path):
    cfg = SynthConfig(seed=9, noise_std=0.0, unattended_gain=0.0, n_trials=4, trial_s=12.0,
                      n_electrodes=6, n_feature_channels=4)
    manifest, _ = gen_dataset(cfg, tmp_path)
    ds = load_manifest(manifest)
    folds = loo_forward(ds, "synth", RidgeConfig(lam=1e-6, lag=cfg.forward_lag))
    for f in folds:
        assert (f.r_per_electrode > 0.999).all()


def test_layered_dataset(tmp_path):
    cfg = SynthConfig(
        seed=10,
        layers=(
            LayerGains("layer00", 1.0, 0.5),
            LayerGains("layer01", 1.0, 0.25),
        ),
        **SMALL,
    )
    manifest, truth = gen_dataset(cfg, tmp_path)
    ds = load_manifest(manifest)
    assert ds.feature_names() == ["layer00", "layer01"]
    assert set(truth.filters) == {"layer00", "layer01"}
    assert truth.gains["layer01"] == (1.0, 0.25)


def test_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(n_trials=0)
    with pytest.raises(ValidationError):
        SynthConfig(ar_coeff=1.0)
    with pytest.raises(ValidationError):
        SynthConfig(noise_std=-0.1)
    with pytest.raises(ValidationError):
        gen_talker_features(0, 2, 0.5, 0.9)


def test_trial_frame_count(tmp_path):
    cfg = SynthConfig(seed=11, **SMALL)
    manifest, _ = gen_dataset(cfg, tmp_path)
    ds = load_manifest(manifest)
    neural = ds.trials[0].load_neural()
    assert neural.n_frames == int(10.0 * NEURAL_RATE_HZ)
    assert neural.sample_rate_hz == NEURAL_RATE_HZ


def _pooled_accuracy(cfg, durations, tmp_root):
    from aadkit.decoder import WindowSpec, classify_and_score

    out = tmp_root / f"s{cfg.seed}n{cfg.noise_std}b{cfg.unattended_gain}"
    manifest, _ = gen_dataset(cfg, out)
    ds = load_manifest(manifest)
    folds = loo_cv(ds, "synth", RidgeConfig())
    rep = classify_and_score(folds, ds, "synth", [WindowSpec(d) for d in durations])
    return {d: (rep.accuracy[d], rep.n_windows[d]) for d in durations}


def test_snr_monotonicity(tmp_path):
    """Decoding accuracy never improves with sensor noise (20 seeds pooled).

    Tested with the unattended stream silent so sigma is the only noise axis;
    4 s windows saturate at this scale (tied at 1.0), so the 0.5 s windows
    carry the informative part of the trend.
    """
    sigmas = (0.0, 0.5, 1.0, 2.0, 4.0)
    pooled = {d: [] for d in (0.5, 4.0)}
    for sigma in sigmas:
        sums = {0.5: [0.0, 0], 4.0: [0.0, 0]}
        for seed in range(20):
            cfg = SynthConfig(
                seed=seed, noise_std=sigma, unattended_gain=0.0,
                n_trials=4, trial_s=10.0, n_electrodes=8, n_feature_channels=6,
            )
            out = _pooled_accuracy(cfg, (0.5, 4.0), tmp_path)
            for d in (0.5, 4.0):
                sums[d][0] += out[d][0] * out[d][1]
                sums[d][1] += out[d][1]
        for d in (0.5, 4.0):
            pooled[d].append(sums[d][0] / sums[d][1])
    for d in (0.5, 4.0):
        acc = pooled[d]
        assert all(b <= a for a, b in zip(acc, acc[1:])), (d, acc)
    assert pooled[0.5][-1] < pooled[0.5][0]  # the trend is not vacuous


def test_contrast_monotonicity(tmp_path):
    """Accuracy grows with the attended/unattended gain contrast (8 seeds)."""
    betas = (1.0, 0.6, 0.3, 0.0)
    acc = []
    for beta in betas:
        c = t = 0.0
        for seed in range(8):
            cfg = SynthConfig(
                seed=seed, unattended_gain=beta,
                n_trials=6, trial_s=24.0, n_electrodes=12, n_feature_channels=10,
            )
            out = _pooled_accuracy(cfg, (4.0,), tmp_path)
            c += out[4.0][0] * out[4.0][1]
            t += out[4.0][1]
        acc.append(c / t)
    assert all(b >= a for a, b in zip(acc, acc[1:])), acc
    assert acc[-1] - acc[0] > 0.3  # beta=0 decodes far above the alpha==beta floor
