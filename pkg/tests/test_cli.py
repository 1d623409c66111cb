"""End-to-end CLI behavior: files in, reports and figures out."""

import csv
import json

import numpy as np
import pytest

from aadkit import SynthConfig, gen_dataset, read_matrix_file
from aadkit.cli import main
from aadkit.features import Waveform, write_wav
from aadkit.synth import LayerGains

SMALL = dict(n_trials=4, trial_s=12.0, n_electrodes=6, n_feature_channels=4)


@pytest.fixture()
def wav_path(tmp_path):
    rng = np.random.default_rng(0)
    t = np.arange(16000) / 16000.0
    wave = 0.5 * np.sin(2 * np.pi * 440.0 * t) + 0.05 * rng.standard_normal(16000)
    path = tmp_path / "a.wav"
    write_wav(path, Waveform(wave, 16000.0))
    return path


def test_features_mel(tmp_path, wav_path):
    out = tmp_path / "a.mel.ftr"
    rc = main(["features", "mel", "--bands", "28", "--in", str(wav_path), "--out", str(out)])
    assert rc == 0
    m = read_matrix_file(out)
    assert m.n_channels == 28 and m.sample_rate_hz == 100.0


def test_features_envelope(tmp_path, wav_path):
    out = tmp_path / "a.env.ftr"
    assert main(["features", "envelope", "--in", str(wav_path), "--out", str(out)]) == 0
    m = read_matrix_file(out)
    assert m.n_channels == 1 and m.n_frames == 100


def test_features_missing_input(tmp_path, capsys):
    rc = main(["features", "envelope", "--in", str(tmp_path / "nope.wav"), "--out", str(tmp_path / "x.ftr")])
    assert rc != 0
    assert "nope.wav" in capsys.readouterr().err


def test_pca_command(tmp_path):
    cfg = SynthConfig(seed=1, **SMALL)
    gen_dataset(cfg, tmp_path / "ds")
    inputs = sorted(str(p) for p in (tmp_path / "ds").glob("*.t1.synth.ftr"))
    rc = main(["pca", "--in", *inputs, "-k", "2", "--out", str(tmp_path / "red")])
    assert rc == 0
    reduced = read_matrix_file(tmp_path / "red" / "trial00.t1.synth.ftr")
    assert reduced.n_channels == 2


def test_synth_and_decode_noiseless(tmp_path, capsys):
    ds_dir = tmp_path / "ds"
    rc = main([
        "synth", "--out", str(ds_dir), "--seed", "3", "--trials", "4", "--trial-s", "12",
        "--electrodes", "6", "--feature-channels", "4",
        "--unattended-gain", "0", "--noise-std", "0",
    ])
    assert rc == 0
    out = tmp_path / "report"
    rc = main([
        "decode", "--manifest", str(ds_dir / "manifest.json"), "--feature", "synth",
        "--out", str(out), "--windows", "1", "2", "4", "--lambda", "1e-6",
    ])
    assert rc == 0
    report = json.loads((out / "decode_report.json").read_text())
    assert {w["duration_s"] for w in report["windows"]} == {1.0, 2.0, 4.0}
    for w in report["windows"]:
        assert w["accuracy"] == 1.0
    assert (out / "decode_accuracy.png").stat().st_size > 0


def test_decode_windows_subset(tmp_path):
    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=4, **SMALL), ds_dir)
    out = tmp_path / "report"
    rc = main([
        "decode", "--manifest", str(ds_dir / "manifest.json"), "--feature", "synth",
        "--out", str(out), "--windows", "4",
    ])
    assert rc == 0
    report = json.loads((out / "decode_report.json").read_text())
    assert [w["duration_s"] for w in report["windows"]] == [4.0]


def test_decode_missing_feature_names_it(tmp_path, capsys):
    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=5, **SMALL), ds_dir)
    rc = main([
        "decode", "--manifest", str(ds_dir / "manifest.json"), "--feature", "absent-name",
        "--out", str(tmp_path / "r"),
    ])
    assert rc == 1
    assert "absent-name" in capsys.readouterr().err


def test_decode_deterministic_reports(tmp_path):
    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=6, **SMALL), ds_dir)
    args = ["decode", "--manifest", str(ds_dir / "manifest.json"), "--feature", "synth",
            "--windows", "2", "4"]
    assert main([*args, "--out", str(tmp_path / "r1")]) == 0
    assert main([*args, "--out", str(tmp_path / "r2")]) == 0
    assert (tmp_path / "r1" / "decode_report.json").read_bytes() == (
        tmp_path / "r2" / "decode_report.json"
    ).read_bytes()


def test_decode_save_filters(tmp_path):
    from aadkit import load_filter

    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=7, **SMALL), ds_dir)
    out = tmp_path / "r"
    rc = main([
        "decode", "--manifest", str(ds_dir / "manifest.json"), "--feature", "synth",
        "--out", str(out), "--windows", "4", "--save-filters",
    ])
    assert rc == 0
    filt = load_filter(out / "filters" / "trial00.attended.ftr")
    assert filt.n_in == 6


def test_layer_sweep_ranks_contrast(tmp_path):
    ds_dir = tmp_path / "ds"
    layers = (
        LayerGains("layer00", 1.0, 0.8),
        LayerGains("layer01", 1.0, 0.2),  # twice the attended/unattended contrast
        LayerGains("layer02", 1.0, 0.8),
    )
    cfg = SynthConfig(seed=8, n_trials=6, trial_s=20.0, n_electrodes=8,
                      n_feature_channels=4, noise_std=0.5, layers=layers)
    gen_dataset(cfg, ds_dir)
    out = tmp_path / "sweep"
    rc = main([
        "layer-sweep", "--manifest", str(ds_dir / "manifest.json"), "--out", str(out),
        "--windows", "4",
    ])
    assert rc == 0
    with open(out / "layer_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    acc = {r["layer"]: float(r["accuracy"]) for r in rows}
    assert set(acc) == {"layer00", "layer01", "layer02"}
    assert acc["layer01"] >= max(acc["layer00"], acc["layer02"])
    assert (out / "layer_sweep.png").stat().st_size > 0


def test_layer_sweep_single_layer_rows(tmp_path):
    ds_dir = tmp_path / "ds"
    cfg = SynthConfig(seed=9, layers=(LayerGains("layer00", 1.0, 0.3),), **SMALL)
    gen_dataset(cfg, ds_dir)
    out = tmp_path / "sweep"
    rc = main([
        "layer-sweep", "--manifest", str(ds_dir / "manifest.json"), "--out", str(out),
        "--windows", "2", "4",
    ])
    assert rc == 0
    with open(out / "layer_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2  # one row per duration


def test_layer_sweep_no_layers_errors(tmp_path, capsys):
    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=10, **SMALL), ds_dir)  # feature named "synth"
    rc = main(["layer-sweep", "--manifest", str(ds_dir / "manifest.json"),
               "--out", str(tmp_path / "s")])
    assert rc == 1


def test_switch_command(tmp_path):
    ds_dir = tmp_path / "ds"
    cfg = SynthConfig(seed=11, n_trials=6, trial_s=20.0, n_electrodes=8,
                      n_feature_channels=6, unattended_gain=0.1, ar_coeff=0.8)
    gen_dataset(cfg, ds_dir)
    out = tmp_path / "switch"
    rc = main([
        "switch", "--manifest", str(ds_dir / "manifest.json"), "--feature", "synth",
        "--out", str(out), "--windows", "2", "4",
    ])
    assert rc == 0
    with open(out / "ami_trace.csv") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    assert header == ["window_center_s", "ami_scaled"]
    assert len(rows) > 50
    vals = np.array([[float(a), float(b)] for a, b in rows])
    assert np.abs(vals[:, 1]).max() <= 1.0 + 1e-9
    with open(out / "transition_times.csv") as fh:
        trows = list(csv.DictReader(fh))
    assert [r["duration_s"] for r in trows] == ["2", "4"]
    pairing = json.loads((out / "switch_pairing.json").read_text())
    assert len(pairing) == 6
    assert (out / "switch.png").stat().st_size > 0


def test_switch_all_too_short(tmp_path, capsys):
    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=12, **SMALL), ds_dir)  # 12 s trials < 2 * 10 s
    rc = main([
        "switch", "--manifest", str(ds_dir / "manifest.json"), "--feature", "synth",
        "--out", str(tmp_path / "s"),
    ])
    assert rc == 1
    assert "switch" in capsys.readouterr().err.lower()


def test_forward_compare_same_feature_zero_map(tmp_path):
    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=13, **SMALL), ds_dir)
    out = tmp_path / "fc"
    rc = main([
        "forward-compare", "--manifest", str(ds_dir / "manifest.json"),
        "--feature-a", "synth", "--feature-b", "synth", "--out", str(out),
    ])
    assert rc == 0
    summary = json.loads((out / "forward_compare.json").read_text())
    assert summary["frac_better_a"] == 0.0 and summary["frac_better_b"] == 0.0
    with open(out / "improvement.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(float(r["delta_r"]) == 0.0 for r in rows)
    assert (out / "improvement.png").stat().st_size > 0


def test_forward_compare_detects_driving_feature(tmp_path):
    ds_dir = tmp_path / "ds"
    layers = (
        LayerGains("layer00", 1.0, 0.3),   # drives the neural data
        LayerGains("layer01", 0.0, 0.0),   # present but disconnected
    )
    cfg = SynthConfig(seed=14, n_trials=6, trial_s=15.0, n_electrodes=8,
                      n_feature_channels=4, noise_std=0.1, layers=layers)
    gen_dataset(cfg, ds_dir)
    out = tmp_path / "fc"
    rc = main([
        "forward-compare", "--manifest", str(ds_dir / "manifest.json"),
        "--feature-a", "layer00", "--feature-b", "layer01", "--out", str(out),
    ])
    assert rc == 0
    summary = json.loads((out / "forward_compare.json").read_text())
    assert summary["frac_better_a"] >= 0.9
    assert summary["frac_better_b"] == 0.0


def test_forward_compare_missing_feature(tmp_path, capsys):
    ds_dir = tmp_path / "ds"
    gen_dataset(SynthConfig(seed=15, **SMALL), ds_dir)
    rc = main([
        "forward-compare", "--manifest", str(ds_dir / "manifest.json"),
        "--feature-a", "synth", "--feature-b", "nope", "--out", str(tmp_path / "x"),
    ])
    assert rc == 1
    assert "nope" in capsys.readouterr().err
