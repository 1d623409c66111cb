"""Command-line interface.

Subcommands: features, pca, synth, decode, layer-sweep, switch,
forward-compare.  Every report path writes deterministic JSON/CSV plus a
rendered figure; outputs are written atomically (temp file + rename).
Fold-level parallelism is capped by the AADKIT_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path


from . import __version__
from .core import LagWindow, load_manifest, read_matrix_file, write_matrix_file
from .errors import AadkitError
from .features import (
    MelConfig,
    envelope,
    fit_feature_transform,
    mel_spectrogram,
    read_wav,
)
from .linmap import (
    DEFAULT_BACKWARD_LAG,
    DEFAULT_FORWARD_LAG,
    DEFAULT_LAMBDA,
    RidgeConfig,
    save_filter,
)
from .pipeline import (
    decode_dataset,
    forward_compare,
    layer_feature_names,
    run_layer_sweep,
    run_switch,
)
from .synth import SynthConfig, gen_dataset

DEFAULT_WINDOWS = (0.5, 1.0, 2.0, 4.0, 8.0)


def _write_bytes_atomic(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _write_bytes_atomic(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _write_bytes_atomic(path, buf.getvalue().encode())


def _add_common(parser: argparse.ArgumentParser, *, forward: bool = False) -> None:
    lag = DEFAULT_FORWARD_LAG if forward else DEFAULT_BACKWARD_LAG
    parser.add_argument("--manifest", required=True, help="experiment manifest JSON")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                        help="trace-normalized ridge strength")
    parser.add_argument("--lag-min-ms", type=float, default=lag.lag_min_ms)
    parser.add_argument("--lag-max-ms", type=float, default=lag.lag_max_ms)
    parser.add_argument("--windows", type=float, nargs="+", default=list(DEFAULT_WINDOWS),
                        help="window durations in seconds")
    parser.add_argument("--hop", type=float, default=0.1, help="window hop in seconds")
    if forward:
        parser.add_argument("--zscore", action="store_true",
                            help="z-score features per fold (forces the slower fold-wise design path)")
        parser.add_argument("--pca-k", type=int, default=100,
                            help="PCA pre-reduction for features wider than this many channels")
    else:
        parser.add_argument("--no-zscore", action="store_true", help="skip per-fold feature z-scoring")
        parser.add_argument("--pca-k", type=int, default=None, help="per-fold PCA components")
    parser.add_argument("--seed", type=int, default=0, help="seed recorded in outputs")


def _ridge(args, rate_hz: float = 100.0) -> RidgeConfig:
    return RidgeConfig(lam=args.lam, lag=LagWindow(args.lag_min_ms, args.lag_max_ms, rate_hz))


def _threads() -> int | None:
    raw = os.environ.get("AADKIT_THREADS")
    if raw is None:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        return None


def _cmd_features(args) -> int:
    wav = read_wav(args.input)
    if args.kind == "envelope":
        m = envelope(wav, args.rate)
    else:
        cfg = MelConfig(
            n_bands=args.bands,
            frame_len_ms=args.frame_ms,
            hop_ms=args.hop_ms,
            fmin_hz=args.fmin,
            fmax_hz=args.fmax,
            log_floor=args.log_floor,
        )
        m = mel_spectrogram(wav, cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_file(m.with_meta(source=str(args.input)), out)
    print(f"wrote {out} ({m.n_channels} ch x {m.n_frames} frames @ {m.sample_rate_hz:g} Hz)")
    return 0


def _cmd_pca(args) -> int:
    mats = [read_matrix_file(p) for p in args.inputs]
    tf = fit_feature_transform(mats, zscore=not args.no_zscore, pca_k=args.k)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path, m in zip(args.inputs, mats):
        reduced = tf.apply(m).with_meta(pca_k=str(args.k))
        target = out_dir / Path(path).name
        write_matrix_file(reduced, target)
        print(f"wrote {target} ({reduced.n_channels} ch)")
    return 0


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        n_trials=args.trials,
        trial_s=args.trial_s,
        n_electrodes=args.electrodes,
        n_feature_channels=args.feature_channels,
        attended_gain=args.attended_gain,
        unattended_gain=args.unattended_gain,
        noise_std=args.noise_std,
        ar_coeff=args.ar_coeff,
    )
    manifest, _ = gen_dataset(cfg, args.out)
    print(f"wrote {manifest}")
    return 0


def _cmd_decode(args) -> int:
    dataset = load_manifest(args.manifest)
    report, folds = decode_dataset(
        dataset,
        args.feature,
        _ridge(args),
        durations_s=args.windows,
        hop_s=args.hop,
        zscore=not args.no_zscore,
        pca_k=args.pca_k,
        per_trial_average=args.per_trial,
        threads=_threads(),
    )
    out = Path(args.out)
    _write_json(out / "decode_report.json", report.to_dict())
    if args.save_filters:
        fdir = out / "filters"
        fdir.mkdir(parents=True, exist_ok=True)
        for f in folds:
            save_filter(f.filter_attended, fdir / f"{f.held_out_trial_id}.attended.ftr")
            save_filter(f.filter_unattended, fdir / f"{f.held_out_trial_id}.unattended.ftr")
    from .plots import plot_decoding_report

    plot_decoding_report(report, out / "decode_accuracy.png")
    for d in sorted(report.accuracy):
        print(f"{args.feature}  {d:g} s: accuracy {report.accuracy[d]:.4f} "
              f"({report.n_windows[d]} windows)")
    return 0


def _cmd_layer_sweep(args) -> int:
    dataset = load_manifest(args.manifest)
    layers = args.layers or layer_feature_names(dataset, args.layer_prefix)
    rows = run_layer_sweep(
        dataset,
        layers,
        _ridge(args),
        durations_s=args.windows,
        hop_s=args.hop,
        zscore=not args.no_zscore,
        pca_k=args.pca_k,
        threads=_threads(),
    )
    out = Path(args.out)
    _write_csv(
        out / "layer_sweep.csv",
        ["layer", "duration_s", "accuracy", "n_windows"],
        [(r.layer, f"{r.duration_s:g}", f"{r.accuracy:.6f}", r.n_windows) for r in rows],
    )
    from .plots import plot_layer_sweep

    plot_layer_sweep(rows, out / "layer_sweep.png")
    print(f"wrote {out / 'layer_sweep.csv'} ({len(rows)} rows)")
    return 0


def _cmd_switch(args) -> int:
    dataset = load_manifest(args.manifest)
    run = run_switch(
        dataset,
        args.feature,
        _ridge(args),
        durations_s=args.windows,
        hop_s=args.hop,
        segment_s=args.segment_s,
        trace_duration_s=args.trace_window,
        zscore=not args.no_zscore,
        pca_k=args.pca_k,
        threads=_threads(),
    )
    out = Path(args.out)
    _write_csv(
        out / "ami_trace.csv",
        ["window_center_s", "ami_scaled"],
        [(f"{t:.6f}", f"{v:.8f}") for t, v in zip(run.trace.window_centers_s, run.trace.ami)],
    )
    _write_csv(
        out / "transition_times.csv",
        ["duration_s", "mean_transition_s", "n_detected", "n_switch_trials"],
        [
            (f"{d:g}", f"{run.mean_transition[d]:.6f}", run.n_detected[d], len(run.pairing))
            for d in sorted(run.mean_transition)
        ],
    )
    _write_json(out / "switch_pairing.json", run.pairing)
    from .plots import plot_switch

    plot_switch(run, out / "switch.png")
    for d in sorted(run.mean_transition):
        print(f"{d:g} s window: mean transition {run.mean_transition[d]:.3f} s "
              f"({run.n_detected[d]}/{len(run.pairing)} detected)")
    return 0


def _cmd_forward_compare(args) -> int:
    dataset = load_manifest(args.manifest)
    result = forward_compare(
        dataset,
        args.feature_a,
        args.feature_b,
        _ridge(args),
        alpha=args.alpha,
        pca_k=args.pca_k,
        zscore=args.zscore,
        threads=_threads(),
    )
    imp = result.improvement
    out = Path(args.out)
    _write_csv(
        out / "improvement.csv",
        ["electrode", "delta_r", "significant"],
        [
            (e, f"{imp.delta_r[e]:.8f}", int(imp.delta_r[e] != 0.0))
            for e in range(imp.delta_r.size)
        ],
    )
    _write_json(
        out / "forward_compare.json",
        {
            "feature_a": result.feature_a,
            "feature_b": result.feature_b,
            "alpha": imp.alpha,
            "frac_better_a": imp.frac_better_a,
            "frac_better_b": imp.frac_better_b,
            "paired_test_unit": "cross-validation fold",
        },
    )
    from .plots import plot_improvement

    plot_improvement(imp, out / "improvement.png")
    print(f"better {result.feature_a}: {imp.frac_better_a:.1%}   "
          f"better {result.feature_b}: {imp.frac_better_b:.1%}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aadkit",
        description="Auditory attention decoding by stimulus-representation reconstruction",
    )
    parser.add_argument("--version", action="version", version=f"aadkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract envelope or mel features from WAV")
    p.add_argument("kind", choices=["envelope", "mel"])
    p.add_argument("--in", dest="input", required=True, help="input WAV (16 kHz mono PCM)")
    p.add_argument("--out", dest="output", required=True, help="output FTR1 path")
    p.add_argument("--rate", type=float, default=100.0, help="envelope output rate")
    p.add_argument("--bands", type=int, default=28)
    p.add_argument("--frame-ms", type=float, default=25.0)
    p.add_argument("--hop-ms", type=float, default=10.0)
    p.add_argument("--fmin", type=float, default=50.0)
    p.add_argument("--fmax", type=float, default=8000.0)
    p.add_argument("--log-floor", type=float, default=1e-6)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("pca", help="fit PCA on feature files and write reduced copies")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="input FTR1 files")
    p.add_argument("-k", type=int, required=True, help="number of components")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-zscore", action="store_true")
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=28)
    p.add_argument("--trial-s", type=float, default=60.0)
    p.add_argument("--electrodes", type=int, default=32)
    p.add_argument("--feature-channels", type=int, default=28)
    p.add_argument("--attended-gain", type=float, default=1.0)
    p.add_argument("--unattended-gain", type=float, default=0.3)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--ar-coeff", type=float, default=0.95)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("decode", help="leave-one-out attention decoding report")
    _add_common(p)
    p.add_argument("--feature", required=True)
    p.add_argument("--per-trial", action="store_true",
                   help="average per-trial accuracies instead of pooling windows")
    p.add_argument("--save-filters", action="store_true", help="write per-fold filters")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("layer-sweep", help="decode once per layerNN feature")
    _add_common(p)
    p.add_argument("--layers", nargs="*", default=None, help="explicit layer feature names")
    p.add_argument("--layer-prefix", default="layer")
    p.set_defaults(func=_cmd_layer_sweep)

    p = sub.add_parser("switch", help="attention-switch simulation and transition times")
    _add_common(p)
    p.add_argument("--feature", required=True)
    p.add_argument("--segment-s", type=float, default=10.0)
    p.add_argument("--trace-window", type=float, default=4.0,
                   help="window duration of the emitted AMI trace")
    p.set_defaults(func=_cmd_switch)

    p = sub.add_parser("forward-compare", help="per-electrode forward-model improvement map")
    _add_common(p, forward=True)
    p.add_argument("--feature-a", required=True)
    p.add_argument("--feature-b", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=_cmd_forward_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AadkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
