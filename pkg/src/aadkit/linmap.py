"""Spatiotemporal linear filters: lagged designs, ridge solving, and cross-validation.

A backward filter maps lagged neural channels to stimulus feature channels
(stimulus reconstruction); a forward filter maps lagged stimulus features to
per-electrode neural activity.  Both share one convolution form

    out[n, t] = bias[n] + sum_e sum_tau weights[n, e, tau] * in[e, t - tau]

with zero padding at sequence edges.  Training minimizes mean-squared error
with a trace-normalized ridge penalty on mean-centered designs, accumulated
Gram-matrix style so trials never have to be concatenated in memory and
leave-one-out folds reuse the totals.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import json
import numpy as np
import scipy.linalg

from .core import LagWindow, SignalMatrix, Talker, TrialRecord, read_matrix_file, write_matrix_file
from .errors import (
    AadkitError,
    DimensionError,
    MissingFeatureError,
    SingularityError,
    ValidationError,
)
from .features import FeatureTransform, fit_feature_transform

NEURAL_RATE_HZ = 100.0
DEFAULT_BACKWARD_LAG = LagWindow(-400.0, 100.0, NEURAL_RATE_HZ)
DEFAULT_FORWARD_LAG = LagWindow(0.0, 200.0, NEURAL_RATE_HZ)
DEFAULT_LAMBDA = 1e-3


def default_threads() -> int:
    """Fold-level parallelism cap; the AADKIT_THREADS env var overrides."""
    raw = os.environ.get("AADKIT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class Direction(Enum):
    BACKWARD = "backward"
    FORWARD = "forward"


@dataclass(frozen=True)
class SpatioTemporalFilter:
    weights: np.ndarray  # (n_out, n_in, n_lags)
    bias: np.ndarray  # (n_out,)
    lags: LagWindow
    direction: Direction

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 3:
            raise ValidationError(f"filter weights must be 3-D, got shape {w.shape}")
        if w.shape[2] != self.lags.n_lags:
            raise ValidationError(
                f"filter has {w.shape[2]} lag taps but the lag window implies {self.lags.n_lags}"
            )
        if b.shape != (w.shape[0],):
            raise ValidationError(f"bias shape {b.shape} does not match {w.shape[0]} output channels")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("filter weights/bias must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class RidgeConfig:
    """Ridge strength (trace-normalized, dimensionless) and lag window."""

    lam: float = DEFAULT_LAMBDA
    lag: LagWindow = DEFAULT_BACKWARD_LAG

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValidationError("lambda must be nonnegative")


@dataclass(frozen=True)
class LoadedTrial:
    """A trial with matrices in memory, restricted to one feature name."""

    trial_id: str
    attended: Talker
    neural: SignalMatrix
    feat1: SignalMatrix
    feat2: SignalMatrix

    @property
    def attended_feature(self) -> SignalMatrix:
        return self.feat1 if self.attended is Talker.TALKER1 else self.feat2

    @property
    def unattended_feature(self) -> SignalMatrix:
        return self.feat2 if self.attended is Talker.TALKER1 else self.feat1


def load_trial(record: TrialRecord, feature_name: str) -> LoadedTrial:
    if feature_name not in record.talker1_features:
        raise MissingFeatureError(
            f"trial '{record.trial_id}': feature '{feature_name}' not present"
        )
    return LoadedTrial(
        trial_id=record.trial_id,
        attended=record.attended,
        neural=record.load_neural(),
        feat1=read_matrix_file(record.talker1_features[feature_name]),
        feat2=read_matrix_file(record.talker2_features[feature_name]),
    )


def _as_loaded(trials: Sequence, feature_name: str) -> list[LoadedTrial]:
    out = []
    for t in trials:
        out.append(t if isinstance(t, LoadedTrial) else load_trial(t, feature_name))
    return out


def build_lagged_design(m: SignalMatrix, lag: LagWindow) -> np.ndarray:
    """Lagged design matrix of shape (n_frames, n_channels * n_lags).

    Column (e, tau) at row t holds ``m[e, t - tau]``; out-of-range samples are
    zero.  Columns are channel-major (all lags of channel 0, then channel 1...).
    """
    if abs(lag.rate_hz - m.sample_rate_hz) > 1e-9:
        raise ValidationError(
            f"lag window rate {lag.rate_hz} Hz does not match signal rate {m.sample_rate_hz} Hz"
        )
    shifts = lag.sample_shifts()
    x = np.asarray(m.data, dtype=np.float64)
    n_ch, n_frames = x.shape
    n_lags = shifts.size
    # built transposed so every shifted copy is contiguous; returned as a view
    out = np.zeros((n_ch * n_lags, n_frames))
    for e in range(n_ch):
        base = e * n_lags
        for j, s in enumerate(shifts):
            s = int(s)
            row = out[base + j]
            if s >= 0:
                if s < n_frames:
                    row[s:] = x[e, : n_frames - s]
            else:
                if -s < n_frames:
                    row[: n_frames + s] = x[e, -s:]
    return out.T


def _factorize(g_centered: np.ndarray, lam: float):
    p = g_centered.shape[0]
    reg = lam * np.trace(g_centered) / p
    a = g_centered + reg * np.eye(p)
    try:
        return scipy.linalg.cho_factor(a, check_finite=False)
    except np.linalg.LinAlgError as exc:
        if reg == 0.0:
            raise SingularityError(
                "normal equations are singular at lambda=0; use lambda > 0"
            ) from exc
        raise SingularityError(f"regularized system is not positive definite: {exc}") from exc


class _RidgeSystem:
    """Centered normal equations with a shared factorization for many targets."""

    def __init__(self, gram: np.ndarray, col_sums: np.ndarray, n_rows: int, lam: float):
        if n_rows < 2:
            raise ValidationError("ridge system needs at least two rows")
        self.n = n_rows
        self.dmean = col_sums / n_rows
        g_centered = gram - n_rows * np.outer(self.dmean, self.dmean)
        self._chol = _factorize(g_centered, lam)

    def solve(self, cross: np.ndarray, target_mean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cross_centered = cross - self.n * np.outer(self.dmean, target_mean)
        weights = scipy.linalg.cho_solve(self._chol, cross_centered, check_finite=False)
        bias = target_mean - self.dmean @ weights
        return weights, bias


def ridge_solve(design, targets, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve the trace-normalized ridge problem on mean-centered data.

    Returns ``(weights, bias)`` with ``weights`` of shape (p, m); the bias
    absorbs the column means, so the intercept is not penalized.
    """
    d = np.asarray(design, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, np.newaxis]
    if d.ndim != 2 or y.ndim != 2 or d.shape[0] != y.shape[0]:
        raise DimensionError(f"design {d.shape} and targets {y.shape} must share rows")
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    system = _RidgeSystem(d.T @ d, d.sum(axis=0), d.shape[0], lam)
    return system.solve(d.T @ y, y.mean(axis=0))


def _apply_design(design: np.ndarray, filt: SpatioTemporalFilter) -> SignalMatrix:
    flat = filt.weights.reshape(filt.n_out, -1).T  # (n_in * n_lags, n_out)
    out = design @ flat + filt.bias
    return SignalMatrix(out.T, filt.lags.rate_hz, {})


def apply_filter(filt: SpatioTemporalFilter, m: SignalMatrix) -> SignalMatrix:
    """Run the lagged convolution; output has the input's frame count."""
    if m.n_channels != filt.n_in:
        raise DimensionError(
            f"input has {m.n_channels} channels but the filter expects {filt.n_in}"
        )
    if abs(m.sample_rate_hz - filt.lags.rate_hz) > 1e-9:
        raise ValidationError(
            f"input rate {m.sample_rate_hz} Hz does not match filter lag rate {filt.lags.rate_hz} Hz"
        )
    return _apply_design(build_lagged_design(m, filt.lags), filt)


@dataclass
class _TrialStats:
    """Per-trial design/target cross products for one direction."""

    n: int
    col_sums: np.ndarray  # (p,)
    cross: dict  # key -> (p, m_raw)
    target_sums: dict  # key -> (m_raw,)


def _trial_stats(design: np.ndarray, targets: dict) -> _TrialStats:
    return _TrialStats(
        n=design.shape[0],
        col_sums=design.sum(axis=0),
        cross={k: design.T @ y for k, y in targets.items()},
        target_sums={k: y.sum(axis=0) for k, y in targets.items()},
    )


def _weights_to_filter(
    weights: np.ndarray, bias: np.ndarray, n_in: int, lag: LagWindow, direction: Direction
) -> SpatioTemporalFilter:
    n_out = weights.shape[1]
    w = weights.T.reshape(n_out, n_in, lag.n_lags)
    return SpatioTemporalFilter(weights=w, bias=bias, lags=lag, direction=direction)


def _frames(m: SignalMatrix) -> np.ndarray:
    return m.data.T.astype(np.float64)


def _check_alignment(trial: LoadedTrial) -> None:
    shapes = {trial.neural.n_frames, trial.feat1.n_frames, trial.feat2.n_frames}
    if len(shapes) != 1:
        raise ValidationError(f"trial '{trial.trial_id}': neural/feature frame counts differ")


def train_backward(
    trials: Sequence,
    feature_name: str,
    cfg: RidgeConfig | None = None,
    transform: FeatureTransform | None = None,
) -> tuple[SpatioTemporalFilter, SpatioTemporalFilter]:
    """Train the attended and unattended stimulus-reconstruction filters.

    Designs are built per trial from the neural recording (zero padding stops
    at trial boundaries, so trials never leak into each other) and accumulated;
    targets are each trial's attended / unattended feature matrices, optionally
    mapped through ``transform``.
    """
    cfg = cfg or RidgeConfig()
    loaded = _as_loaded(trials, feature_name)
    if not loaded:
        raise ValidationError("train_backward needs at least one trial")
    p = loaded[0].neural.n_channels * cfg.lag.n_lags
    d_feat = loaded[0].feat1.n_channels
    gram = np.zeros((p, p))
    col_sums = np.zeros(p)
    cross = {"att": np.zeros((p, d_feat)), "un": np.zeros((p, d_feat))}
    target_sums = {"att": np.zeros(d_feat), "un": np.zeros(d_feat)}
    n_total = 0
    for t in loaded:
        _check_alignment(t)
        design = build_lagged_design(t.neural, cfg.lag)
        gram += design.T @ design
        stats = _trial_stats(
            design, {"att": _frames(t.attended_feature), "un": _frames(t.unattended_feature)}
        )
        col_sums += stats.col_sums
        n_total += stats.n
        for key in cross:
            cross[key] += stats.cross[key]
            target_sums[key] += stats.target_sums[key]
    tf = transform or FeatureTransform.identity(d_feat)
    system = _RidgeSystem(gram, col_sums, n_total, cfg.lam)
    filters = []
    for key in ("att", "un"):
        c = tf.transform_cross(cross[key], col_sums)
        ym = tf.transform_mean(target_sums[key] / n_total)
        w, b = system.solve(c, ym)
        filters.append(
            _weights_to_filter(w, b, loaded[0].neural.n_channels, cfg.lag, Direction.BACKWARD)
        )
    return filters[0], filters[1]


def train_forward(
    trials: Sequence,
    feature_name: str,
    cfg: RidgeConfig | None = None,
    transform: FeatureTransform | None = None,
) -> SpatioTemporalFilter:
    """Train the forward filter: lagged attended features -> neural channels."""
    cfg = cfg or RidgeConfig(lag=DEFAULT_FORWARD_LAG)
    loaded = _as_loaded(trials, feature_name)
    if not loaded:
        raise ValidationError("train_forward needs at least one trial")
    tf = transform
    gram = cross = col_sums = target_sums = None
    n_total = 0
    in_channels = None
    for t in loaded:
        _check_alignment(t)
        feat = tf.apply(t.attended_feature) if tf is not None else t.attended_feature
        design = build_lagged_design(feat, cfg.lag)
        y = _frames(t.neural)
        if gram is None:
            in_channels = feat.n_channels
            p = design.shape[1]
            gram = np.zeros((p, p))
            col_sums = np.zeros(p)
            cross = np.zeros((p, y.shape[1]))
            target_sums = np.zeros(y.shape[1])
        gram += design.T @ design
        col_sums += design.sum(axis=0)
        cross += design.T @ y
        target_sums += y.sum(axis=0)
        n_total += design.shape[0]
    system = _RidgeSystem(gram, col_sums, n_total, cfg.lam)
    w, b = system.solve(cross, target_sums / n_total)
    return _weights_to_filter(w, b, in_channels, cfg.lag, Direction.FORWARD)


@dataclass(frozen=True)
class FoldResult:
    """One leave-one-out fold: reconstructions on the held-out trial.

    ``x_sp1`` / ``x_sp2`` are the held-out talkers' feature matrices mapped
    into the fold's transformed feature space, i.e. the space the filters were
    trained in, ready for windowed correlation.
    """

    held_out_trial_id: str
    x_hat_attended: SignalMatrix
    x_hat_unattended: SignalMatrix
    x_sp1: SignalMatrix
    x_sp2: SignalMatrix
    attended: Talker
    filter_attended: SpatioTemporalFilter
    filter_unattended: SpatioTemporalFilter
    transform: FeatureTransform


def _fit_fold_transform(
    training: list[LoadedTrial], zscore: bool, pca_k: int | None
) -> FeatureTransform:
    d = training[0].feat1.n_channels
    if not zscore and (pca_k is None or pca_k >= d):
        return FeatureTransform.identity(d)
    pool = [m for t in training for m in (t.feat1, t.feat2)]
    return fit_feature_transform(pool, zscore=zscore, pca_k=pca_k)


def loo_cv(
    dataset,
    feature_name: str,
    cfg: RidgeConfig | None = None,
    *,
    zscore: bool = True,
    pca_k: int | None = None,
    threads: int | None = None,
) -> list[FoldResult]:
    """Leave-one-out stimulus reconstruction over all trials.

    For each fold the conditioning chain (z-score, optional PCA) is fit on the
    training trials only, filters are trained on the training trials, and the
    held-out trial's reconstructions plus transformed talker features are
    returned.  Fold order follows the dataset's trial order.
    """
    cfg = cfg or RidgeConfig()
    trials = list(dataset.trials) if hasattr(dataset, "trials") else list(dataset)
    if len(trials) < 2:
        raise ValidationError("leave-one-out cross-validation needs at least two trials")
    loaded = _as_loaded(trials, feature_name)
    for t in loaded:
        _check_alignment(t)
    n_neural = loaded[0].neural.n_channels

    # Per-trial sufficient statistics are kept separately and each fold sums
    # its complement, so a fold's normal equations never involve the held-out
    # trial's frames (not even through cancelling terms).
    grams: list[np.ndarray] = []
    pieces: list[_TrialStats] = []
    for t in loaded:
        design = build_lagged_design(t.neural, cfg.lag)
        grams.append(design.T @ design)
        pieces.append(
            _trial_stats(
                design, {"att": _frames(t.attended_feature), "un": _frames(t.unattended_feature)}
            )
        )

    def run_fold(k: int) -> FoldResult:
        held = loaded[k]
        others = [i for i in range(len(loaded)) if i != k]
        gram_fold = np.zeros_like(grams[0])
        for i in others:
            gram_fold += grams[i]
        col_fold = np.sum([pieces[i].col_sums for i in others], axis=0)
        n_fold = sum(pieces[i].n for i in others)
        training = [loaded[i] for i in others]
        tf = _fit_fold_transform(training, zscore, pca_k)
        system = _RidgeSystem(gram_fold, col_fold, n_fold, cfg.lam)
        filters = {}
        for key in ("att", "un"):
            cross_fold = np.sum([pieces[i].cross[key] for i in others], axis=0)
            tsum_fold = np.sum([pieces[i].target_sums[key] for i in others], axis=0)
            c = tf.transform_cross(cross_fold, col_fold)
            w, b = system.solve(c, tf.transform_mean(tsum_fold / n_fold))
            filters[key] = _weights_to_filter(w, b, n_neural, cfg.lag, Direction.BACKWARD)
        design_k = build_lagged_design(held.neural, cfg.lag)
        x_hat_a = _apply_design(design_k, filters["att"])
        x_hat_u = _apply_design(design_k, filters["un"])
        return FoldResult(
            held_out_trial_id=held.trial_id,
            x_hat_attended=x_hat_a,
            x_hat_unattended=x_hat_u,
            x_sp1=tf.apply(held.feat1),
            x_sp2=tf.apply(held.feat2),
            attended=held.attended,
            filter_attended=filters["att"],
            filter_unattended=filters["un"],
            transform=tf,
        )

    return _map_folds(run_fold, [t.trial_id for t in loaded], threads)


@dataclass(frozen=True)
class ForwardFold:
    """One leave-one-out forward-model fold on the held-out trial."""

    held_out_trial_id: str
    r_per_electrode: np.ndarray
    prediction: SignalMatrix
    filter: SpatioTemporalFilter


def loo_forward(
    dataset,
    feature_name: str,
    cfg: RidgeConfig | None = None,
    *,
    zscore: bool = False,
    pca_k: int | None = None,
    threads: int | None = None,
) -> list[ForwardFold]:
    """Leave-one-out forward modelling: predict neural activity per electrode.

    Returns per-fold Pearson r between predicted and actual neural activity
    for every electrode.  With no feature conditioning the per-trial Gram
    totals are reused across folds; with z-scoring or PCA each fold re-derives
    its design from the fold-specific transformed features.
    """
    cfg = cfg or RidgeConfig(lag=DEFAULT_FORWARD_LAG)
    trials = list(dataset.trials) if hasattr(dataset, "trials") else list(dataset)
    if len(trials) < 2:
        raise ValidationError("leave-one-out cross-validation needs at least two trials")
    loaded = _as_loaded(trials, feature_name)
    for t in loaded:
        _check_alignment(t)
    d_feat = loaded[0].feat1.n_channels
    plain = not zscore and (pca_k is None or pca_k >= d_feat)

    if plain:
        grams: list[np.ndarray] = []
        pieces: list[_TrialStats] = []
        for t in loaded:
            design = build_lagged_design(t.attended_feature, cfg.lag)
            grams.append(design.T @ design)
            pieces.append(_trial_stats(design, {"neural": _frames(t.neural)}))

        def run_fold(k: int) -> ForwardFold:
            held = loaded[k]
            others = [i for i in range(len(loaded)) if i != k]
            gram_fold = np.zeros_like(grams[0])
            for i in others:
                gram_fold += grams[i]
            col_fold = np.sum([pieces[i].col_sums for i in others], axis=0)
            n_fold = sum(pieces[i].n for i in others)
            cross_fold = np.sum([pieces[i].cross["neural"] for i in others], axis=0)
            tsum_fold = np.sum([pieces[i].target_sums["neural"] for i in others], axis=0)
            system = _RidgeSystem(gram_fold, col_fold, n_fold, cfg.lam)
            w, b = system.solve(cross_fold, tsum_fold / n_fold)
            filt = _weights_to_filter(w, b, d_feat, cfg.lag, Direction.FORWARD)
            design_k = build_lagged_design(held.attended_feature, cfg.lag)
            pred = _apply_design(design_k, filt)
            return ForwardFold(held.trial_id, _per_channel_r(pred, held.neural), pred, filt)

    else:

        def run_fold(k: int) -> ForwardFold:
            held = loaded[k]
            training = [t for i, t in enumerate(loaded) if i != k]
            tf = _fit_fold_transform(training, zscore, pca_k)
            filt = train_forward(training, feature_name, cfg, transform=tf)
            pred = apply_filter(filt, tf.apply(held.attended_feature))
            return ForwardFold(held.trial_id, _per_channel_r(pred, held.neural), pred, filt)

    return _map_folds(run_fold, [t.trial_id for t in loaded], threads)


def _per_channel_r(a: SignalMatrix, b: SignalMatrix) -> np.ndarray:
    """Pearson r per channel over full length; constant channels give 0."""
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    denom = np.sqrt((xc**2).sum(axis=1) * (yc**2).sum(axis=1))
    num = (xc * yc).sum(axis=1)
    out = np.zeros(x.shape[0])
    ok = denom > 0
    out[ok] = num[ok] / denom[ok]
    return out


def _map_folds(run_fold, fold_ids: list[str], threads: int | None):
    """Run folds (optionally thread-parallel) in deterministic order.

    Errors inside a fold are re-raised annotated with the held-out trial id.
    """

    def guarded(k: int):
        try:
            return run_fold(k)
        except AadkitError as exc:
            raise type(exc)(f"fold '{fold_ids[k]}': {exc}") from exc

    workers = threads if threads is not None else default_threads()
    if workers <= 1:
        return [guarded(k) for k in range(len(fold_ids))]
    with ThreadPoolExecutor(max_workers=min(workers, len(fold_ids))) as pool:
        return list(pool.map(guarded, range(len(fold_ids))))


def save_filter(filt: SpatioTemporalFilter, path: str | Path) -> None:
    """Serialize a filter as an FTR1 file (one frame per output channel)."""
    n_out, n_in, n_lags = filt.weights.shape
    flat = filt.weights.reshape(n_out, n_in * n_lags).T  # frame-major: frame = output channel
    meta = {
        "kind": "spatiotemporal_filter",
        "direction": filt.direction.value,
        "in_channels": str(n_in),
        "n_lags": str(n_lags),
        "lag_min_ms": repr(filt.lags.lag_min_ms),
        "lag_max_ms": repr(filt.lags.lag_max_ms),
        "rate_hz": repr(filt.lags.rate_hz),
        "bias": json.dumps([float(v) for v in filt.bias]),
    }
    write_matrix_file(SignalMatrix(flat, filt.lags.rate_hz, meta), path)


def load_filter(path: str | Path) -> SpatioTemporalFilter:
    m = read_matrix_file(path)
    meta = m.meta
    if meta.get("kind") != "spatiotemporal_filter":
        raise ValidationError(f"{path}: not a serialized spatiotemporal filter")
    n_in = int(meta["in_channels"])
    n_lags = int(meta["n_lags"])
    lag = LagWindow(float(meta["lag_min_ms"]), float(meta["lag_max_ms"]), float(meta["rate_hz"]))
    n_out = m.n_frames
    weights = m.data.T.astype(np.float64).reshape(n_out, n_in, n_lags)
    bias = np.asarray(json.loads(meta["bias"]), dtype=np.float64)
    return SpatioTemporalFilter(weights, bias, lag, Direction(meta["direction"]))
