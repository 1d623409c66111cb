"""Attention decoding from reconstructions: windowed correlation, AMI, switching.

The attentional modulation index for one window is

    AMI = corr(Xhat_A, X_sp1) - corr(Xhat_A, X_sp2)
        + corr(Xhat_U, X_sp2) - corr(Xhat_U, X_sp1)

where corr is the channel-averaged Pearson correlation over the window.  A
positive AMI votes talker 1 as attended, a negative one talker 2; an exact
zero counts as incorrect.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import SignalMatrix, Talker
from .errors import (
    AlignmentError,
    CoverageError,
    DimensionError,
    DomainError,
    ValidationError,
)

DEFAULT_HOP_S = 0.1
DEFAULT_DURATIONS_S = (0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class WindowSpec:
    """A sliding decoding window; duration and hop must be whole samples."""

    duration_s: float
    hop_s: float = DEFAULT_HOP_S

    def __post_init__(self) -> None:
        if self.duration_s <= 0 or self.hop_s <= 0:
            raise ValidationError("window duration and hop must be positive")
        if self.duration_s < self.hop_s:
            raise ValidationError("window duration must be at least the hop")

    def _samples(self, value_s: float, rate_hz: float, what: str) -> int:
        n = value_s * rate_hz
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValidationError(f"window {what} {value_s} s is not a whole sample count at {rate_hz} Hz")
        return int(round(n))

    def n_samples(self, rate_hz: float) -> int:
        return self._samples(self.duration_s, rate_hz, "duration")

    def hop_samples(self, rate_hz: float) -> int:
        return self._samples(self.hop_s, rate_hz, "hop")


def _window_starts(n_frames: int, win_n: int, hop_n: int) -> np.ndarray:
    """Start frames of all complete windows (the last partial window is dropped)."""
    if win_n > n_frames:
        return np.arange(0)
    return np.arange(0, n_frames - win_n + 1, hop_n)


def window_centers_s(n_frames: int, w: WindowSpec, rate_hz: float) -> np.ndarray:
    win_n = w.n_samples(rate_hz)
    starts = _window_starts(n_frames, win_n, w.hop_samples(rate_hz))
    return (starts + win_n / 2.0) / rate_hz


def window_corr(a: SignalMatrix, b: SignalMatrix, w: WindowSpec) -> np.ndarray:
    """Channel-averaged Pearson r per sliding window.

    Per window the correlation is computed for each channel, channels that are
    constant within the window contribute r = 0, and the channel mean is
    returned.  Windows tile [0, T] at the hop spacing.
    """
    if a.data.shape != b.data.shape or a.sample_rate_hz != b.sample_rate_hz:
        raise DimensionError(
            f"window_corr needs matching shapes/rates, got {a.data.shape}@{a.sample_rate_hz} "
            f"and {b.data.shape}@{b.sample_rate_hz}"
        )
    rate = a.sample_rate_hz
    win_n = w.n_samples(rate)
    if win_n < 2:
        raise ValidationError("window must span at least two samples")
    hop_n = w.hop_samples(rate)
    starts = _window_starts(a.n_frames, win_n, hop_n)
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    if starts.size == 0:
        return np.empty(0)
    if win_n % hop_n == 0:
        sx, sy, sxx, syy, sxy = _window_moments_chunked(x, y, starts.size, win_n, hop_n)
    else:
        sx, sy, sxx, syy, sxy = _window_moments_direct(x, y, starts, win_n)
    n = float(win_n)
    var_x = np.maximum(n * sxx - sx**2, 0.0)
    var_y = np.maximum(n * syy - sy**2, 0.0)
    denom = np.sqrt(var_x * var_y)
    num = n * sxy - sx * sy
    r = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return r.mean(axis=0)


def _window_moments_chunked(x, y, n_windows, win_n, hop_n):
    """Exact per-window moment sums when the hop divides the window.

    Frames are summed in hop-sized chunks first, then each window adds its
    fixed number of chunk sums, so the cost is O(channels * frames) while the
    summation stays short and order-deterministic.
    """
    q = win_n // hop_n
    n_chunks = n_windows + q - 1
    usable = n_chunks * hop_n

    def chunked(v):
        return v[:, :usable].reshape(v.shape[0], n_chunks, hop_n).sum(axis=2)

    pieces = [chunked(x), chunked(y), chunked(x * x), chunked(y * y), chunked(x * y)]
    out = []
    for c in pieces:
        acc = c[:, 0:n_windows].copy()
        for k in range(1, q):
            acc += c[:, k : k + n_windows]
        out.append(acc)
    return out


def _window_moments_direct(x, y, starts, win_n):
    """Per-window moment sums for arbitrary hops (block-wise over windows)."""
    n_ch = x.shape[0]
    shape = (n_ch, starts.size)
    sx = np.empty(shape)
    sy = np.empty(shape)
    sxx = np.empty(shape)
    syy = np.empty(shape)
    sxy = np.empty(shape)
    for i, s in enumerate(starts):
        xw = x[:, s : s + win_n]
        yw = y[:, s : s + win_n]
        sx[:, i] = xw.sum(axis=1)
        sy[:, i] = yw.sum(axis=1)
        sxx[:, i] = (xw * xw).sum(axis=1)
        syy[:, i] = (yw * yw).sum(axis=1)
        sxy[:, i] = (xw * yw).sum(axis=1)
    return sx, sy, sxx, syy, sxy


@dataclass(frozen=True)
class AmiSeries:
    """Per-window AMI values with window-center timestamps."""

    window_centers_s: np.ndarray
    ami: np.ndarray
    window: WindowSpec

    def __post_init__(self) -> None:
        c = np.asarray(self.window_centers_s, dtype=np.float64)
        v = np.asarray(self.ami, dtype=np.float64)
        if c.shape != v.shape or c.ndim != 1:
            raise ValidationError("centers and values must be 1-D and equal length")
        if c.size > 1 and not (np.diff(c) > 0).all():
            raise ValidationError("window centers must be strictly increasing")
        if not np.isfinite(v).all():
            raise ValidationError("AMI values must be finite")
        object.__setattr__(self, "window_centers_s", c)
        object.__setattr__(self, "ami", v)


def ami_series(
    x_hat_a: SignalMatrix,
    x_hat_u: SignalMatrix,
    x_sp1: SignalMatrix,
    x_sp2: SignalMatrix,
    w: WindowSpec,
) -> AmiSeries:
    """Four-term attentional modulation index per sliding window."""
    # grouped as two differences so swapping sp1/sp2 negates the result exactly
    ami = (window_corr(x_hat_a, x_sp1, w) - window_corr(x_hat_a, x_sp2, w)) + (
        window_corr(x_hat_u, x_sp2, w) - window_corr(x_hat_u, x_sp1, w)
    )
    centers = window_centers_s(x_hat_a.n_frames, w, x_hat_a.sample_rate_hz)
    return AmiSeries(window_centers_s=centers, ami=ami, window=w)


@dataclass(frozen=True)
class DecodingReport:
    """Pooled windowed-classification accuracy per window duration."""

    feature_name: str
    accuracy: dict[float, float]
    n_windows: dict[float, int]
    n_ties: dict[float, int]
    per_trial_average: bool = False

    def to_dict(self) -> dict:
        durations = sorted(self.accuracy)
        return {
            "feature": self.feature_name,
            "per_trial_average": self.per_trial_average,
            "windows": [
                {
                    "duration_s": d,
                    "accuracy": self.accuracy[d],
                    "n_windows": self.n_windows[d],
                    "n_ties": self.n_ties[d],
                }
                for d in durations
            ],
        }


def classify_and_score(
    folds,
    dataset,
    feature_name: str,
    windows: list[WindowSpec],
    per_trial_average: bool = False,
) -> DecodingReport:
    """Score attended-talker classification over all trials and windows.

    ``folds`` must cover every trial of ``dataset``.  A window is correct when
    the AMI sign matches the attended label; AMI == 0 is always incorrect and
    counted in ``n_ties``.  Accuracy pools windows across trials per duration
    unless ``per_trial_average`` is set.
    """
    by_id = {f.held_out_trial_id: f for f in folds}
    trial_ids = [t.trial_id for t in dataset.trials]
    missing = [tid for tid in trial_ids if tid not in by_id]
    if missing:
        raise CoverageError(f"folds missing for trials: {missing}")
    attended = {t.trial_id: t.attended for t in dataset.trials}

    accuracy: dict[float, float] = {}
    n_windows: dict[float, int] = {}
    n_ties: dict[float, int] = {}
    for w in windows:
        correct = 0
        total = 0
        ties = 0
        per_trial_acc = []
        for tid in trial_ids:
            f = by_id[tid]
            series = ami_series(f.x_hat_attended, f.x_hat_unattended, f.x_sp1, f.x_sp2, w)
            if series.ami.size == 0:
                continue
            if attended[tid] is Talker.TALKER1:
                ok = series.ami > 0
            else:
                ok = series.ami < 0
            correct += int(ok.sum())
            total += series.ami.size
            ties += int((series.ami == 0).sum())
            per_trial_acc.append(ok.mean())
        if total == 0:
            raise ValidationError(
                f"no complete {w.duration_s} s windows fit any trial"
            )
        if per_trial_average:
            accuracy[w.duration_s] = float(np.mean(per_trial_acc))
        else:
            accuracy[w.duration_s] = correct / total
        n_windows[w.duration_s] = total
        n_ties[w.duration_s] = ties
    return DecodingReport(
        feature_name=feature_name,
        accuracy=accuracy,
        n_windows=n_windows,
        n_ties=n_ties,
        per_trial_average=per_trial_average,
    )


@dataclass(frozen=True)
class SwitchTrial:
    """A simulated attention-switch trial spliced from recorded segments.

    The talker-feature roles are arranged so the attended stream is talker 1
    before ``switch_time_s`` and talker 2 after it.
    """

    trial_id: str
    neural: SignalMatrix
    talker1_features: dict[str, SignalMatrix]
    talker2_features: dict[str, SignalMatrix]
    switch_time_s: float
    pre_source: str
    post_source: str
    pre_swapped: bool
    post_swapped: bool


def _concat(a: SignalMatrix, b: SignalMatrix) -> SignalMatrix:
    return SignalMatrix(np.concatenate([a.data, b.data], axis=1), a.sample_rate_hz, {})


def _slice(m: SignalMatrix, lo: int, hi: int) -> SignalMatrix:
    return SignalMatrix(m.data[:, lo:hi], m.sample_rate_hz, {})


def make_switch_trials(dataset, segment_s: float = 10.0) -> list[SwitchTrial]:
    """Construct one attention-switch trial per sufficiently long source trial.

    Each switch trial splices the source trial's first ``segment_s`` seconds
    onto its last ``segment_s`` seconds.  Feature roles are swapped in exactly
    one of the two segments so the attended stream is labeled talker 1 before
    the splice point and talker 2 after it; trials shorter than twice the
    segment are skipped with a warning.
    """
    out: list[SwitchTrial] = []
    for record in dataset.trials:
        neural = record.load_neural()
        rate = neural.sample_rate_hz
        seg_n = int(round(segment_s * rate))
        total = neural.n_frames
        if total < 2 * seg_n:
            warnings.warn(
                f"trial '{record.trial_id}' is too short for two {segment_s} s segments; skipped",
                stacklevel=2,
            )
            continue
        pre_swap = record.attended is Talker.TALKER2
        post_swap = record.attended is Talker.TALKER1
        spliced_neural = _concat(_slice(neural, 0, seg_n), _slice(neural, total - seg_n, total))
        t1: dict[str, SignalMatrix] = {}
        t2: dict[str, SignalMatrix] = {}
        for name in record.feature_names():
            f1 = record.load_feature(name, Talker.TALKER1)
            f2 = record.load_feature(name, Talker.TALKER2)
            pre1, pre2 = (f2, f1) if pre_swap else (f1, f2)
            post1, post2 = (f2, f1) if post_swap else (f1, f2)
            t1[name] = _concat(_slice(pre1, 0, seg_n), _slice(post1, total - seg_n, total))
            t2[name] = _concat(_slice(pre2, 0, seg_n), _slice(post2, total - seg_n, total))
        out.append(
            SwitchTrial(
                trial_id=f"{record.trial_id}-switch",
                neural=spliced_neural,
                talker1_features=t1,
                talker2_features=t2,
                switch_time_s=segment_s,
                pre_source=record.trial_id,
                post_source=record.trial_id,
                pre_swapped=pre_swap,
                post_swapped=post_swap,
            )
        )
    return out


def transition_time(s: AmiSeries, switch_time_s: float) -> float | None:
    """Delay from the true switch to the first positive-to-nonpositive AMI crossing.

    The crossing is located by linear interpolation between adjacent window
    centers; ``None`` if the series never crosses after the switch.  The
    series must span the switch time.
    """
    c = s.window_centers_s
    v = s.ami
    if c.size < 2 or not (c[0] <= switch_time_s <= c[-1]):
        raise DomainError(
            f"AMI series [{c[0] if c.size else 'empty'}, {c[-1] if c.size else 'empty'}] "
            f"does not span the switch at {switch_time_s} s"
        )
    for j in range(c.size - 1):
        if c[j + 1] <= switch_time_s:
            continue
        if v[j] > 0 >= v[j + 1]:
            if v[j + 1] == v[j]:
                crossing = c[j + 1]
            else:
                crossing = c[j] + (c[j + 1] - c[j]) * v[j] / (v[j] - v[j + 1])
            return float(crossing - switch_time_s)
    return None


def scale_ami(traces: list[AmiSeries]) -> AmiSeries:
    """Pointwise mean of aligned traces, scaled into [-1, 1] by the peak magnitude."""
    if not traces:
        raise ValidationError("scale_ami needs at least one trace")
    ref = traces[0]
    for t in traces[1:]:
        if t.window_centers_s.shape != ref.window_centers_s.shape or not np.allclose(
            t.window_centers_s, ref.window_centers_s
        ):
            raise AlignmentError("AMI traces have mismatched window centers")
        if t.window != ref.window:
            raise AlignmentError("AMI traces have mismatched window specs")
    mean = np.mean([t.ami for t in traces], axis=0)
    peak = np.abs(mean).max() if mean.size else 0.0
    if peak > 0:
        mean = mean / peak
    return AmiSeries(window_centers_s=ref.window_centers_s.copy(), ami=mean, window=ref.window)
