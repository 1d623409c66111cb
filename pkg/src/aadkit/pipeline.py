"""High-level experiment drivers tying the modules into reportable runs.

Each driver consumes a validated dataset and returns plain result objects;
the CLI serializes them to JSON/CSV and renders figures.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ExperimentDataset
from .decoder import (
    AmiSeries,
    DecodingReport,
    WindowSpec,
    ami_series,
    classify_and_score,
    make_switch_trials,
    scale_ami,
    transition_time,
)
from .errors import MissingFeatureError, ValidationError
from .linmap import (
    DEFAULT_FORWARD_LAG,
    FoldResult,
    RidgeConfig,
    apply_filter,
    loo_cv,
    loo_forward,
)
from .stats import ImprovementMap, improvement_map


def decode_dataset(
    dataset: ExperimentDataset,
    feature_name: str,
    cfg: RidgeConfig | None = None,
    durations_s=(0.5, 1.0, 2.0, 4.0, 8.0),
    hop_s: float = 0.1,
    *,
    zscore: bool = True,
    pca_k: int | None = None,
    per_trial_average: bool = False,
    threads: int | None = None,
) -> tuple[DecodingReport, list[FoldResult]]:
    """Leave-one-out decode: reconstruct, window, classify, score."""
    folds = loo_cv(dataset, feature_name, cfg, zscore=zscore, pca_k=pca_k, threads=threads)
    windows = [WindowSpec(d, hop_s) for d in durations_s]
    report = classify_and_score(folds, dataset, feature_name, windows, per_trial_average)
    return report, folds


def layer_feature_names(dataset: ExperimentDataset, prefix: str = "layer") -> list[str]:
    """Feature names of the form <prefix><digits>, in numeric order."""
    names = []
    for name in dataset.feature_names():
        if name.startswith(prefix) and name[len(prefix) :].isdigit():
            names.append(name)
    return sorted(names, key=lambda n: int(n[len(prefix) :]))


@dataclass(frozen=True)
class LayerSweepRow:
    layer: str
    duration_s: float
    accuracy: float
    n_windows: int


def run_layer_sweep(
    dataset: ExperimentDataset,
    layers: list[str],
    cfg: RidgeConfig | None = None,
    durations_s=(0.5, 1.0, 2.0, 4.0, 8.0),
    hop_s: float = 0.1,
    *,
    zscore: bool = True,
    pca_k: int | None = None,
    threads: int | None = None,
) -> list[LayerSweepRow]:
    """Decode once per layer feature; missing layers are skipped with a warning."""
    if not layers:
        raise ValidationError("layer sweep needs at least one layer feature name")
    rows: list[LayerSweepRow] = []
    for layer in layers:
        try:
            report, _ = decode_dataset(
                dataset, layer, cfg, durations_s, hop_s,
                zscore=zscore, pca_k=pca_k, threads=threads,
            )
        except MissingFeatureError as exc:
            warnings.warn(f"layer '{layer}' skipped: {exc}", stacklevel=2)
            continue
        for d in sorted(report.accuracy):
            rows.append(LayerSweepRow(layer, d, report.accuracy[d], report.n_windows[d]))
    if not rows:
        raise ValidationError("layer sweep produced no results (all layers missing?)")
    return rows


@dataclass(frozen=True)
class SwitchRun:
    """Averaged AMI trace plus per-duration transition-time statistics."""

    trace: AmiSeries
    trace_duration_s: float
    switch_time_s: float
    transitions: dict[float, list[float]]  # duration -> per-switch-trial transition times
    mean_transition: dict[float, float]
    n_detected: dict[float, int]
    pairing: list[dict]


def run_switch(
    dataset: ExperimentDataset,
    feature_name: str,
    cfg: RidgeConfig | None = None,
    durations_s=(0.5, 1.0, 2.0, 4.0, 8.0),
    hop_s: float = 0.1,
    segment_s: float = 10.0,
    trace_duration_s: float = 4.0,
    *,
    zscore: bool = True,
    pca_k: int | None = None,
    threads: int | None = None,
) -> SwitchRun:
    """Simulate attention switches and measure AMI zero-crossing delays.

    Each switch trial is reconstructed with the filters of its source trial's
    leave-one-out fold (so the evaluated data never trained its own filters),
    then AMI traces and transition times are computed per window duration.
    """
    folds = loo_cv(dataset, feature_name, cfg, zscore=zscore, pca_k=pca_k, threads=threads)
    fold_by_id = {f.held_out_trial_id: f for f in folds}
    switch_trials = make_switch_trials(dataset, segment_s)
    if not switch_trials:
        raise ValidationError("no switch trials could be built (all trials too short?)")

    durations = list(durations_s)
    if trace_duration_s not in durations:
        durations.append(trace_duration_s)
    transitions: dict[float, list[float]] = {d: [] for d in durations}
    traces: list[AmiSeries] = []
    pairing = []
    for st in switch_trials:
        fold = fold_by_id[st.pre_source]
        tf = fold.transform
        x_hat_a = apply_filter(fold.filter_attended, st.neural)
        x_hat_u = apply_filter(fold.filter_unattended, st.neural)
        sp1 = tf.apply(st.talker1_features[feature_name])
        sp2 = tf.apply(st.talker2_features[feature_name])
        for d in durations:
            series = ami_series(x_hat_a, x_hat_u, sp1, sp2, WindowSpec(d, hop_s))
            if d == trace_duration_s:
                traces.append(series)
            delay = transition_time(series, st.switch_time_s)
            if delay is not None:
                transitions[d].append(delay)
        pairing.append(
            {
                "switch_id": st.trial_id,
                "pre_source": st.pre_source,
                "post_source": st.post_source,
                "pre_swapped": st.pre_swapped,
                "post_swapped": st.post_swapped,
            }
        )
    mean_transition = {
        d: float(np.mean(v)) if v else float("nan") for d, v in transitions.items()
    }
    n_detected = {d: len(v) for d, v in transitions.items()}
    return SwitchRun(
        trace=scale_ami(traces),
        trace_duration_s=trace_duration_s,
        switch_time_s=segment_s,
        transitions={d: transitions[d] for d in durations_s},
        mean_transition={d: mean_transition[d] for d in durations_s},
        n_detected={d: n_detected[d] for d in durations_s},
        pairing=pairing,
    )


@dataclass(frozen=True)
class ForwardCompareResult:
    feature_a: str
    feature_b: str
    improvement: ImprovementMap
    r_a: np.ndarray  # (n_electrodes, n_folds)
    r_b: np.ndarray


def forward_compare(
    dataset: ExperimentDataset,
    feature_a: str,
    feature_b: str,
    cfg: RidgeConfig | None = None,
    alpha: float = 0.05,
    *,
    pca_k: int | None = 100,
    zscore: bool = False,
    threads: int | None = None,
) -> ForwardCompareResult:
    """Per-electrode forward-model accuracy improvement of feature A over B.

    Forward models are trained per leave-one-out fold for each feature; the
    per-electrode r-values across folds feed a paired t-test at ``alpha``.
    PCA pre-reduction (``pca_k``) applies only to features with more channels
    than components.
    """
    cfg = cfg or RidgeConfig(lag=DEFAULT_FORWARD_LAG)

    def r_matrix(name: str) -> np.ndarray:
        folds = loo_forward(dataset, name, cfg, zscore=zscore, pca_k=pca_k, threads=threads)
        return np.stack([f.r_per_electrode for f in folds], axis=1)

    r_a = r_matrix(feature_a)
    r_b = r_matrix(feature_b)
    return ForwardCompareResult(
        feature_a=feature_a,
        feature_b=feature_b,
        improvement=improvement_map(r_a, r_b, alpha),
        r_a=r_a,
        r_b=r_b,
    )
