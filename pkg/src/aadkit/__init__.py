"""aadkit: auditory attention decoding by stimulus-representation reconstruction."""

from .core import (
    ExperimentDataset,
    LagWindow,
    SignalMatrix,
    Talker,
    TrialRecord,
    load_manifest,
    read_matrix_file,
    read_matrix_header,
    write_manifest,
    write_matrix_file,
)
from .decoder import (
    AmiSeries,
    DecodingReport,
    SwitchTrial,
    WindowSpec,
    ami_series,
    classify_and_score,
    make_switch_trials,
    scale_ami,
    transition_time,
    window_corr,
)
from .errors import AadkitError
from .features import (
    FeatureTransform,
    MelConfig,
    PcaModel,
    Waveform,
    ZScoreModel,
    envelope,
    mel_spectrogram,
    pca_apply,
    pca_fit,
    pca_reconstruct,
    read_wav,
    resample_linear,
    zscore_apply,
    zscore_fit,
)
from .linmap import (
    DEFAULT_BACKWARD_LAG,
    DEFAULT_FORWARD_LAG,
    Direction,
    FoldResult,
    ForwardFold,
    LoadedTrial,
    RidgeConfig,
    SpatioTemporalFilter,
    apply_filter,
    build_lagged_design,
    load_filter,
    loo_cv,
    loo_forward,
    ridge_solve,
    save_filter,
    train_backward,
    train_forward,
)
from .stats import ImprovementMap, TTestResult, improvement_map, paired_t_test, pearson
from .synth import GroundTruth, LayerGains, SynthConfig, gen_dataset, gen_talker_features

__version__ = "0.1.0"
