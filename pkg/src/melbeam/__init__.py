"""Mel-subband spatio-temporal beamforming toolkit.

Scene simulation, complex-ratio-filter covariance estimation, mel-scale
subband analysis/synthesis, multi-frame beamforming and MVDR baselines for
multi-zone in-car speech separation, plus an analytic compute-cost model for
narrow-band / subband / full-band processing modes.
"""

from .beamformer import (
    BeamformerWeights,
    SeparationConfig,
    SeparationResult,
    apply_weights,
    oracle_mvdr_weights,
    rnn_bf_stub,
    separate,
)
from .cost import CostReport, PipelineShapes, cost_sweep, count_macs
from .estimator import (
    ComplexRatioFilter,
    CovarianceSeries,
    apply_crf,
    compute_scm,
    neural_crf_stub,
    oracle_crf,
)
from .features import FeatureTensor, compute_df, compute_ipd, compute_lps, zone_steering
from .metrics import loss_value, sdr, si_snr
from .scene import (
    CabinSpec,
    Rir,
    SceneRender,
    default_cabin,
    distort_loudspeaker,
    render_scene,
    simulate_rir,
    speech_like,
)
from .signal_io import (
    MultichannelSpectrogram,
    StftConfig,
    Waveform,
    istft,
    read_wav,
    stft,
    write_wav,
)
from .subband import BandPlan, analyze, make_band_plan, projection_filters, synthesize
from .weights import WeightBundle

__version__ = "0.1.0"

__all__ = [
    "BandPlan",
    "BeamformerWeights",
    "CabinSpec",
    "ComplexRatioFilter",
    "CostReport",
    "CovarianceSeries",
    "FeatureTensor",
    "MultichannelSpectrogram",
    "PipelineShapes",
    "Rir",
    "SceneRender",
    "SeparationConfig",
    "SeparationResult",
    "StftConfig",
    "Waveform",
    "WeightBundle",
    "analyze",
    "apply_crf",
    "apply_weights",
    "compute_df",
    "compute_ipd",
    "compute_lps",
    "compute_scm",
    "cost_sweep",
    "count_macs",
    "default_cabin",
    "distort_loudspeaker",
    "istft",
    "loss_value",
    "make_band_plan",
    "neural_crf_stub",
    "oracle_crf",
    "oracle_mvdr_weights",
    "projection_filters",
    "read_wav",
    "render_scene",
    "rnn_bf_stub",
    "sdr",
    "separate",
    "si_snr",
    "simulate_rir",
    "speech_like",
    "stft",
    "synthesize",
    "write_wav",
    "zone_steering",
    "__version__",
]
