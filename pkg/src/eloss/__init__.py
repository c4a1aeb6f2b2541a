"""Entropy-change analysis of layered networks.

Estimates differential entropy of layer outputs with k-nearest-neighbor
methods, turns per-layer entropy changes into a training regularizer and
an anomaly score, and measures training-curve volatility.
"""

from .analysis import (AnomalyReport, Curve, anomaly_report, confidence,
                       max_metric, mavp_abs, mavp_literal, percent_change,
                       svg_line_plot)
from .autodiff import Tensor, backward
from .datasets import (DatasetHandle, NoiseSpec, inject_noise, make_dataset,
                       noise_preset)
from .entropy import (DEFAULT_EPSILON, EntropyEstimate, NeighborDistances,
                      SampleMatrix, digamma, entropy_first, entropy_gradient,
                      entropy_kl, knn_distances, log_unit_ball_volume,
                      unit_ball_volume)
from .losses import (ElossValue, EntropyProfile, build_profile, eloss,
                     eloss_metric, l1, l2)
from .network import (RepeatedBlockNet, TapPoint, channel_entropy,
                      feature_to_samples, forward, load_checkpoint,
                      per_sample_profiles, profile_from_taps, save_checkpoint)
from .training import (RunLog, TrainConfig, build_net, continue_train, train)

__version__ = "0.1.0"

__all__ = [
    "AnomalyReport", "Curve", "DatasetHandle", "DEFAULT_EPSILON",
    "ElossValue", "EntropyEstimate", "EntropyProfile", "NeighborDistances",
    "NoiseSpec", "RepeatedBlockNet", "RunLog", "SampleMatrix", "TapPoint",
    "Tensor", "TrainConfig", "anomaly_report", "backward", "build_net",
    "build_profile", "channel_entropy", "confidence", "continue_train",
    "digamma", "eloss", "eloss_metric", "entropy_first", "entropy_gradient",
    "entropy_kl", "feature_to_samples", "forward", "inject_noise",
    "knn_distances", "l1", "l2", "load_checkpoint", "log_unit_ball_volume",
    "make_dataset", "max_metric", "mavp_abs", "mavp_literal", "noise_preset",
    "per_sample_profiles", "percent_change", "profile_from_taps",
    "save_checkpoint", "svg_line_plot", "train", "unit_ball_volume",
]
