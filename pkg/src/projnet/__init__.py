"""Convnets with projected weights: training, distortion robustness
evaluation, and effective-bits diagnostics."""

from .errors import ConfigError, FormatError, NumericError, ProjnetError
from .harness import Splits, SweepReport, SweepSpec, evaluate, sweep
from .metrics import (activation_correlation, addnorm_bits_report,
                      effective_bits, weight_gap, weight_histogram)
from .nn import (BatchNormState, LayerSpec, Network, backward, batchnorm,
                 conv2d, dense, flatten, forward, one_vs_rest_targets,
                 recompute_bn_stats, relu, square_hinge_loss)
from .projections import (ProjectionSpec, expected_projection, glorot_init,
                          init_network, layer_alpha, parse_projection,
                          project, project_network, stochm3)
from .trainer import (AdamState, ClipPolicy, TrainConfig, TrainHistory,
                      adam_update, clip_weights, prox_linf_ball, train,
                      train_step)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BatchNormState", "ClipPolicy", "ConfigError", "FormatError",
    "LayerSpec", "Network", "NumericError", "ProjectionSpec", "ProjnetError",
    "Splits", "SweepReport", "SweepSpec", "TrainConfig", "TrainHistory",
    "activation_correlation", "adam_update", "addnorm_bits_report", "backward",
    "batchnorm", "clip_weights", "conv2d", "dense", "effective_bits",
    "evaluate", "expected_projection", "flatten", "forward", "glorot_init",
    "init_network", "layer_alpha", "one_vs_rest_targets", "parse_projection",
    "project", "project_network", "prox_linf_ball", "recompute_bn_stats",
    "relu", "square_hinge_loss", "stochm3", "sweep", "train", "train_step",
    "weight_gap", "weight_histogram",
]
