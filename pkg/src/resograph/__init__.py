"""Multi-resolution graph networks for multichannel time-series classification."""

__version__ = "0.1.0"

from .data import (ChannelStats, Dataset, SeriesSample, SplitSpec, SynthConfig,
                   channel_stats, load_dataset, save_dataset, split_dataset,
                   standardize, synth_generate)
from .estimator import ResoGraphClassifier
from .exceptions import (ConfigError, DatasetFormatError, EvaluationError,
                         NumericError, ShapeError, SplitError)
from .fourier import ComplexSpectrum, complex_hadamard, irfft, rfft
from .gradcheck import finite_difference_check, finite_difference_check_many
from .graphs import (ResolutionGraph, ResolutionSpec, build_resolution_graph,
                     multi_scale_embed, normalize_adjacency)
from .metrics import (ConfusionCounts, EvalReport, accuracy, auroc_ovr,
                      binary_auroc, compute_report, precision_recall_f1)
from .network import (ArchitectureConfig, ClassProbabilities, NetworkParams,
                      classify, cross_resolution_pool, forward, fuse_views,
                      graph_convolution, init_params, local_graph_attention)
from .optim import Adam, AdamState, adam_step
from .temporal import (DifferenceAttentionParams, FrequencyKernel,
                       difference_attention, frequency_convolution,
                       temporal_difference)
from .tensor import Tensor, concat, depthwise_conv1d, logsumexp, softmax
from .training import (RunConfig, cross_entropy, evaluate, evaluate_checkpoint,
                       fit_model, load_checkpoint, load_config, save_checkpoint,
                       train)

__all__ = [
    "Adam", "AdamState", "ArchitectureConfig", "ChannelStats",
    "ClassProbabilities", "ComplexSpectrum", "ConfigError", "ConfusionCounts",
    "Dataset", "DatasetFormatError", "DifferenceAttentionParams", "EvalReport",
    "EvaluationError", "FrequencyKernel", "NetworkParams", "NumericError",
    "ResoGraphClassifier", "ResolutionGraph", "ResolutionSpec", "RunConfig",
    "SeriesSample", "ShapeError", "SplitError", "SplitSpec", "SynthConfig",
    "Tensor", "accuracy", "adam_step", "auroc_ovr", "binary_auroc",
    "build_resolution_graph", "channel_stats", "classify", "complex_hadamard",
    "compute_report", "concat", "cross_entropy", "cross_resolution_pool",
    "depthwise_conv1d", "difference_attention", "evaluate",
    "evaluate_checkpoint", "finite_difference_check",
    "finite_difference_check_many", "fit_model", "forward",
    "frequency_convolution", "fuse_views", "graph_convolution", "init_params",
    "irfft", "load_checkpoint", "load_config", "load_dataset",
    "local_graph_attention", "logsumexp", "multi_scale_embed",
    "normalize_adjacency", "precision_recall_f1", "rfft", "save_checkpoint",
    "save_dataset", "softmax", "split_dataset", "standardize",
    "synth_generate", "temporal_difference", "train",
]
