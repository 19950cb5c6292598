"""Interpretable time-series forecasting with a steerable prototype hierarchy.

A forecast is a weighted combination of learned period-length temporal
patterns; the weights come from softmax similarities between an encoded
window and prototype embeddings organized in a tree that can be refined by
splitting and edited by a domain expert.
"""

from .data import (
    DatasetBundle,
    Normalizer,
    Splits,
    SynthConfig,
    VariableSchema,
    WindowInstance,
    load_csv,
    make_windows,
    synth_generate,
    write_csv,
)
from .errors import ProtocastError
from .evaluation import (
    ActivationTimeline,
    Explanation,
    MetricReport,
    activation_report,
    evaluate,
    explain,
    leaf_regime_purity,
    seasonal_naive_predictions,
)
from .model import ForecastModel, ModelConfig, build_model, seed_prototypes_from_data
from .prototypes import (
    PrototypeNode,
    PrototypeTree,
    align_pattern,
    child_similarity,
    edit_pattern,
    hierarchical_predict,
    root_predict,
    root_similarity,
    split,
    splitting_rule,
)
from .tensor import Tape, Tensor, backward, no_grad
from .trainer import StagePlanEntry, TrainConfig, TrainReport, WindowSet, staged_train, train_stage

__version__ = "0.1.0"

__all__ = [
    "ActivationTimeline",
    "DatasetBundle",
    "Explanation",
    "ForecastModel",
    "MetricReport",
    "ModelConfig",
    "Normalizer",
    "ProtocastError",
    "PrototypeNode",
    "PrototypeTree",
    "Splits",
    "StagePlanEntry",
    "SynthConfig",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "VariableSchema",
    "WindowInstance",
    "WindowSet",
    "activation_report",
    "align_pattern",
    "backward",
    "build_model",
    "child_similarity",
    "edit_pattern",
    "evaluate",
    "explain",
    "hierarchical_predict",
    "leaf_regime_purity",
    "load_csv",
    "make_windows",
    "no_grad",
    "root_predict",
    "root_similarity",
    "seasonal_naive_predictions",
    "seed_prototypes_from_data",
    "split",
    "splitting_rule",
    "staged_train",
    "synth_generate",
    "train_stage",
    "write_csv",
]
