"""Agentic retrieval-augmented time series analysis at desk scale.

A master agent routes requests to four specialized sub-agents (forecast,
impute, anomaly, classify); each augments a small trainable predictor with
a differentiable key-value prompt pool retrieved by cosine similarity.
"""

from .agents import (
    AblationFlags,
    TaskKind,
    TaskRequest,
    TaskResponse,
    TraceStep,
    execute_anomaly,
    execute_classify,
    execute_forecast,
    execute_impute,
    handle,
    route,
)
from .core_data import (
    MaskMatrix,
    SeriesMatrix,
    Split,
    WindowSet,
    chronological_split,
    inverse_standardize,
    make_windows,
    standardize,
)
from .dataio import ExperimentConfig, SyntheticSpec, gen_synthetic
from .pool import PromptPool, Projection, Retrieval, retrieve_topk
from .predictor import Hyper, TaskModel, dpo_align, remote_predict, train

__version__ = "0.1.0"

__all__ = [
    "AblationFlags", "ExperimentConfig", "Hyper", "MaskMatrix", "PromptPool",
    "Projection", "Retrieval", "SeriesMatrix", "Split", "SyntheticSpec",
    "TaskKind", "TaskModel", "TaskRequest", "TaskResponse", "TraceStep",
    "WindowSet", "chronological_split", "dpo_align", "execute_anomaly",
    "execute_classify", "execute_forecast", "execute_impute", "gen_synthetic",
    "handle", "inverse_standardize", "make_windows", "remote_predict",
    "retrieve_topk", "route", "standardize", "train",
]
