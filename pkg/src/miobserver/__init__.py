"""Dialogue observer: code the latest utterance, forecast the next one."""

from .data import (
    ALL_LABELS,
    CLIENT_LABELS,
    THERAPIST_LABELS,
    Session,
    Utterance,
    Window,
    corpus_windows,
    load_corpus,
    make_windows,
    save_corpus,
    split_sessions,
    window_from_history,
)
from .errors import (
    ConfigError,
    ContractError,
    ParseError,
    ShapeError,
    TapeError,
    TrainingError,
)
from .losses import FocalConfig, focal_loss
from .metrics import EvalReport, recall_at_k, sig6
from .model import Model, ModelConfig, PRESETS, finite_difference_check, preset
from .service import Observer, make_server
from .synth import gen_synthetic, oracle_label
from .tensor import Tape, Tensor, grad_check
from .train import (
    Adam,
    MtlModel,
    MtlSchedule,
    TrainConfig,
    evaluate_model,
    fit,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_LABELS", "CLIENT_LABELS", "THERAPIST_LABELS",
    "Session", "Utterance", "Window",
    "corpus_windows", "load_corpus", "make_windows", "save_corpus",
    "split_sessions", "window_from_history",
    "ConfigError", "ContractError", "ParseError", "ShapeError",
    "TapeError", "TrainingError",
    "FocalConfig", "focal_loss",
    "EvalReport", "recall_at_k", "sig6",
    "Model", "ModelConfig", "PRESETS", "finite_difference_check", "preset",
    "Observer", "make_server",
    "gen_synthetic", "oracle_label",
    "Tape", "Tensor", "grad_check",
    "Adam", "MtlModel", "MtlSchedule", "TrainConfig",
    "evaluate_model", "fit", "load_checkpoint", "save_checkpoint",
    "__version__",
]
