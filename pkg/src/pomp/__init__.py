"""Two-tier disease prediction from patient-side narratives."""

from .config import TrainingConfig
from .data import (
    ContinuousNormalizer,
    Dataset,
    DatasetError,
    PatientRecord,
    StatsReport,
    Taxonomy,
    TaxonomyError,
    dataset_stats,
    fit_normalizer,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .evaluation import MetricsReport, evaluate
from .model import ModelParams, Prediction, init_model, predict_full
from .synthetic import OracleRule, SyntheticSpec, generate_synthetic, reference_corpus_spec
from .text import Vocabulary
from .training import (
    CheckpointError,
    backward,
    cross_entropy,
    finite_difference_check,
    joint_loss,
    load_model,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "TrainingConfig",
    "ContinuousNormalizer",
    "Dataset",
    "DatasetError",
    "PatientRecord",
    "StatsReport",
    "Taxonomy",
    "TaxonomyError",
    "dataset_stats",
    "fit_normalizer",
    "load_dataset",
    "save_dataset",
    "split_dataset",
    "MetricsReport",
    "evaluate",
    "ModelParams",
    "Prediction",
    "init_model",
    "predict_full",
    "OracleRule",
    "SyntheticSpec",
    "generate_synthetic",
    "reference_corpus_spec",
    "Vocabulary",
    "CheckpointError",
    "backward",
    "cross_entropy",
    "finite_difference_check",
    "joint_loss",
    "load_model",
    "save_model",
    "train",
]
