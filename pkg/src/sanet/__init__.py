"""Cold-start fake news detection with structure-adversarial training."""

from .data import (
    DatasetSplit,
    NewsSample,
    PropagationTree,
    TreeNode,
    load_corpus,
    make_training_copies,
    save_corpus,
    split_event_aware,
    split_general,
    strip_propagation,
)
from .estimator import SanClassifier
from .experiment import (
    ExperimentReport,
    compare_reports,
    dump_embeddings,
    merge_reports,
    read_report,
    run_experiment,
    run_lambda_sweep,
    write_report,
)
from .metrics import classification_metrics, confusion, paired_t_test
from .models import (
    ENCODER_KINDS,
    ParamSets,
    classify,
    discriminate,
    encode_sample,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .synthetic import SyntheticConfig, generate_synthetic
from .training import (
    LAMBDA_GRID,
    TrainingConfig,
    gradient_check_report,
    loss_cls,
    loss_disc,
    loss_san,
    predict,
    total_loss,
    train_san,
    train_vanilla,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit",
    "ENCODER_KINDS",
    "ExperimentReport",
    "LAMBDA_GRID",
    "NewsSample",
    "ParamSets",
    "PropagationTree",
    "SanClassifier",
    "SyntheticConfig",
    "TrainingConfig",
    "TreeNode",
    "classification_metrics",
    "classify",
    "compare_reports",
    "confusion",
    "discriminate",
    "dump_embeddings",
    "encode_sample",
    "generate_synthetic",
    "gradient_check_report",
    "init_params",
    "load_checkpoint",
    "load_corpus",
    "loss_cls",
    "loss_disc",
    "loss_san",
    "make_training_copies",
    "merge_reports",
    "paired_t_test",
    "predict",
    "read_report",
    "run_experiment",
    "run_lambda_sweep",
    "save_checkpoint",
    "save_corpus",
    "split_event_aware",
    "split_general",
    "strip_propagation",
    "total_loss",
    "train_san",
    "train_vanilla",
    "write_report",
]
