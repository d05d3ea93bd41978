"""Soft decision tree (SDT) and short-term-memory SDT classifiers in numpy."""

from .errors import (
    ConfigError,
    DegenerateLabelError,
    DivergenceError,
    EmptyDatasetError,
    InputError,
    SchemaError,
    SoftTreeError,
    StratificationError,
    UndefinedAUCError,
)
from .model import (
    ForwardTrace,
    LossValues,
    SoftTree,
    TreeConfig,
    forward,
    grad_batch,
    init_tree,
    loss_batch,
    predict_batch,
    predict_scores,
)
from .trainer import TrainConfig, TrainHistory, train

__version__ = "0.1.0"
