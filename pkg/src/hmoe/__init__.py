"""Binary hierarchical mixture of experts with subtree dropout."""

from ._backend import BACKEND
from .data import Dataset, SplitSpec
from .dropout import DropoutMask, expected_output, sample_mask
from .grad import Gradients, backward, fd_gradient
from .optim import (
    AdamState,
    LossKind,
    TrainReport,
    TrainSettings,
    adam_step,
    evaluate,
    loss,
    train,
)
from .tree import (
    GatingTrace,
    ModelConfig,
    TaskKind,
    TreeModel,
    forward,
    forward_batch,
    gate,
    init_model,
    leaf_path_weights,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AdamState",
    "Dataset",
    "DropoutMask",
    "GatingTrace",
    "Gradients",
    "LossKind",
    "ModelConfig",
    "SplitSpec",
    "TaskKind",
    "TrainReport",
    "TrainSettings",
    "TreeModel",
    "adam_step",
    "backward",
    "evaluate",
    "expected_output",
    "fd_gradient",
    "forward",
    "forward_batch",
    "gate",
    "init_model",
    "leaf_path_weights",
    "load_checkpoint",
    "loss",
    "sample_mask",
    "save_checkpoint",
    "train",
]
