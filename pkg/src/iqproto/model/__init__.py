"""From-scratch neural classifiers: numpy forward/backward, Adam, training.

Everything differentiable here is hand-written and verified against central
finite differences (see gradcheck). No autograd framework is involved.
"""

from .checkpoint import load_model, save_model
from .cnn import CnnConfig, cnn_config, cnn_forward, cnn_param_count, init_cnn_params
from .gradcheck import grad_check, tiny_config
from .training import (
    AugmentConfig,
    SequenceDataset,
    TrainConfig,
    TrainResult,
    cnn_train_config,
    history_to_csv,
    train,
)
from .transformer import (
    TransformerConfig,
    desk_model_config,
    forward,
    init_params,
    lg_model_config,
    param_count,
    predict_log_scores,
    sm_model_config,
)

__all__ = [
    "AugmentConfig",
    "CnnConfig",
    "SequenceDataset",
    "TrainConfig",
    "TrainResult",
    "TransformerConfig",
    "cnn_config",
    "cnn_forward",
    "cnn_param_count",
    "cnn_train_config",
    "desk_model_config",
    "forward",
    "grad_check",
    "history_to_csv",
    "init_cnn_params",
    "init_params",
    "lg_model_config",
    "load_model",
    "param_count",
    "predict_log_scores",
    "save_model",
    "sm_model_config",
    "tiny_config",
    "train",
]
