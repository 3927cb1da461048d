from .layers import (
    bilstm_encode,
    conv_maxpool,
    gmbc_fuse,
    gmbc_weight,
    lstm_cell_step,
)
from .network import (
    ForwardTrace,
    HgnnConfig,
    backward,
    cross_entropy,
    hgnn_forward,
    init_params,
    loss_and_grad,
    param_count,
    param_names,
    predict,
)
from .train import History, TrainSchedule, predict_batch, train

__all__ = [
    "ForwardTrace",
    "HgnnConfig",
    "History",
    "TrainSchedule",
    "backward",
    "bilstm_encode",
    "conv_maxpool",
    "cross_entropy",
    "gmbc_fuse",
    "gmbc_weight",
    "hgnn_forward",
    "init_params",
    "loss_and_grad",
    "lstm_cell_step",
    "param_count",
    "param_names",
    "predict",
    "predict_batch",
    "train",
]
