"""Small deterministic numpy neural core: mean-embedding MLP and BiLSTM."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .model import backward, forward, loss, loss_and_grad, predict, probabilities
from .optim import SGDState, fresh_state, opt_step
from .params import Layer, ModelSpec, ParamSet, init_params, load_embedding_matrix
from .train import NumericError, TrainHyper, train_epoch

__all__ = [
    "Checkpoint", "CheckpointError", "Layer", "ModelSpec", "NumericError", "ParamSet",
    "SGDState", "TrainHyper", "backward", "forward", "fresh_state", "init_params",
    "load_checkpoint", "load_embedding_matrix", "loss", "loss_and_grad", "opt_step",
    "predict", "probabilities", "save_checkpoint", "train_epoch",
]
