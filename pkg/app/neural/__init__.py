"""Dense network engine shared by the conditional detector and the neural baselines."""
from app.neural.network import DenseLayer, DenseNet, Gradients, Tape, backward, build_net, forward, param_count
from app.neural.losses import bce_loss, mse_loss, center_distance_loss
from app.neural.optimizers import SGD, Adam, make_optimizer
from app.neural.trainer import History, TrainingData, train
from app.neural.gradcheck import gradient_check, input_gradient

__all__ = [
    "DenseLayer",
    "DenseNet",
    "Gradients",
    "Tape",
    "backward",
    "build_net",
    "forward",
    "param_count",
    "bce_loss",
    "mse_loss",
    "center_distance_loss",
    "SGD",
    "Adam",
    "make_optimizer",
    "History",
    "TrainingData",
    "train",
    "gradient_check",
    "input_gradient",
]
