"""Stage-I pose initialisers: DisGNet, the plain-MLP baseline and their trainer."""

from . import autodiff, checkpoint, disgnet, mlp, train
from .disgnet import NetParams
from .train import TrainConfig, TrainLog

__all__ = ["autodiff", "checkpoint", "disgnet", "mlp", "train", "NetParams", "TrainConfig",
           "TrainLog"]
