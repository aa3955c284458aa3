from fieldflow.task import FieldTask
from fieldflow.velocity_net.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from fieldflow.velocity_net.model import VelocityModel
from fieldflow.velocity_net.optim import TrainConfig, adam_step, learning_rate
from fieldflow.velocity_net.train import DivergedTrainingError, TrainingLog, train

__all__ = [
    "CheckpointError",
    "DivergedTrainingError",
    "FieldTask",
    "TrainConfig",
    "TrainingLog",
    "VelocityModel",
    "adam_step",
    "learning_rate",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
