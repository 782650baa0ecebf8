"""Numpy encoder-decoder transformer with hand-written backpropagation."""
from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .gradcheck import gradient_check
from .model import (
    Batch,
    ModelConfig,
    count_parameters,
    forward,
    greedy_decode,
    greedy_decode_batch,
    init_parameters,
    loss_and_grads,
)
from .optim import AdamState, NonFiniteGradient, TrainConfig, adam_step
from .train import TrainingDiverged, greedy_accuracy, token_accuracy, train
