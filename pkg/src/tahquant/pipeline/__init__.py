"""Two-stage pipeline-parallel training simulator."""
from .channel import (
    NaiveCompressor, Passthrough, QueueChannel, SocketChannel, TahCompressor, ZeroCompressor,
    blob_mean_bits, make_channel,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SyntheticTask, TrainBatch
from .model import (
    ModelConfig, PipelineModel, backward_stage_a, flatten, forward_stage_a, full_loss,
    full_loss_and_grad, stage_b_loss_and_grad, unflatten,
)
from .optim import MomentumState, check_hyperparams, momentum_update, theory_bounds
from .train import (
    StepRecord, TrainConfig, TrainResult, run_training, train_reference, train_step,
    write_loss_csv,
)
