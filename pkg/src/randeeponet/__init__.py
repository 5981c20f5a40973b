"""DeepONet training with randomly sampled trunk evaluation points."""
from .data import OperatorDataset
from .model import (
    DeepONetSpec, EvalSelection, loss_full, loss_randomized, predict_per_sample,
    predict_shared_grid, preset, select_eval_points,
)
from .pde import generate_dataset
from .train import Metrics, RunRecord, TrainConfig, evaluate_metrics, train

__version__ = "0.1.0"
