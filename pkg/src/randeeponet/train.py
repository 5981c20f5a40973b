"""Mini-batch training loop with sampled evaluation points, and test metrics."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import OperatorDataset
from .errors import NonFiniteError, TrainingError
from .model import (
    DeepONetSpec, STRATEGIES, loss_and_grad_full, loss_and_grad_randomized,
    predict_shared_grid, select_eval_points,
)
from .nn import Optimizer, ParamStore
from .rng import INIT, SELECT, SHUFFLE, substream

log = logging.getLogger(__name__)

TRAIN_STRATEGIES = STRATEGIES + ("traditional",)


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    ``strategy="traditional"`` trains on the full grid through the shared-grid
    contraction; every other strategy goes through per-sample point selection.
    ``n_eval=None`` means all points (or all points per slice). ``eval_every``
    is the test-metric cadence in epochs (0 disables it).
    """

    batch_size: int = 256
    lr: float = 1e-3
    epochs: int = 1000
    optimizer: str = "adam"
    strategy: str = "random"
    n_eval: int | None = None
    seed: int = 0
    eval_every: int = 10

    def validate(self, n_out: int, slices: int | None = None) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.strategy not in TRAIN_STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        limit = n_out // slices if self.strategy == "per-slice-random" and slices else n_out
        if self.n_eval is not None and not 1 <= self.n_eval <= limit:
            raise ValueError(f"n_eval={self.n_eval} outside [1, {limit}]")


@dataclass
class RunRecord:
    config: dict
    train_loss: list[float] = field(default_factory=list)
    residual_terms: list[int] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    cum_seconds: list[float] = field(default_factory=list)
    test_epochs: list[int] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    init: str = "glorot-uniform weights, zero biases, stream (seed, 0)"

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Metrics:
    mean_r2: float
    mse: float
    n_excluded: int = 0


def shuffle_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.permutation(n)


def evaluate_metrics(spec: DeepONetSpec, params: ParamStore, dataset: OperatorDataset,
                     chunk: int = 256) -> Metrics:
    """Mean per-sample R^2 and MSE on the full output grid.

    Samples whose truth has zero variance have no R^2; they are left out of the
    mean and counted in ``n_excluded``.
    """
    r2 = []
    sq = 0.0
    excluded = 0
    for lo in range(0, dataset.n_samples, chunk):
        hi = min(lo + chunk, dataset.n_samples)
        pred = predict_shared_grid(spec, params, dataset.inputs[lo:hi], dataset.output_grid)
        truth = dataset.outputs[lo:hi]
        res = np.sum((truth - pred) ** 2, axis=1)
        tot = np.sum((truth - truth.mean(axis=1, keepdims=True)) ** 2, axis=1)
        ok = tot > 0
        excluded += int(np.count_nonzero(~ok))
        r2.extend((1.0 - res[ok] / tot[ok]).tolist())
        sq += float(np.sum(res / truth.shape[1]))
    mean_r2 = float(np.mean(r2)) if r2 else float("nan")
    return Metrics(mean_r2, sq / dataset.n_samples, excluded)


def _slices(dataset: OperatorDataset) -> int | None:
    return dataset.output_shape[0] if len(dataset.output_shape) > 1 else None


def train(dataset: OperatorDataset, spec: DeepONetSpec, config: TrainConfig,
          test: OperatorDataset | None = None, params: ParamStore | None = None):
    """Train ``spec`` on every sample of ``dataset``.

    Each epoch draws a fresh permutation, walks it in contiguous batches of
    ``batch_size`` (the last one may be short), draws fresh evaluation points
    for every sample of every batch, and takes one optimizer step on the mean
    squared error over the ``batch * n_eval`` selected residuals.

    Returns ``(params, RunRecord)``. Wall-clock covers the batch loop only.
    """
    slices = _slices(dataset)
    config.validate(dataset.n_out, slices)
    if dataset.coord_dim != spec.coord_dim:
        raise ValueError(f"dataset coordinates are {dataset.coord_dim}-D, trunk expects {spec.coord_dim}-D")
    strategy = config.strategy
    if strategy == "per-slice-random" and slices is None:
        raise ValueError("per-slice-random needs a dataset with a (slices, points) output grid")
    n_eval = config.n_eval
    if n_eval is None:
        n_eval = dataset.n_out // slices if strategy == "per-slice-random" else dataset.n_out

    seed = config.seed
    if params is None:
        params = spec.init_params(substream(seed, INIT))
    else:
        params = params.copy()
    opt = Optimizer(config.optimizer, config.lr)
    record = RunRecord(config=asdict(config))
    grid = dataset.output_grid
    n = dataset.n_samples
    bs = config.batch_size
    elapsed = 0.0

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = shuffle_indices(n, substream(seed, SHUFFLE, epoch))
        weighted = 0.0
        terms = 0
        for j, start in enumerate(range(0, n, bs)):
            batch = order[start:start + bs]
            s, u = dataset.inputs[batch], dataset.outputs[batch]
            if strategy == "traditional":
                loss, grads = loss_and_grad_full(spec, params, s, u, grid)
                count = u.size
            else:
                sel = select_eval_points(strategy, dataset.n_out, n_eval, len(batch),
                                         substream(seed, SELECT, epoch, j), slices)
                loss, grads = loss_and_grad_randomized(spec, params, s, u, grid, sel)
                count = sel.indices.size
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {j}")
            try:
                opt.step(params.flat, grads.flat)
            except NonFiniteError as exc:
                raise TrainingError(f"epoch {epoch}, batch {j}: {exc}") from None
            weighted += loss * count
            terms += count
        dt = time.perf_counter() - t0
        elapsed += dt
        record.train_loss.append(weighted / terms)
        record.residual_terms.append(terms)
        record.epoch_seconds.append(dt)
        record.cum_seconds.append(elapsed)
        last = epoch == config.epochs - 1
        if test is not None and config.eval_every and ((epoch + 1) % config.eval_every == 0 or last):
            record.test_epochs.append(epoch + 1)
            record.test_loss.append(evaluate_metrics(spec, params, test).mse)
        log.debug("epoch %d loss %.6e (%.3fs)", epoch + 1, record.train_loss[-1], dt)
    return params, record
