"""DeepONet: branch/trunk networks, the two prediction paths, evaluation-point
selection, and the full-grid and sampled squared-error losses.

A prediction is ``G(s)(xi) = sum_k branch_k(s) * trunk_k(xi)``. Two
contractions are provided:

* shared grid -- the trunk runs once on M coordinates and the result is
  ``branch @ trunk.T`` (shape ``[N_s, M]``);
* per sample -- sample ``i`` carries its own ``N_eval`` coordinates, so the
  trunk runs on ``N_s * N_eval`` rows and each row is dotted with its sample's
  branch vector.

Training with sampled points always goes through the per-sample path; the
shared-grid path serves full-grid losses and test metrics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .nn import (
    AvgPool2D, Conv2D, Dense, Flatten, NetworkSpec, ParamStore, ReLU, ResNetBlock,
    backward, forward, init_params,
)

STRATEGIES = ("random", "uniform-spaced", "all", "per-slice-random")

# trunk rows per chunk in the per-sample path; bounds peak memory
CHUNK_ROWS = 1 << 16


@dataclass(frozen=True)
class DeepONetSpec:
    branch: NetworkSpec
    trunk: NetworkSpec

    def __post_init__(self):
        bo, to = self.branch.output_shape, self.trunk.output_shape
        if len(bo) != 1 or bo != to:
            raise ShapeError(f"branch output {bo} and trunk output {to} must be equal 1-D widths")
        if len(self.trunk.input_shape) != 1:
            raise ShapeError("trunk input must be a coordinate vector")

    @property
    def latent(self) -> int:
        return self.branch.output_shape[0]

    @property
    def coord_dim(self) -> int:
        return self.trunk.input_shape[0]

    @property
    def branch_in(self) -> int:
        return int(np.prod(self.branch.input_shape))

    def layout(self):
        return self.branch.layout("branch.") + self.trunk.layout("trunk.")

    def init_params(self, rng: np.random.Generator | int) -> ParamStore:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        params = ParamStore(self.layout())
        params.section("branch.").flat[:] = init_params(self.branch, rng).flat
        params.section("trunk.").flat[:] = init_params(self.trunk, rng).flat
        return params


def _mlp(widths):
    """``[w0, w1, ..., wn]`` -> Dense layers with ReLU between them (not after the last)."""
    layers = []
    for i in range(len(widths) - 1):
        layers.append(Dense(widths[i], widths[i + 1]))
        if i < len(widths) - 2:
            layers.append(ReLU())
    return layers


def dynamical_model() -> DeepONetSpec:
    return DeepONetSpec(
        NetworkSpec((100,), _mlp([100, 40, 40, 40, 40])),
        NetworkSpec((1,), _mlp([1, 40, 40, 40, 40])),
    )


def diffusion_reaction_model() -> DeepONetSpec:
    return DeepONetSpec(
        NetworkSpec((100,), _mlp([100, 64, 64, 64, 128])),
        NetworkSpec((2,), _mlp([2, 64, 64, 64, 128])),
    )


def heat_model() -> DeepONetSpec:
    branch = NetworkSpec((1, 32, 32), [
        Conv2D(1, 40), ReLU(), AvgPool2D(),
        Conv2D(40, 60), ReLU(), AvgPool2D(),
        Conv2D(60, 100), ReLU(), AvgPool2D(),
        Flatten(),
        *_mlp([400, 150, 150, 150]),
    ])
    trunk = NetworkSpec((2,), [
        Dense(2, 150), ReLU(),
        ResNetBlock(150, 2), ResNetBlock(150, 2),
        Dense(150, 150),
    ])
    return DeepONetSpec(branch, trunk)


PRESETS = {
    "dynamical": dynamical_model,
    "diffusion-reaction": diffusion_reaction_model,
    "heat": heat_model,
}


def preset(example: str) -> DeepONetSpec:
    try:
        return PRESETS[example]()
    except KeyError:
        raise ValueError(f"no preset architecture for {example!r}") from None


def _branch_input(spec: DeepONetSpec, branch_in) -> np.ndarray:
    x = np.asarray(branch_in, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.branch_in:
        raise ShapeError(f"branch input must be [N_s x {spec.branch_in}], got {x.shape}")
    return x.reshape((x.shape[0],) + spec.branch.input_shape)


def _coords(spec: DeepONetSpec, coords, ndim: int) -> np.ndarray:
    c = np.asarray(coords, dtype=np.float64)
    if c.ndim != ndim or c.shape[-1] != spec.coord_dim:
        raise ShapeError(f"coordinates must have {ndim} axes with last extent {spec.coord_dim}, got {c.shape}")
    return c


def predict_shared_grid(spec: DeepONetSpec, params: ParamStore, branch_in, coords) -> np.ndarray:
    """``[N_s, M]`` predictions on one coordinate set shared by all samples."""
    x = _branch_input(spec, branch_in)
    c = _coords(spec, coords, 2)
    b = forward(spec.branch, params.section("branch."), x)
    t = forward(spec.trunk, params.section("trunk."), c)
    return b @ t.T


def predict_per_sample(spec: DeepONetSpec, params: ParamStore, branch_in, coords) -> np.ndarray:
    """``[N_s, N_eval]`` predictions where ``coords[i]`` belongs to sample ``i``."""
    x = _branch_input(spec, branch_in)
    c = _coords(spec, coords, 3)
    if c.shape[0] != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} branch inputs but {c.shape[0]} coordinate blocks")
    b = forward(spec.branch, params.section("branch."), x)
    trunk_params = params.section("trunk.")
    n, e, d = c.shape
    out = np.empty((n, e))
    step = max(1, CHUNK_ROWS // max(e, 1))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        t = forward(spec.trunk, trunk_params, c[lo:hi].reshape(-1, d)).reshape(hi - lo, e, -1)
        out[lo:hi] = np.matmul(t, b[lo:hi, :, None])[..., 0]
    return out


@dataclass(frozen=True)
class EvalSelection:
    """Per-sample output-grid indices: ``indices[i, j]`` picks ``xi*_ij``."""

    indices: np.ndarray
    strategy: str

    @property
    def n_eval(self) -> int:
        return self.indices.shape[1]

    def validate(self, n_out: int) -> None:
        idx = self.indices
        if idx.ndim != 2:
            raise ShapeError("selection must be a [N_s x N_eval] index array")
        if idx.size and (idx.min() < 0 or idx.max() >= n_out):
            raise IndexError(f"selection index out of range [0, {n_out})")


def _partial_shuffle(rng: np.random.Generator, rows: int, n: int, k: int) -> np.ndarray:
    """First ``k`` entries of an independent Fisher-Yates shuffle of ``range(n)`` per row."""
    idx = np.tile(np.arange(n, dtype=np.int64), (rows, 1))
    r = np.arange(rows)
    for m in range(k):
        j = rng.integers(m, n, size=rows)
        tmp = idx[r, m].copy()
        idx[r, m] = idx[r, j]
        idx[r, j] = tmp
    return idx[:, :k].copy()


def select_eval_points(strategy: str, n_out: int, n_eval: int, n_samples: int,
                       rng: np.random.Generator | None = None,
                       slices: int | None = None) -> EvalSelection:
    """Choose evaluation indices for a mini-batch of ``n_samples``.

    ``random``: ``n_eval`` distinct uniform indices per sample.
    ``uniform-spaced``: ``floor(m * n_out / n_eval)`` for every sample.
    ``all``: ``0..n_out-1`` for every sample (``n_eval`` must equal ``n_out``).
    ``per-slice-random``: the grid is ``slices`` consecutive blocks (time
    levels); ``n_eval`` distinct indices are drawn within each block, giving
    ``slices * n_eval`` per sample.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy == "per-slice-random":
        if not slices or n_out % slices:
            raise ValueError(f"per-slice selection needs slices dividing n_out={n_out}")
        per = n_out // slices
        if not 1 <= n_eval <= per:
            raise ValueError(f"n_eval={n_eval} outside [1, {per}] points per slice")
        local = _partial_shuffle(rng, n_samples * slices, per, n_eval)
        offsets = (np.arange(slices, dtype=np.int64) * per)[None, :, None]
        idx = local.reshape(n_samples, slices, n_eval) + offsets
        return EvalSelection(idx.reshape(n_samples, slices * n_eval), strategy)
    if not 1 <= n_eval <= n_out:
        raise ValueError(f"n_eval={n_eval} outside [1, {n_out}]")
    if strategy == "random":
        return EvalSelection(_partial_shuffle(rng, n_samples, n_out, n_eval), strategy)
    if strategy == "uniform-spaced":
        row = (np.arange(n_eval, dtype=np.int64) * n_out) // n_eval
    else:
        if n_eval != n_out:
            raise ValueError("strategy 'all' requires n_eval == n_out")
        row = np.arange(n_out, dtype=np.int64)
    return EvalSelection(np.tile(row, (n_samples, 1)), strategy)


def _truth(truths, n_samples: int) -> np.ndarray:
    u = np.asarray(truths, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != n_samples:
        raise ShapeError(f"truths must be [{n_samples} x N_out], got {u.shape}")
    return u


def loss_full(spec, params, inputs, truths, grid) -> float:
    """Mean squared error over every sample and every output-grid point."""
    return loss_and_grad_full(spec, params, inputs, truths, grid, need_grad=False)[0]


def loss_randomized(spec, params, inputs, truths, grid, selection: EvalSelection) -> float:
    """Mean squared error over each sample's selected points only."""
    return loss_and_grad_randomized(spec, params, inputs, truths, grid, selection, need_grad=False)[0]


def loss_and_grad_full(spec: DeepONetSpec, params: ParamStore, inputs, truths, grid,
                       need_grad: bool = True):
    """Full-grid loss via the shared-grid contraction, and its gradient."""
    x = _branch_input(spec, inputs)
    c = _coords(spec, grid, 2)
    u = _truth(truths, x.shape[0])
    if u.shape[1] != c.shape[0]:
        raise ShapeError(f"truths have {u.shape[1]} points, grid has {c.shape[0]}")
    bp, tp = params.section("branch."), params.section("trunk.")
    b, btape = forward(spec.branch, bp, x, keep_tape=True)
    t, ttape = forward(spec.trunk, tp, c, keep_tape=True)
    r = b @ t.T - u
    loss = float(np.sum(r * r) / r.size)
    if not need_grad:
        return loss, None
    dpred = (2.0 / r.size) * r
    grads = params.zeros_like()
    gb, _ = backward(spec.branch, bp, x, dpred @ t, tape=btape)
    gt, _ = backward(spec.trunk, tp, c, dpred.T @ b, tape=ttape)
    grads.section("branch.").flat[:] = gb.flat
    grads.section("trunk.").flat[:] = gt.flat
    return loss, grads


def loss_and_grad_randomized(spec: DeepONetSpec, params: ParamStore, inputs, truths, grid,
                             selection: EvalSelection, need_grad: bool = True):
    """Sampled-point loss via the per-sample contraction, and its gradient.

    The trunk sees ``N_s * N_eval`` coordinate rows, processed in chunks of
    whole samples so memory stays bounded on large grids.
    """
    x = _branch_input(spec, inputs)
    c = _coords(spec, grid, 2)
    u = _truth(truths, x.shape[0])
    idx = np.asarray(selection.indices)
    if idx.shape[0] != x.shape[0]:
        raise ShapeError(f"selection has {idx.shape[0]} rows for {x.shape[0]} samples")
    EvalSelection(idx, selection.strategy).validate(c.shape[0])
    n, e = idx.shape
    denom = n * e
    bp, tp = params.section("branch."), params.section("trunk.")
    b, btape = forward(spec.branch, bp, x, keep_tape=True)
    u_sel = np.take_along_axis(u, idx, axis=1)

    grads = params.zeros_like() if need_grad else None
    gt_total = grads.section("trunk.").flat if need_grad else None
    db = np.zeros_like(b) if need_grad else None
    total = 0.0
    step = max(1, CHUNK_ROWS // max(e, 1))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        rows = c[idx[lo:hi].ravel()]
        t, ttape = forward(spec.trunk, tp, rows, keep_tape=True)
        t3 = t.reshape(hi - lo, e, -1)
        bc = b[lo:hi]
        r = np.matmul(t3, bc[:, :, None])[..., 0] - u_sel[lo:hi]
        total += float(np.sum(r * r))
        if need_grad:
            dpred = (2.0 / denom) * r
            db[lo:hi] = np.matmul(dpred[:, None, :], t3)[:, 0, :]
            dt = (dpred[:, :, None] * bc[:, None, :]).reshape(-1, t.shape[1])
            gt, _ = backward(spec.trunk, tp, rows, dt, tape=ttape)
            gt_total += gt.flat
    loss = total / denom
    if not need_grad:
        return loss, None
    gb, _ = backward(spec.branch, bp, x, db, tape=btape)
    grads.section("branch.").flat[:] = gb.flat
    return loss, grads
