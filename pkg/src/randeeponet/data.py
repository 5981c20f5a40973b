"""Paired input/output function samples on fixed sensor grids."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EXAMPLES = ("dynamical", "diffusion-reaction", "heat")


@dataclass
class OperatorDataset:
    """Discretized input functions and their output fields.

    ``inputs[i]`` samples the i-th input function on ``input_grid`` (N_in rows of
    coordinates) and ``outputs[i]`` the matching solution on ``output_grid``
    (N_out rows, coordinate dimension d_o). ``input_shape``/``output_shape`` give
    the axis extents of those grids in row-major order, e.g. ``(101, 100)`` for
    (time, space) with space fastest.
    """

    example: str
    input_grid: np.ndarray
    output_grid: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.input_grid = np.asarray(self.input_grid, dtype=np.float64)
        self.output_grid = np.asarray(self.output_grid, dtype=np.float64)
        if self.input_grid.ndim == 1:
            self.input_grid = self.input_grid[:, None]
        if self.output_grid.ndim == 1:
            self.output_grid = self.output_grid[:, None]
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.output_shape = tuple(int(v) for v in self.output_shape)
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}
        self.validate()

    def validate(self) -> None:
        n = self.inputs.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one sample")
        if self.inputs.shape != (n, self.n_in) or self.outputs.shape != (n, self.n_out):
            raise ValueError(
                f"inputs {self.inputs.shape} / outputs {self.outputs.shape} do not match "
                f"grids of {self.n_in} and {self.n_out} points"
            )
        if int(np.prod(self.input_shape)) != self.n_in or int(np.prod(self.output_shape)) != self.n_out:
            raise ValueError("grid shapes disagree with grid lengths")
        for name in ("inputs", "outputs", "input_grid", "output_grid"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_in(self) -> int:
        return self.input_grid.shape[0]

    @property
    def n_out(self) -> int:
        return self.output_grid.shape[0]

    @property
    def coord_dim(self) -> int:
        return self.output_grid.shape[1]

    def subset(self, indices) -> "OperatorDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return OperatorDataset(
            self.example, self.input_grid, self.output_grid,
            self.inputs[idx], self.outputs[idx],
            self.input_shape, self.output_shape, dict(self.metadata),
        )
