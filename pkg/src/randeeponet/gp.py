"""Gaussian-process random fields with squared-exponential covariance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .rng import FIELD, substream

JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel ``variance * exp(-sum_d (p_d - q_d)^2 / (2 l_d^2))`` plus a constant mean."""

    length_scales: tuple[float, ...]
    variance: float = 1.0
    mean: float = 0.0

    def __post_init__(self):
        ls = self.length_scales
        if np.isscalar(ls):
            ls = (ls,)
        object.__setattr__(self, "length_scales", tuple(float(v) for v in ls))
        if not all(v > 0 for v in self.length_scales):
            raise ValueError("length scales must be positive")
        if not self.variance > 0:
            raise ValueError("variance must be positive")


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def kernel_matrix(points, kernel: KernelSpec) -> np.ndarray:
    pts = _as_points(points)
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    if pts.shape[1] != len(kernel.length_scales):
        raise ValueError(f"{pts.shape[1]}-D points but {len(kernel.length_scales)} length scales")
    scaled = pts / np.asarray(kernel.length_scales)
    sq = np.zeros((pts.shape[0], pts.shape[0]))
    for d in range(scaled.shape[1]):
        diff = scaled[:, d, None] - scaled[None, :, d]
        sq += diff * diff
    return kernel.variance * np.exp(-0.5 * sq)


def cholesky_with_jitter(kmat: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower factor of ``K + jitter*I``; jitter starts at 1e-10*scale and grows
    by 10x up to 1e-4*scale, where scale is the largest diagonal entry."""
    n = kmat.shape[0]
    scale = float(np.max(np.diag(kmat))) if n else 1.0
    jitter = JITTER_START * scale
    while True:
        try:
            return np.linalg.cholesky(kmat + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            if jitter >= JITTER_MAX * scale * (1 - 1e-12):
                raise SolverError(f"Cholesky failed with jitter up to {jitter:.3e}") from None
            jitter *= 10.0


def sample_gp(kernel_mat: np.ndarray, n_samples: int, seed: int, mean: float = 0.0,
              jitter: float | None = None) -> np.ndarray:
    """Draw ``n_samples`` rows ``mean + L z``.

    Sample ``i`` takes its standard-normal vector from ``substream(seed, FIELD, i)``,
    so any row can be regenerated on its own. ``jitter=None`` uses the escalating
    schedule of :func:`cholesky_with_jitter`.
    """
    kmat = np.asarray(kernel_mat, dtype=np.float64)
    n = kmat.shape[0]
    if jitter is None:
        chol, _ = cholesky_with_jitter(kmat)
    else:
        if jitter < 0:
            raise ValueError("jitter must be non-negative")
        try:
            chol = np.linalg.cholesky(kmat + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            raise SolverError(f"Cholesky failed with jitter {jitter:.3e}") from None
    out = np.empty((n_samples, n))
    for i in range(n_samples):
        z = substream(seed, FIELD, i).standard_normal(n)
        out[i] = mean + chol @ z
    return out


def sample_log_conductivity(grid2d, kernel: KernelSpec, n_samples: int, seed: int) -> np.ndarray:
    """Log-normal field ``exp(g)`` with ``g ~ GP(kernel.mean, kernel)`` on 2-D points."""
    pts = _as_points(grid2d)
    if pts.shape[1] != 2:
        raise ValueError("log-conductivity fields need 2-D points")
    g = sample_gp(kernel_matrix(pts, kernel), n_samples, seed, mean=kernel.mean)
    return np.exp(g)


def grid_2d(n1: int, n2: int) -> np.ndarray:
    """Row-major ``(x1, x2)`` nodes on the unit square, ``x2`` varying fastest."""
    x1 = np.linspace(0.0, 1.0, n1)
    x2 = np.linspace(0.0, 1.0, n2)
    a, b = np.meshgrid(x1, x2, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])
