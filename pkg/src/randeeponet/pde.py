"""Reference solvers for the three benchmarks and dataset assembly.

* ``dynamical``: ``du/dt = s(t)``, ``u(0) = 0`` on 100 points of [0, 1].
* ``diffusion-reaction``: ``u_t = D u_xx + k u^2 + s(x)`` with zero initial and
  boundary values, stored at 101 time levels ``t_j = j/100`` (t = 0 included)
  times 100 nodes ``x_i = i/99``.
* ``heat``: ``-div(a grad u) = 0`` on the unit square with ``u = 1`` at x1 = 0,
  ``u = 0`` at x1 = 1 and no flux through x2 = 0, 1, on 32 x 32 nodes.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .data import EXAMPLES, OperatorDataset
from .errors import SolverError
from .gp import KernelSpec, grid_2d, kernel_matrix, sample_gp, sample_log_conductivity

DEFAULT_KERNELS = {
    "dynamical": KernelSpec((0.2,), 1.0),
    "diffusion-reaction": KernelSpec((0.2,), 1.0),
    "heat": KernelSpec((0.1, 0.15), 1.0),
}

DR_DIFFUSION = 0.01
DR_REACTION = 0.01
DR_SUBSTEPS = 40


def solve_antiderivative(s: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid rule on the equispaced grid over [0, 1].

    Works on a single vector or a batch of rows.
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[-1]
    if n < 2:
        raise ValueError("need at least 2 grid points")
    h = 1.0 / (n - 1)
    u = np.zeros_like(s)
    u[..., 1:] = np.cumsum(0.5 * h * (s[..., :-1] + s[..., 1:]), axis=-1)
    return u


def solve_diffusion_reaction(s: np.ndarray, D: float = DR_DIFFUSION, k: float = DR_REACTION,
                             nt: int = 101, nx: int = 100, substeps: int = DR_SUBSTEPS,
                             u0: np.ndarray | None = None) -> np.ndarray:
    """IMEX Euler: implicit diffusion, explicit ``k u^2 + s``.

    ``s`` holds the source on the ``nx`` nodes (boundary entries unused), one
    row per sample for batches. Returns ``(nt, nx)`` or ``(batch, nt, nx)``.
    Levels are ``j / (nt - 1)``, each reached in ``substeps`` equal steps.
    ``u0`` replaces the zero initial state; boundary values stay 0.
    """
    if not D > 0:
        raise ValueError("diffusion coefficient must be positive")
    s = np.asarray(s, dtype=np.float64)
    single = s.ndim == 1
    s2 = s[None, :] if single else s
    if s2.shape[1] != nx:
        raise ValueError(f"source has {s2.shape[1]} points, expected {nx}")
    nb = s2.shape[0]
    h = 1.0 / (nx - 1)
    dt = 1.0 / ((nt - 1) * substeps)
    m = nx - 2
    r = D * dt / (h * h)
    # symmetric tridiagonal (I - dt D L) in upper banded storage
    ab = np.empty((2, m))
    ab[0, 0] = 0.0
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    chol = scipy.linalg.cholesky_banded(ab)

    out = np.zeros((nb, nt, nx))
    u = np.zeros((nb, m))
    if u0 is not None:
        u0 = np.broadcast_to(np.asarray(u0, dtype=np.float64), (nb, nx))
        u[:] = u0[:, 1:-1]
        out[:, 0, 1:-1] = u
    src = s2[:, 1:-1]
    step = 0
    for j in range(1, nt):
        for _ in range(substeps):
            step += 1
            rhs = u + dt * (k * u * u + src)
            u = scipy.linalg.cho_solve_banded((chol, False), rhs.T).T
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite state after {step} internal steps (dt={dt:.3e})")
        out[:, j, 1:-1] = u
    return out[0] if single else out


def solve_steady_heat(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Node-centred 5-point scheme with harmonic-mean face conductivities.

    ``a`` is ``(n1, n2)`` with axis 0 along x1. Columns x1 = 0 and x1 = 1 are
    Dirichlet (1 and 0); the x2 edges use ghost-node reflection.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("conductivity must be a 2-D array")
    if not np.all(a > 0):
        raise ValueError("conductivity must be strictly positive")
    n1, n2 = a.shape
    m1 = n1 - 2  # unknown x1 columns
    nunk = m1 * n2

    def harm(p, q):
        return 2.0 * p * q / (p + q)

    fx = harm(a[:-1, :], a[1:, :])  # faces between i and i+1, shape (n1-1, n2)
    fy = harm(a[:, :-1], a[:, 1:])  # faces between j and j+1, shape (n1, n2-1)

    def idx(i, j):
        return (i - 1) * n2 + j

    rows, cols, vals = [], [], []
    rhs = np.zeros(nunk)
    for i in range(1, n1 - 1):
        for j in range(n2):
            p = idx(i, j)
            diag = 0.0
            for ni, w in ((i - 1, fx[i - 1, j]), (i + 1, fx[i, j])):
                diag += w
                if ni == 0:
                    rhs[p] += w * 1.0
                elif ni < n1 - 1:
                    rows.append(p), cols.append(idx(ni, j)), vals.append(-w)
            # reflected ghost doubles the interior-side face at the edges
            nbrs = []
            if j > 0:
                nbrs.append((j - 1, fy[i, j - 1]))
            if j < n2 - 1:
                nbrs.append((j + 1, fy[i, j]))
            if j == 0:
                nbrs = [(1, 2.0 * fy[i, 0])]
            elif j == n2 - 1:
                nbrs = [(n2 - 2, 2.0 * fy[i, n2 - 2])]
            for nj, w in nbrs:
                diag += w
                rows.append(p), cols.append(idx(i, nj)), vals.append(-w)
            rows.append(p), cols.append(p), vals.append(diag)
    mat = scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(nunk, nunk))
    sol = scipy.sparse.linalg.spsolve(mat, rhs)
    resid = np.linalg.norm(mat @ sol - rhs) / max(np.linalg.norm(rhs), 1.0)
    if not np.isfinite(resid) or resid > tol:
        raise SolverError(f"linear solve failed, relative residual {resid:.3e}")
    u = np.empty((n1, n2))
    u[0, :] = 1.0
    u[-1, :] = 0.0
    u[1:-1, :] = sol.reshape(m1, n2)
    return u


def _kernel_from_overrides(example: str, overrides: dict | None) -> KernelSpec:
    base = DEFAULT_KERNELS[example]
    if not overrides:
        return base
    ls = overrides.get("length_scales", base.length_scales)
    return KernelSpec(ls, overrides.get("variance", base.variance), overrides.get("mean", base.mean))


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def generate_dataset(example: str, n_samples: int, seed: int, kernel_overrides: dict | None = None,
                     substeps: int = DR_SUBSTEPS) -> OperatorDataset:
    """Draw GP inputs for ``example`` and solve each one with its reference solver."""
    if example not in EXAMPLES:
        raise ValueError(f"unknown example {example!r}; expected one of {EXAMPLES}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    kernel = _kernel_from_overrides(example, kernel_overrides)
    meta = {
        "example": example,
        "seed": seed,
        "n_samples": n_samples,
        "kernel.length_scales": kernel.length_scales,
        "kernel.variance": kernel.variance,
        "kernel.mean": kernel.mean,
        "gp.jitter": "escalating from 1e-10*variance, x10 up to 1e-4*variance",
        "gp.stream": "sample i uses SeedSequence(seed, spawn_key=(4, i)) -> PCG64",
    }

    if example == "dynamical":
        t = np.linspace(0.0, 1.0, 100)
        s = sample_gp(kernel_matrix(t, kernel), n_samples, seed, mean=kernel.mean)
        u = solve_antiderivative(s)
        meta["solver"] = "cumulative trapezoid"
        ds = OperatorDataset(example, t, t, s, u, (100,), (100,), {})
    elif example == "diffusion-reaction":
        nt, nx = 101, 100
        x = np.linspace(0.0, 1.0, nx)
        s = sample_gp(kernel_matrix(x, kernel), n_samples, seed, mean=kernel.mean)
        u = np.empty((n_samples, nt * nx))
        for lo in range(0, n_samples, 256):
            hi = min(lo + 256, n_samples)
            try:
                u[lo:hi] = solve_diffusion_reaction(s[lo:hi], nt=nt, nx=nx, substeps=substeps).reshape(hi - lo, -1)
            except SolverError as exc:
                raise SolverError(f"samples {lo}..{hi - 1}: {exc}") from None
        tgrid = np.linspace(0.0, 1.0, nt)
        tt, xx = np.meshgrid(tgrid, x, indexing="ij")
        out_grid = np.column_stack([tt.ravel(), xx.ravel()])
        meta.update({
            "solver": "IMEX Euler, implicit diffusion, explicit reaction+source",
            "solver.D": DR_DIFFUSION, "solver.k": DR_REACTION, "solver.substeps": substeps,
            "grid.time": "t_j = j/100, j = 0..100 (t = 0 row included, identically zero)",
            "grid.order": "row-major (t, x), x fastest",
        })
        ds = OperatorDataset(example, x, out_grid, s, u, (nx,), (nt, nx), {})
    else:
        n1 = n2 = 32
        pts = grid_2d(n1, n2)
        a = sample_log_conductivity(pts, kernel, n_samples, seed)
        u = np.empty_like(a)
        for i in range(n_samples):
            try:
                u[i] = solve_steady_heat(a[i].reshape(n1, n2)).ravel()
            except SolverError as exc:
                raise SolverError(f"sample {i}: {exc}") from None
        meta.update({
            "solver": "5-point finite differences, harmonic face conductivity, direct sparse LU",
            "grid.order": "row-major (x1, x2), x2 fastest",
        })
        ds = OperatorDataset(example, pts, pts, a, u, (n1, n2), (n1, n2), {})
    ds.metadata = {k: _fmt(v) for k, v in meta.items()}
    return ds
