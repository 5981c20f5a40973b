"""Dataset generation, single runs and ablation sweeps driven by an ExperimentConfig."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import OperatorDataset
from .errors import ConfigError
from .formats import read_dataset, write_checkpoint, write_dataset
from .model import preset
from .pde import generate_dataset
from .results import append_result, read_results, row_key, trace_name, write_results, write_trace
from .rng import SPLIT, substream
from .train import TrainConfig, evaluate_metrics, train

log = logging.getLogger(__name__)


def generate(cfg: ExperimentConfig) -> Path:
    g = cfg.generate
    ds = generate_dataset(cfg.example, g.n_samples, g.seed, g.kernel_overrides(), substeps=g.substeps)
    if "seed_override" in cfg.extra:
        ds.metadata["seed_override"] = str(cfg.extra["seed_override"])
    cfg.dataset.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(cfg.dataset, ds)
    return cfg.dataset


def load_or_generate(cfg: ExperimentConfig) -> OperatorDataset:
    if not cfg.dataset.exists():
        log.info("dataset %s missing; generating it", cfg.dataset)
        generate(cfg)
    ds = read_dataset(cfg.dataset)
    if ds.example != cfg.example:
        raise ConfigError(f"dataset {cfg.dataset} holds {ds.example!r}, config asks for {cfg.example!r}")
    return ds


def split(ds: OperatorDataset, n_train: int, n_test: int, seed: int):
    """Last ``n_test`` samples are the test set; the training set is the first
    ``n_train`` entries of a seeded permutation of the rest."""
    pool = ds.n_samples - n_test
    if n_train > pool:
        raise ConfigError(f"n_train={n_train} + n_test={n_test} exceeds the {ds.n_samples} samples")
    order = substream(seed, SPLIT).permutation(pool)
    train_set = ds.subset(np.sort(order[:n_train]))
    test_set = ds.subset(np.arange(pool, ds.n_samples)) if n_test else None
    return train_set, test_set


def resolved_n_eval(ds: OperatorDataset, strategy: str, n_eval: int | None) -> int:
    if n_eval is not None:
        return n_eval
    if strategy == "per-slice-random" and len(ds.output_shape) > 1:
        return ds.n_out // ds.output_shape[0]
    return ds.n_out


@dataclass(frozen=True)
class Job:
    example: str
    n_train: int
    n_test: int
    train: TrainConfig
    out_dir: Path


def run_job(job: Job, ds: OperatorDataset) -> dict:
    """Train one configuration; writes its checkpoint and trace, returns its results row."""
    tc = job.train
    n_eval = resolved_n_eval(ds, tc.strategy, tc.n_eval)
    row = {
        "example": job.example, "n_train": job.n_train, "n_eval": n_eval,
        "strategy": tc.strategy, "seed": tc.seed, "epochs": tc.epochs,
    }
    spec = preset(job.example)
    train_set, test_set = split(ds, job.n_train, job.n_test, tc.seed)
    params, record = train(train_set, spec, tc, test=test_set)
    name = trace_name(row)
    write_trace(job.out_dir / "traces" / f"{name}.csv", record)
    ckpt_dir = job.out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    write_checkpoint(ckpt_dir / f"{name}.nopt", params, {
        "example": job.example, "seed": str(tc.seed), "strategy": tc.strategy,
        "n_eval": str(n_eval), "n_train": str(job.n_train), "epochs": str(tc.epochs),
        "init": record.init,
    })
    if test_set is not None:
        m = evaluate_metrics(spec, params, test_set)
        mse, r2 = m.mse, m.mean_r2
    else:
        mse = r2 = float("nan")
    row.update(final_train_loss=record.train_loss[-1], test_mse=mse, mean_r2=r2,
               train_seconds=record.cum_seconds[-1], status="ok")
    return row


def cmd_train(cfg: ExperimentConfig) -> dict:
    ds = load_or_generate(cfg)
    job = Job(cfg.example, cfg.n_train, cfg.n_test, cfg.train, cfg.out_dir)
    row = run_job(job, ds)
    path = cfg.out_dir / "results.csv"
    write_results(path, read_results(path) + [row])
    return row


def sweep_jobs(cfg: ExperimentConfig, ds: OperatorDataset) -> list[Job]:
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("config has no [sweep] section")
    jobs = []
    for n_train, n_eval, strategy, seed in itertools.product(sw.n_train, sw.n_eval, sw.strategies, sw.seeds):
        tc = replace(cfg.train, n_eval=n_eval, strategy=strategy, seed=seed,
                     epochs=sw.epochs or cfg.train.epochs)
        jobs.append(Job(cfg.example, n_train, cfg.n_test, tc, cfg.out_dir))
    return jobs


def _job_key(job: Job, ds: OperatorDataset) -> tuple:
    n_eval = resolved_n_eval(ds, job.train.strategy, job.train.n_eval)
    return (job.example, job.n_train, n_eval, job.train.strategy, job.train.seed)


_WORKER_DS: OperatorDataset | None = None


def _init_worker(path: str) -> None:
    global _WORKER_DS
    _WORKER_DS = read_dataset(path)


def _run_in_worker(job: Job) -> dict:
    return _run_safely(job, _WORKER_DS)


def _run_safely(job: Job, ds: OperatorDataset) -> dict:
    try:
        return run_job(job, ds)
    except Exception as exc:  # recorded in the table; the sweep goes on
        n_eval = resolved_n_eval(ds, job.train.strategy, job.train.n_eval)
        msg = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
        log.error("run %s failed: %s", _job_key(job, ds), msg)
        return {"example": job.example, "n_train": job.n_train, "n_eval": n_eval,
                "strategy": job.train.strategy, "seed": job.train.seed, "epochs": job.train.epochs,
                "final_train_loss": float("nan"), "test_mse": float("nan"), "mean_r2": float("nan"),
                "train_seconds": float("nan"), "status": msg}


def cmd_ablate(cfg: ExperimentConfig, jobs: int = 1, resume: bool = False) -> tuple[list[dict], int]:
    """Run the sweep cross-product. Returns ``(rows, n_failed)``.

    With ``resume`` rows already present with status ``ok`` are kept and their
    runs skipped. Finished rows are appended as they complete, then the table
    is rewritten in sorted order.
    """
    ds = load_or_generate(cfg)
    path = cfg.out_dir / "results.csv"
    todo = sweep_jobs(cfg, ds)
    keys = {_job_key(j, ds) for j in todo}
    existing = read_results(path) if resume else []
    done = {row_key(r) for r in existing if r["status"] == "ok"}
    rows = [r for r in existing if row_key(r) in done or row_key(r) not in keys]
    todo = [j for j in todo if _job_key(j, ds) not in done]
    write_results(path, rows)

    finished = []
    if jobs <= 1:
        for job in todo:
            row = _run_safely(job, ds)
            append_result(path, row)
            finished.append(row)
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(str(cfg.dataset),)) as pool:
            futures = [pool.submit(_run_in_worker, job) for job in todo]
            for fut in as_completed(futures):
                row = fut.result()
                append_result(path, row)
                finished.append(row)
    rows = rows + finished
    write_results(path, rows)
    final = read_results(path)
    failed = sum(1 for r in final if row_key(r) in keys and r["status"] != "ok")
    return final, failed
