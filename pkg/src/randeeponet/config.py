"""Experiment configuration files.

Plain ``key = value`` lines grouped under ``[section]`` headers (INI style).
Recognised keys, with defaults::

    [experiment]
    example = dynamical            # dynamical | diffusion-reaction | heat
    out_dir = runs                 # relative paths resolve against the config file
    dataset =                      # default: <out_dir>/dataset.nods

    [generate]
    n_samples = 2500
    seed = 0
    length_scales =                # comma list; default per example
    variance = 1.0
    mean = 0.0
    substeps = 40                  # diffusion-reaction internal steps per level

    [split]
    n_test = 500                   # last n_test samples form the test set

    [train]
    n_train = 2000
    batch_size = 256
    lr =                           # default 1e-3 (1e-4 for heat)
    epochs = 1000
    optimizer = adam               # adam | sgd
    strategy = random              # random | uniform-spaced | all | per-slice-random | traditional
    n_eval =                       # empty = all points (per slice for per-slice-random)
    seed = 0
    eval_every = 10

    [sweep]                        # only for `ablate`
    n_train = 500, 1000
    n_eval = 1, 10, 50, 100
    strategies = random
    seeds = 0, 1, 2
    epochs =                       # optional override of [train] epochs
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import EXAMPLES
from .errors import ConfigError
from .train import TRAIN_STRATEGIES, TrainConfig

_KNOWN = {
    "experiment": {"example", "out_dir", "dataset"},
    "generate": {"n_samples", "seed", "length_scales", "variance", "mean", "substeps"},
    "split": {"n_test"},
    "train": {"n_train", "batch_size", "lr", "epochs", "optimizer", "strategy", "n_eval", "seed", "eval_every"},
    "sweep": {"n_train", "n_eval", "strategies", "seeds", "epochs"},
}


@dataclass
class GenerateConfig:
    n_samples: int = 2500
    seed: int = 0
    length_scales: tuple[float, ...] | None = None
    variance: float = 1.0
    mean: float = 0.0
    substeps: int = 40

    def kernel_overrides(self) -> dict:
        out = {"variance": self.variance, "mean": self.mean}
        if self.length_scales:
            out["length_scales"] = self.length_scales
        return out


@dataclass
class SweepConfig:
    n_train: list[int]
    n_eval: list[int | None]
    strategies: list[str]
    seeds: list[int]
    epochs: int | None = None


@dataclass
class ExperimentConfig:
    example: str
    out_dir: Path
    dataset: Path
    generate: GenerateConfig
    n_test: int
    n_train: int
    train: TrainConfig
    sweep: SweepConfig | None = None
    source: Path | None = None
    extra: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Apply ``--seed-override``: replaces the generation, training and sweep seeds."""
        sweep = replace(self.sweep, seeds=[seed]) if self.sweep else None
        return replace(
            self,
            generate=replace(self.generate, seed=seed),
            train=replace(self.train, seed=seed),
            sweep=sweep,
            extra={**self.extra, "seed_override": seed},
        )


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return lineno
    return None


class _Fields:
    def __init__(self, parser: configparser.ConfigParser, text: str, path: str):
        self.p = parser
        self.text = text
        self.path = path

    def fail(self, section: str, key: str, msg: str):
        line = _line_of(self.text, section, key)
        where = f"{self.path}:{line}" if line else self.path
        raise ConfigError(f"{where}: [{section}] {key}: {msg}")

    def raw(self, section: str, key: str) -> str | None:
        if not self.p.has_option(section, key):
            return None
        v = self.p.get(section, key).strip()
        return v or None

    def get(self, section, key, conv, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return conv(v)
        except ValueError as exc:
            self.fail(section, key, f"invalid value {v!r} ({exc})")

    def get_list(self, section, key, conv, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            items = [conv(x.strip()) for x in v.split(",") if x.strip()]
        except ValueError as exc:
            self.fail(section, key, f"invalid list {v!r} ({exc})")
        if not items:
            self.fail(section, key, "list must not be empty")
        return items


def _n_eval(v: str) -> int | None:
    return None if v.lower() in ("all", "none") else int(v)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def parse_config(text: str, path: Path | None = None) -> ExperimentConfig:
    name = str(path) if path else "<config>"
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from None
    f = _Fields(parser, text, name)
    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(f"{name}: unknown section [{section}]")
        for key in parser.options(section):
            if key not in _KNOWN[section]:
                f.fail(section, key, "unknown key")

    example = f.get("experiment", "example", str, "dynamical")
    if example not in EXAMPLES:
        f.fail("experiment", "example", f"must be one of {', '.join(EXAMPLES)}")
    base = path.parent if path else Path(".")
    out_dir = base / f.get("experiment", "out_dir", str, "runs")
    ds_raw = f.get("experiment", "dataset", str)
    dataset = base / ds_raw if ds_raw else out_dir / "dataset.nods"

    gen = GenerateConfig(
        n_samples=f.get("generate", "n_samples", int, 2500),
        seed=f.get("generate", "seed", int, 0),
        length_scales=tuple(f.get_list("generate", "length_scales", float, []) or ()) or None,
        variance=f.get("generate", "variance", float, 1.0),
        mean=f.get("generate", "mean", float, 0.0),
        substeps=f.get("generate", "substeps", int, 40),
    )
    if gen.n_samples < 1:
        f.fail("generate", "n_samples", "must be >= 1")
    if gen.variance <= 0:
        f.fail("generate", "variance", "must be positive")
    if gen.length_scales and any(v <= 0 for v in gen.length_scales):
        f.fail("generate", "length_scales", "must be positive")

    default_lr = 1e-4 if example == "heat" else 1e-3
    train = TrainConfig(
        batch_size=f.get("train", "batch_size", int, 256),
        lr=f.get("train", "lr", float, default_lr),
        epochs=f.get("train", "epochs", int, 1000),
        optimizer=f.get("train", "optimizer", str, "adam"),
        strategy=f.get("train", "strategy", str, "random"),
        n_eval=f.get("train", "n_eval", _n_eval),
        seed=f.get("train", "seed", int, 0),
        eval_every=f.get("train", "eval_every", int, 10),
    )
    checks = [
        ("batch_size", train.batch_size >= 1, "must be >= 1"),
        ("lr", train.lr > 0, "must be positive"),
        ("epochs", train.epochs >= 1, "must be >= 1"),
        ("optimizer", train.optimizer in ("adam", "sgd"), "must be adam or sgd"),
        ("strategy", train.strategy in TRAIN_STRATEGIES, f"must be one of {', '.join(TRAIN_STRATEGIES)}"),
        ("n_eval", train.n_eval is None or train.n_eval >= 1, "must be >= 1"),
        ("eval_every", train.eval_every >= 0, "must be >= 0"),
    ]
    for key, ok, msg in checks:
        if not ok:
            f.fail("train", key, msg)

    n_test = f.get("split", "n_test", int, 500)
    n_train = f.get("train", "n_train", int, 2000)
    if n_test < 0:
        f.fail("split", "n_test", "must be >= 0")
    if n_train < 1:
        f.fail("train", "n_train", "must be >= 1")

    sweep = None
    if parser.has_section("sweep"):
        sweep = SweepConfig(
            n_train=f.get_list("sweep", "n_train", int, [n_train]),
            n_eval=f.get_list("sweep", "n_eval", _n_eval, [train.n_eval]),
            strategies=f.get_list("sweep", "strategies", str, [train.strategy]),
            seeds=f.get_list("sweep", "seeds", int, [train.seed]),
            epochs=f.get("sweep", "epochs", int),
        )
        for s in sweep.strategies:
            if s not in TRAIN_STRATEGIES:
                f.fail("sweep", "strategies", f"unknown strategy {s!r}")
        if sweep.epochs is not None and sweep.epochs < 1:
            f.fail("sweep", "epochs", "must be >= 1")
        largest = max(sweep.n_train)
    else:
        largest = n_train
    if largest + n_test > gen.n_samples and not ds_raw:
        f.fail("split", "n_test", f"n_train ({largest}) + n_test ({n_test}) exceeds n_samples ({gen.n_samples})")

    return ExperimentConfig(example, out_dir, dataset, gen, n_test, n_train, train, sweep, path)
