"""Experiment driver: JSON configs, single runs, grid sweeps, results CSV.

A config is a JSON object::

    {
      "dataset": {"source": "two_moons", "n": 2000, "noise": 0.2, "seed": 0,
                  "label_noise": 0.0, "split": [0.6, 0.2, 0.2]},
      "model": {"hidden": [32, 32], "activation": "relu"},
      "optimizer": {"learning_rate": 0.1, "momentum": 0.9,
                    "weight_decay": 1e-4, "schedule": [[60, 0.2]],
                    "epochs": 100, "batch_size": 128},
      "regularizer": {"variants": ["none", "direct", "det", "logdet"],
                      "lambda1": 0.001, "lambda2": 0.001, "gamma": 10,
                      "epsilon": 1e-6, "smooth_kernel": false},
      "grid": {"lambda1": [0.001, 0.01], "lambda2": [0.001], "gamma": [1, 10]},
      "seeds": [0, 1, 2],
      "output": "results.csv",
      "workers": 1
    }

Only ``dataset`` and ``model`` are required. Dataset sources are
``two_moons`` (n, noise), ``blobs`` (n_per_class, num_classes, dim, spread),
``idx`` (images, labels) and ``csv`` (path, label_column). ``label_noise``
flips labels of the train and validation parts; the test part stays clean.
``standardize`` z-scores every feature with the train part's mean and
standard deviation.
The dataset, its split and its noise depend on ``dataset.seed`` only; the
run seed drives weight init and batch order.

The output path is resolved against ``WLDREG_OUTPUT_DIR`` when that
variable is set.
"""

import csv
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import linalg, network
from .diversity import DEFAULT_EPSILON, RegularizerSpec, Variant
from .errors import NotPositiveDefinite, SchemaError
from .similarity import pairwise_similarity

OUTPUT_DIR_ENV = "WLDREG_OUTPUT_DIR"
CSV_COLUMNS = ("variant", "seed", "lambda1", "lambda2", "gamma",
               "train_err", "val_err", "test_err", "gap", "epochs", "wall_s")
DEFAULT_VARIANTS = ("none", "direct", "det", "logdet")
DUMP_BATCH = 256

_DATASET_KEYS = {
    "two_moons": {"n": 1000, "noise": 0.2},
    "blobs": {"n_per_class": 200, "num_classes": 3, "dim": 2, "spread": 1.0},
    "idx": {"images": None, "labels": None},
    "csv": {"path": None, "label_column": -1},
}


@dataclass(frozen=True)
class DatasetConfig:
    source: str
    params: dict
    seed: int = 0
    label_noise: float = 0.0
    split: tuple = (0.6, 0.2, 0.2)
    standardize: bool = False


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (32, 32)
    activation: str = "relu"


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: tuple = ()
    epochs: int = 100
    batch_size: int = 128

    def state(self):
        return network.OptimizerState(self.learning_rate, self.momentum, self.weight_decay,
                                      list(self.schedule))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    model: ModelConfig
    optimizer: OptimizerConfig
    variants: tuple
    base: RegularizerSpec
    grid: dict
    seeds: tuple
    output: str = "results.csv"
    workers: int = 1

    def output_path(self):
        override = os.environ.get(OUTPUT_DIR_ENV)
        path = Path(self.output)
        if override:
            path = Path(override) / path.name
        return path

    def points(self):
        """(lambda1, lambda2, gamma) grid points; missing axes use the base values."""
        axes = [self.grid.get(k, [getattr(self.base, k)]) for k in ("lambda1", "lambda2", "gamma")]
        return list(itertools.product(*axes))


# --- config parsing -------------------------------------------------------

def _number(section, key, value, *, minimum=None, strict=False, integer=False):
    name = f"{section}.{key}" if section else key
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(name, f"expected a number, got {value!r}")
    if integer and value != int(value):
        raise SchemaError(name, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(name, "must be finite")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        raise SchemaError(name, f"must be {'>' if strict else '>='} {minimum}, got {value}")
    return int(value) if integer else float(value)


def _section(obj, key, required=False):
    if key not in obj:
        if required:
            raise SchemaError(key, "missing required section")
        return {}
    value = obj[key]
    if not isinstance(value, dict):
        raise SchemaError(key, "expected an object")
    return value


def _reject_unknown(section, obj, allowed):
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{section}.{key}" if section else key, "unknown key")


def _parse_dataset(obj):
    source = obj.get("source")
    if source not in _DATASET_KEYS:
        raise SchemaError("dataset.source",
                          f"expected one of {', '.join(_DATASET_KEYS)}, got {source!r}")
    defaults = _DATASET_KEYS[source]
    common = {"source", "seed", "label_noise", "split", "standardize"}
    _reject_unknown("dataset", obj, common | set(defaults))
    params = {}
    for key, default in defaults.items():
        value = obj.get(key, default)
        if value is None:
            raise SchemaError(f"dataset.{key}", f"required for source {source!r}")
        params[key] = value
    if source == "two_moons":
        params["n"] = _number("dataset", "n", params["n"], minimum=2, integer=True)
        params["noise"] = _number("dataset", "noise", params["noise"], minimum=0)
    elif source == "blobs":
        for key in ("n_per_class", "num_classes", "dim"):
            params[key] = _number("dataset", key, params[key], minimum=1, integer=True)
        params["spread"] = _number("dataset", "spread", params["spread"], minimum=0, strict=True)
    elif source == "csv":
        params["label_column"] = _number("dataset", "label_column", params["label_column"],
                                         integer=True)
    for key in ("images", "labels", "path"):
        if key in params:
            if not isinstance(params[key], str):
                raise SchemaError(f"dataset.{key}", "expected a file path")
            if not os.path.isfile(params[key]):
                raise SchemaError(f"dataset.{key}", f"file not found: {params[key]}")
    noise = _number("dataset", "label_noise", obj.get("label_noise", 0.0), minimum=0)
    if noise > 1:
        raise SchemaError("dataset.label_noise", f"must be <= 1, got {noise}")
    fractions = obj.get("split", [0.6, 0.2, 0.2])
    if not isinstance(fractions, list) or len(fractions) != 3:
        raise SchemaError("dataset.split", "expected three fractions")
    fractions = tuple(_number("dataset", "split", f, minimum=0) for f in fractions)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SchemaError("dataset.split", f"fractions must sum to 1, got {sum(fractions)}")
    seed = _number("dataset", "seed", obj.get("seed", 0), minimum=0, integer=True)
    standardize = obj.get("standardize", False)
    if not isinstance(standardize, bool):
        raise SchemaError("dataset.standardize", "expected true or false")
    return DatasetConfig(source, params, seed, noise, fractions, standardize)


def _parse_model(obj):
    _reject_unknown("model", obj, {"hidden", "activation"})
    hidden = obj.get("hidden", [32, 32])
    if not isinstance(hidden, list) or not hidden:
        raise SchemaError("model.hidden", "expected a non-empty list of layer widths")
    hidden = tuple(_number("model", "hidden", h, minimum=1, integer=True) for h in hidden)
    activation = obj.get("activation", "relu")
    try:
        network.Activation(activation)
    except ValueError:
        raise SchemaError("model.activation", f"unknown activation {activation!r}") from None
    return ModelConfig(hidden, activation)


def _parse_optimizer(obj):
    allowed = {"learning_rate", "momentum", "weight_decay", "schedule", "epochs", "batch_size"}
    _reject_unknown("optimizer", obj, allowed)
    d = OptimizerConfig()
    lr = _number("optimizer", "learning_rate", obj.get("learning_rate", d.learning_rate),
                 minimum=0, strict=True)
    momentum = _number("optimizer", "momentum", obj.get("momentum", d.momentum), minimum=0)
    if momentum >= 1:
        raise SchemaError("optimizer.momentum", f"must be < 1, got {momentum}")
    wd = _number("optimizer", "weight_decay", obj.get("weight_decay", d.weight_decay), minimum=0)
    schedule = obj.get("schedule", [])
    if not isinstance(schedule, list) or not all(
            isinstance(p, list) and len(p) == 2 for p in schedule):
        raise SchemaError("optimizer.schedule", "expected a list of [epoch, multiplier] pairs")
    schedule = tuple((_number("optimizer", "schedule", e, minimum=0, integer=True),
                      _number("optimizer", "schedule", f, minimum=0, strict=True))
                     for e, f in schedule)
    epochs = _number("optimizer", "epochs", obj.get("epochs", d.epochs), minimum=0, integer=True)
    batch = _number("optimizer", "batch_size", obj.get("batch_size", d.batch_size),
                    minimum=1, integer=True)
    return OptimizerConfig(lr, momentum, wd, schedule, epochs, batch)


def _parse_regularizer(obj):
    allowed = {"variants", "lambda1", "lambda2", "gamma", "epsilon", "smooth_kernel"}
    _reject_unknown("regularizer", obj, allowed)
    names = obj.get("variants", list(DEFAULT_VARIANTS))
    if not isinstance(names, list) or not names:
        raise SchemaError("regularizer.variants", "expected a non-empty list")
    variants = tuple(dict.fromkeys(Variant.parse(v) for v in names))
    lambda1 = _number("regularizer", "lambda1", obj.get("lambda1", 0.001), minimum=0)
    lambda2 = _number("regularizer", "lambda2", obj.get("lambda2", 0.001), minimum=0)
    gamma = _number("regularizer", "gamma", obj.get("gamma", 10.0), minimum=0, strict=True)
    epsilon = _number("regularizer", "epsilon", obj.get("epsilon", DEFAULT_EPSILON),
                      minimum=0, strict=True)
    smooth = obj.get("smooth_kernel", False)
    if not isinstance(smooth, bool):
        raise SchemaError("regularizer.smooth_kernel", "expected true or false")
    return variants, RegularizerSpec(Variant.NONE, lambda1, lambda2, gamma, epsilon, smooth)


def _parse_grid(obj):
    _reject_unknown("grid", obj, {"lambda1", "lambda2", "gamma"})
    grid = {}
    for key, values in obj.items():
        if not isinstance(values, list) or not values:
            raise SchemaError(f"grid.{key}", "expected a non-empty list")
        strict = key == "gamma"
        grid[key] = [_number("grid", key, v, minimum=0, strict=strict) for v in values]
    return grid


def parse_config(text):
    """Parse and validate a JSON experiment config, filling defaults."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<config>", f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("<config>", "expected a JSON object")
    _reject_unknown("", obj, {"dataset", "model", "optimizer", "regularizer", "grid",
                              "seeds", "output", "workers"})
    dataset = _parse_dataset(_section(obj, "dataset", required=True))
    model = _parse_model(_section(obj, "model", required=True))
    optimizer = _parse_optimizer(_section(obj, "optimizer"))
    variants, base = _parse_regularizer(_section(obj, "regularizer"))
    grid = _parse_grid(_section(obj, "grid"))
    seeds = obj.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise SchemaError("seeds", "expected a non-empty list of integers")
    seeds = tuple(dict.fromkeys(_number("", "seeds", s, minimum=0, integer=True) for s in seeds))
    output = obj.get("output", "results.csv")
    if not isinstance(output, str) or not output:
        raise SchemaError("output", "expected a file path")
    workers = _number("", "workers", obj.get("workers", 1), minimum=1, integer=True)
    return ExperimentConfig(dataset, model, optimizer, variants, base, grid, seeds, output, workers)


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


# --- datasets -------------------------------------------------------------

def build_dataset(cfg):
    """Generate or load the source data, split it and apply label noise."""
    p, seed = cfg.params, cfg.seed
    if cfg.source == "two_moons":
        ds = data_mod.gen_two_moons(p["n"], p["noise"], seed)
    elif cfg.source == "blobs":
        ds = data_mod.gen_blobs(p["n_per_class"], p["num_classes"], p["dim"], p["spread"], seed)
    elif cfg.source == "idx":
        ds = data_mod.load_idx(p["images"], p["labels"])
    else:
        ds = data_mod.load_csv(p["path"], p["label_column"])
    parts = data_mod.split(ds, cfg.split, seed)
    if cfg.standardize:
        parts = _standardize(parts)
    if cfg.label_noise > 0:
        parts = data_mod.Split(
            data_mod.inject_label_noise(parts.train, cfg.label_noise, seed + 1),
            data_mod.inject_label_noise(parts.val, cfg.label_noise, seed + 2),
            parts.test,
        )
    return parts


def _standardize(parts):
    mean = parts.train.features.mean(axis=0)
    std = parts.train.features.std(axis=0)
    std[std == 0] = 1.0  # constant features stay constant

    def scaled(ds):
        return data_mod.Dataset((ds.features - mean) / std, ds.labels, ds.num_classes,
                                f"{ds.provenance} + standardize")

    return data_mod.Split(scaled(parts.train), scaled(parts.val), scaled(parts.test))


# --- runs -----------------------------------------------------------------

@dataclass
class EpochRecord:
    """Metrics after ``epoch`` epochs of training (epoch 0 is the initial model)."""

    epoch: int
    train_err: float
    val_err: float
    test_err: float
    task_loss: float = float("nan")
    reg_loss: float = float("nan")
    aug_loss: float = float("nan")
    feature_similarity: float = float("nan")


@dataclass
class RunResult:
    variant: str
    seed: int
    lambda1: float
    lambda2: float
    gamma: float
    train_err: float
    val_err: float
    test_err: float
    gap: float
    epochs: int
    wall_s: float
    best_epoch: int = 0
    curve: list = field(default_factory=list, repr=False)

    def row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]

    def key(self):
        return (self.variant, self.seed, self.lambda1, self.lambda2, self.gamma)


def _run_one(cfg, parts, variant, seed, point):
    """Train one model and evaluate its best-validation checkpoint."""
    lambda1, lambda2, gamma = point
    spec = replace(cfg.base, variant=variant, lambda1=lambda1, lambda2=lambda2, gamma=gamma)
    dims = [parts.train.features.shape[1], *cfg.model.hidden, parts.train.num_classes]
    start = time.perf_counter()
    model = network.Mlp.build(dims, cfg.model.activation, seed=seed)
    opt = cfg.optimizer.state()

    def evaluate(epoch, metrics=None):
        rec = EpochRecord(epoch, network.error_rate(model, parts.train),
                          network.error_rate(model, parts.val), network.error_rate(model, parts.test))
        if metrics is not None:
            rec.task_loss, rec.reg_loss, rec.aug_loss = (
                metrics.task_loss, metrics.reg_loss, metrics.aug_loss)
            rec.feature_similarity = metrics.feature_similarity
        return rec

    curve = [evaluate(0)]
    best_epoch, best_val, best_weights = 0, curve[0].val_err, model.snapshot()
    for epoch in range(cfg.optimizer.epochs):
        metrics = network.train_epoch(model, parts.train, spec, opt, seed, epoch,
                                      cfg.optimizer.batch_size, track_similarity=False)
        rec = evaluate(epoch + 1, metrics)
        curve.append(rec)
        if rec.val_err < best_val:
            best_epoch, best_val, best_weights = epoch + 1, rec.val_err, model.snapshot()
    model.restore(best_weights)
    train_err = network.error_rate(model, parts.train)
    test_err = network.error_rate(model, parts.test)
    return RunResult(
        variant=spec.variant.value, seed=seed, lambda1=lambda1, lambda2=lambda2, gamma=gamma,
        train_err=train_err, val_err=best_val, test_err=test_err, gap=train_err - test_err,
        epochs=cfg.optimizer.epochs, wall_s=time.perf_counter() - start,
        best_epoch=best_epoch, curve=curve,
    )


def _jobs(cfg, points):
    return [(v, s, p) for p in points for v in cfg.variants for s in cfg.seeds]


def _execute(cfg, jobs, on_result=None):
    """Run ``jobs`` and return results in job order, reporting each as it is ready."""
    if not jobs:
        return []
    parts = build_dataset(cfg.dataset)
    results = []
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            futures = [pool.submit(_run_one, cfg, parts, *job) for job in jobs]
            # Consume in submission order: the single writer keeps rows ordered.
            for fut in futures:
                results.append(fut.result())
                if on_result:
                    on_result(results[-1])
    else:
        for job in jobs:
            results.append(_run_one(cfg, parts, *job))
            if on_result:
                on_result(results[-1])
    return results


def run_experiment(cfg, on_result=None):
    """Every variant x seed at the base hyperparameters."""
    base = (cfg.base.lambda1, cfg.base.lambda2, cfg.base.gamma)
    return _execute(cfg, _jobs(cfg, [base]), on_result)


# --- results CSV ----------------------------------------------------------

def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else str(value)


class ResultsWriter:
    """Append-only results CSV; writes the header once and flushes every row."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self._file = open(self.path, "a", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file, lineterminator="\n")
        if fresh:
            self._writer.writerow(CSV_COLUMNS)
            self._file.flush()

    def write(self, result):
        self._writer.writerow([_fmt(v) for v in result.row()])
        self._file.flush()

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_results(path):
    """Rows of a results CSV as dicts with numeric fields converted."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise SchemaError("output", f"{path} does not have the results columns")
        rows = []
        for row in reader:
            for key in CSV_COLUMNS[1:]:
                row[key] = int(row[key]) if key in ("seed", "epochs") else float(row[key])
            rows.append(row)
    return rows


def _row_key(row):
    return (row["variant"], row["seed"], row["lambda1"], row["lambda2"], row["gamma"])


def run_to_csv(cfg, path=None):
    """``run_experiment`` writing a fresh results CSV."""
    path = Path(path) if path else cfg.output_path()
    if path.exists():
        path.unlink()
    with ResultsWriter(path) as writer:
        return run_experiment(cfg, writer.write)


def sweep(cfg, path=None):
    """Grid x variants x seeds into the results CSV, skipping rows already there.

    Returns the results computed by this call.
    """
    path = Path(path) if path else cfg.output_path()
    done = set()
    if path.exists() and path.stat().st_size:
        done = {_row_key(r) for r in read_results(path)}
    points = [tuple(float(x) for x in p) for p in cfg.points()]
    jobs = [(v, s, p) for v, s, p in _jobs(cfg, points) if (v.value, s, *p) not in done]
    with ResultsWriter(path) as writer:
        return _execute(cfg, jobs, writer.write)


# --- similarity dump ------------------------------------------------------

def dump_similarity(model, dataset, gamma, path, batch_size=DUMP_BATCH):
    """Write the feature-layer similarity matrix of the first ``batch_size`` samples.

    The first line is a comment ``# det=<value> logdet=<value>``; logdet is
    ``-inf`` when S is singular. Returns the matrix.
    """
    if len(dataset) == 0:
        raise ValueError("cannot compute similarity on an empty dataset")
    trace = network.forward(model, dataset.features[:batch_size])
    s = pairwise_similarity(trace.features, gamma).s
    det = linalg.det_psd(s, 0.0, tolerant=True)
    try:
        logdet = linalg.logdet_psd(s)
    except NotPositiveDefinite:
        logdet = float("-inf")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# det={det!r} logdet={logdet!r}\n")
        writer = csv.writer(f, lineterminator="\n")
        for row in s:
            writer.writerow([repr(float(v)) for v in row])
    return s


def train_for_dump(cfg):
    """Train the first variant at the first seed and return (model, test set, gamma)."""
    parts = build_dataset(cfg.dataset)
    variant, seed = cfg.variants[0], cfg.seeds[0]
    spec = replace(cfg.base, variant=variant)
    dims = [parts.train.features.shape[1], *cfg.model.hidden, parts.train.num_classes]
    model = network.Mlp.build(dims, cfg.model.activation, seed=seed)
    opt = cfg.optimizer.state()
    for epoch in range(cfg.optimizer.epochs):
        network.train_epoch(model, parts.train, spec, opt, seed, epoch,
                            cfg.optimizer.batch_size, track_similarity=False)
    return model, parts.test, spec.gamma


def summarize(results):
    """Mean test error and gap per variant, as printable lines."""
    by_variant = {}
    for r in results:
        by_variant.setdefault(r.variant, []).append(r)
    lines = []
    for variant, rows in by_variant.items():
        test = np.mean([r.test_err for r in rows])
        gap = np.mean([r.gap for r in rows])
        lines.append(f"{variant:<8} runs={len(rows):<3} test_err={test:6.2f}%  gap={gap:+6.2f}")
    return lines
