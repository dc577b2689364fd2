"""Factor sweeps: train models over a grid, probe their codes, write records.

A sweep varies one factor (width, training time, sample size, regularizer,
label noise, or the layers forming the code) over a list of values and
seeds. Each trained model is probed at every checkpoint epoch and yields
one :class:`ExperimentRecord` per (value, seed, epoch).
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import data as data_mod
from .codes import LayerMask, code_matrix, restrict_matrix
from .geometry import DEFAULT_CAP, avg_stochastic_diameter
from .nn import TrainConfig, TrainingDivergedError, accuracy, init_model, train
from .probes import (
    DegenerateClusteringError,
    ProbeFailedError,
    kmeans_accuracy,
    knn_accuracy,
    logreg_accuracy,
    redundancy,
)

logger = logging.getLogger(__name__)

FACTORS = ("width", "training_time", "sample_size", "regularizer", "label_noise", "layer_ablation")
PROBES = ("redundancy", "kmeans", "knn", "logreg", "diameter")
REGULARIZERS = ("none", "batch_norm", "weight_decay", "grad_clip")

RECORD_COLUMNS = [
    "factor",
    "value",
    "seed",
    "epoch",
    "sample_size",
    "noise_rate",
    "regularizers",
    "redundancy_train",
    "redundancy_test",
    "kmeans_train",
    "kmeans_test",
    "knn_train",
    "knn_test",
    "logreg_train",
    "logreg_test",
    "raw_test_acc",
    "mean_diameter",
    "bounded_count",
    "status",
    "wall_time",
]
METRIC_COLUMNS = RECORD_COLUMNS[7:18]


@dataclass(frozen=True)
class RegimeThresholds:
    ratio_lo: float = 0.02
    ratio_hi: float = 0.2
    acc_lo: float = 0.5
    acc_hi: float = 0.9

    def __post_init__(self):
        if self.ratio_lo > self.ratio_hi or self.acc_lo > self.acc_hi:
            raise ValueError(f"inconsistent regime thresholds {self}")


@dataclass(frozen=True)
class RegimeLabel:
    regime: str
    thresholds: RegimeThresholds


@dataclass
class ExperimentRecord:
    factor: str
    value: str
    seed: int
    epoch: int
    sample_size: int
    noise_rate: float
    regularizers: str
    redundancy_train: float | None = None
    redundancy_test: float | None = None
    kmeans_train: float | None = None
    kmeans_test: float | None = None
    knn_train: float | None = None
    knn_test: float | None = None
    logreg_train: float | None = None
    logreg_test: float | None = None
    raw_test_acc: float | None = None
    mean_diameter: float | None = None
    bounded_count: int | None = None
    status: str = "ok"
    wall_time: float = 0.0

    @property
    def key(self) -> tuple:
        return (self.factor, self.value, self.seed, self.epoch)


@dataclass
class SweepConfig:
    """Everything that defines a sweep; flat so it maps 1:1 onto a YAML file."""

    factor: str
    values: list
    seeds: list = field(default_factory=lambda: [0])
    checkpoint_epochs: list | None = None
    probes: list = field(default_factory=lambda: list(PROBES))
    # model
    width: int = 100
    depth: int = 1
    # training
    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 128
    lr_decay: float | None = None
    lr_decay_every: int | None = None
    weight_decay: float = 0.0
    grad_clip_norm: float | None = None
    batch_norm: bool = False
    iterations: int | None = None
    # regularizer strengths used when the factor switches them on
    weight_decay_lambda: float = 0.01
    clip_norm: float = 1.0
    # data
    dataset: str = "mnist"
    data_dir: str | None = None
    train_size: int | None = 10000
    test_size: int | None = None
    subsample_seed: int = 0
    sample_size: int | None = None
    noise_rate: float = 0.0
    # probes
    knn_k: int = 5
    diameter_examples: int = 600
    diameter_cap: float = DEFAULT_CAP
    # regimes
    ratio_lo: float = 0.02
    ratio_hi: float = 0.2
    acc_lo: float = 0.5
    acc_hi: float = 0.9
    workers: int = 1

    def __post_init__(self):
        if self.factor not in FACTORS:
            raise ValueError(f"unknown factor {self.factor!r}; choose from {FACTORS}")
        if not self.values:
            raise ValueError("values must be nonempty")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        bad = set(self.probes) - set(PROBES)
        if bad:
            raise ValueError(f"unknown probes {sorted(bad)}")
        if self.factor == "regularizer":
            for v in self.values:
                parts = str(v).split("+")
                if any(p not in REGULARIZERS for p in parts):
                    raise ValueError(f"unknown regularizer in {v!r}")
        if self.factor == "training_time":
            if any(int(v) < 0 for v in self.values):
                raise ValueError("training_time values are epoch counts >= 0")
        self.thresholds  # validates ordering

    @property
    def thresholds(self) -> RegimeThresholds:
        return RegimeThresholds(self.ratio_lo, self.ratio_hi, self.acc_lo, self.acc_hi)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_mapping(yaml.safe_load(fh) or {})

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(asdict(self), fh, sort_keys=False)


# --- planning -----------------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    """One training run and the (value, epoch, layer mask) points probed on it."""

    seed: int
    width: int
    depth: int
    sample_size: int | None
    noise_rate: float
    regularizers: str
    epochs: int
    points: tuple  # ((value, epoch, mask_or_None), ...)


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def plan_jobs(config: SweepConfig) -> list[_Job]:
    base_reg = "+".join(
        name
        for name, on in (
            ("batch_norm", config.batch_norm),
            ("weight_decay", config.weight_decay > 0),
            ("grad_clip", config.grad_clip_norm is not None),
        )
        if on
    ) or "none"
    checkpoints = sorted(set(config.checkpoint_epochs or [config.epochs]))
    jobs = []
    for seed in config.seeds:
        common = dict(
            seed=int(seed),
            width=config.width,
            depth=config.depth,
            sample_size=config.sample_size,
            noise_rate=config.noise_rate,
            regularizers=base_reg,
            epochs=config.epochs,
        )
        if config.factor == "training_time":
            epochs = sorted(set(int(v) for v in config.values))
            points = tuple((str(e), e, None) for e in epochs)
            jobs.append(_Job(**{**common, "epochs": max(epochs)}, points=points))
            continue
        if config.factor == "layer_ablation":
            points = tuple(
                (_fmt_value(v), e, str(v)) for v in config.values for e in checkpoints
            )
            jobs.append(_Job(**common, points=points))
            continue
        for v in config.values:
            job = dict(common)
            if config.factor == "width":
                job["width"] = int(v)
            elif config.factor == "sample_size":
                job["sample_size"] = int(v)
                if config.iterations is not None:
                    # equal optimizer steps regardless of sample size
                    steps_per_epoch = math.ceil(int(v) / config.batch_size)
                    job["epochs"] = math.ceil(config.iterations / steps_per_epoch)
                    jobs.append(_Job(**job, points=((_fmt_value(v), job["epochs"], None),)))
                    continue
            elif config.factor == "label_noise":
                job["noise_rate"] = float(v)
            elif config.factor == "regularizer":
                job["regularizers"] = str(v)
            points = tuple((_fmt_value(v), e, None) for e in checkpoints)
            jobs.append(_Job(**job, points=points))
    return jobs


def _train_config(config: SweepConfig, job: _Job) -> TrainConfig:
    regs = set(job.regularizers.split("+")) - {"none"}
    return TrainConfig(
        optimizer=config.optimizer,
        lr=config.lr,
        epochs=job.epochs,
        batch_size=config.batch_size,
        lr_decay=config.lr_decay,
        lr_decay_every=config.lr_decay_every,
        weight_decay=(config.weight_decay or config.weight_decay_lambda)
        if "weight_decay" in regs
        else 0.0,
        grad_clip_norm=(config.grad_clip_norm or config.clip_norm) if "grad_clip" in regs else None,
        batch_norm="batch_norm" in regs,
        seed=job.seed,
    )


# --- data -----------------------------------------------------------------------


def load_split(config: SweepConfig, split: str) -> data_mod.Dataset:
    """Training pool or test set for the sweep, already subsampled."""
    if config.dataset == "mnist":
        ds = data_mod.load_mnist(split, config.data_dir and Path(config.data_dir) / "mnist")
    elif config.dataset == "cifar10":
        root = config.data_dir and Path(config.data_dir) / "cifar-10-batches-bin"
        ds = data_mod.load_cifar10(split, root)
    elif config.dataset == "random_pixel":
        n = (config.train_size if split == "train" else config.test_size) or 10000
        seed = config.subsample_seed if split == "train" else config.subsample_seed + 1
        return data_mod.random_pixels(n, 784, seed=[seed, 1 if split == "train" else 2])
    else:
        raise ValueError(f"unknown dataset {config.dataset!r}")
    size = config.train_size if split == "train" else config.test_size
    if size is not None and size < len(ds):
        ds = data_mod.subsample(ds, size, seed=config.subsample_seed)
    return ds


# --- running ----------------------------------------------------------------------


def _probe_point(config, model, train_ds, test_ds, mask, seed, record):
    failures = []
    bits_tr = code_matrix(model, train_ds.X)
    bits_te = code_matrix(model, test_ds.X)
    if mask is not None:
        layer_mask = LayerMask.parse(mask)
        bits_tr, _ = restrict_matrix(bits_tr, model.hidden_widths, layer_mask)
        bits_te, _ = restrict_matrix(bits_te, model.hidden_widths, layer_mask)
    record.raw_test_acc = accuracy(model, test_ds.X, test_ds.y)
    probes = config.probes
    if "redundancy" in probes:
        record.redundancy_train = redundancy(bits_tr).ratio
        record.redundancy_test = redundancy(bits_te).ratio
    if "kmeans" in probes:
        try:
            r = kmeans_accuracy(
                bits_tr, train_ds.y, bits_te, test_ds.y, train_ds.n_classes, seed=seed
            )
            record.kmeans_train, record.kmeans_test = r.train_accuracy, r.test_accuracy
        except DegenerateClusteringError:
            failures.append("kmeans:degenerate")
    if "knn" in probes:
        r = knn_accuracy(bits_tr, train_ds.y, bits_te, test_ds.y, config.knn_k)
        record.knn_train, record.knn_test = r.train_accuracy, r.test_accuracy
    if "logreg" in probes:
        try:
            r = logreg_accuracy(bits_tr, train_ds.y, bits_te, test_ds.y, {"random_state": seed})
            record.logreg_train, record.logreg_test = r.train_accuracy, r.test_accuracy
        except ProbeFailedError:
            failures.append("logreg:diverged")
    if "diameter" in probes:
        rng = np.random.default_rng([seed, record.epoch, 7])
        n = min(config.diameter_examples, len(test_ds))
        idx = np.sort(rng.choice(len(test_ds), size=n, replace=False))
        summary = avg_stochastic_diameter(
            model, test_ds.X[idx], rng, cap=config.diameter_cap, indices=idx
        )
        record.mean_diameter = summary.mean if summary.bounded_count else None
        record.bounded_count = summary.bounded_count
    if failures:
        record.status = "partial:" + ";".join(failures)


def run_job(config: SweepConfig, job: _Job, pools=None) -> list[ExperimentRecord]:
    """Train one model and probe it at each of the job's points."""
    start = time.perf_counter()
    train_pool, test_ds = pools if pools is not None else (
        load_split(config, "train"),
        load_split(config, "test"),
    )
    train_ds = train_pool
    if job.sample_size is not None and job.sample_size < len(train_pool):
        train_ds = data_mod.subsample(train_pool, job.sample_size, seed=job.seed)
    if job.noise_rate > 0:
        train_ds = data_mod.inject_label_noise(train_ds, job.noise_rate, seed=[job.seed, 11])
    tcfg = _train_config(config, job)

    def base_record(value, epoch):
        return ExperimentRecord(
            factor=config.factor,
            value=value,
            seed=job.seed,
            epoch=epoch,
            sample_size=len(train_ds),
            noise_rate=job.noise_rate,
            regularizers=job.regularizers,
        )

    epochs = sorted({e for _, e, _ in job.points})
    dims = (train_ds.input_dim, *([job.width] * job.depth), train_ds.n_classes)
    try:
        result = train(init_model(dims, seed=job.seed), train_ds.X, train_ds.y, tcfg, epochs)
    except TrainingDivergedError as err:
        logger.warning("job %s diverged at epoch %d", job, err.epoch)
        records = [base_record(v, e) for v, e, _ in job.points]
        for r in records:
            r.status = f"failed:diverged@{err.epoch}"
            r.wall_time = time.perf_counter() - start
        return records

    records = []
    for value, epoch, mask in job.points:
        model = result.checkpoints[epoch]
        record = base_record(value, epoch)
        _probe_point(config, model, train_ds, test_ds, mask, job.seed, record)
        records.append(record)
    elapsed = time.perf_counter() - start
    for r in records:
        r.wall_time = elapsed
    return records


def _run_job_standalone(args):
    config, job = args
    return run_job(config, job)


def run_sweep(config: SweepConfig, out_dir=None) -> list[ExperimentRecord]:
    """Run every job of the sweep, skipping those already in ``out_dir/records.csv``.

    Records are returned (and written) in plan order, so a resumed sweep
    writes the same file as an uninterrupted one.
    """
    jobs = plan_jobs(config)
    existing = {}
    csv_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "records.csv"
        if csv_path.exists():
            existing = {r.key: r for r in read_records(csv_path)}

    def keys(job):
        return [(config.factor, v, job.seed, e) for v, e, _ in job.points]

    todo = [j for j in jobs if not all(k in existing for k in keys(j))]
    logger.info("%d jobs planned, %d to run", len(jobs), len(todo))
    done = dict(existing)

    def collect(records):
        for r in records:
            done[r.key] = r
        if csv_path is not None:
            write_records(csv_path, _ordered(jobs, keys, done))

    if config.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for records in pool.map(_run_job_standalone, [(config, j) for j in todo]):
                collect(records)
    else:
        pools = (load_split(config, "train"), load_split(config, "test")) if todo else None
        for job in todo:
            collect(run_job(config, job, pools))
    return _ordered(jobs, keys, done)


def _ordered(jobs, keys, done):
    return [done[k] for j in jobs for k in keys(j) if k in done]


# --- records I/O ---------------------------------------------------------------------


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([_format(getattr(r, c)) for c in RECORD_COLUMNS])


def read_records(path) -> list[ExperimentRecord]:
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for col in RECORD_COLUMNS:
                raw = row.get(col, "")
                t = str(types[col])
                if col in ("factor", "value", "regularizers", "status"):
                    kwargs[col] = raw
                elif raw == "":
                    kwargs[col] = None if "None" in t else 0.0
                elif t.startswith("int"):
                    kwargs[col] = int(raw)
                else:
                    kwargs[col] = float(raw)
            out.append(ExperimentRecord(**kwargs))
    return out


# --- regimes and reports ---------------------------------------------------------------


def label_regime(record, thresholds: RegimeThresholds | None = None) -> RegimeLabel:
    """Place a record on the activation hash phase chart.

    Uses the training-set redundancy ratio (test-set if the former is
    missing) and the K-NN test accuracy. The thresholds are configuration,
    not established values.
    """
    th = thresholds or RegimeThresholds()
    if th.ratio_lo > th.ratio_hi or th.acc_lo > th.acc_hi:
        raise ValueError(f"inconsistent regime thresholds {th}")
    ratio = record.redundancy_train if record.redundancy_train is not None else record.redundancy_test
    acc = record.knn_test
    if ratio is None or acc is None:
        raise ValueError("record lacks redundancy or K-NN accuracy")
    if ratio <= th.ratio_lo and acc >= th.acc_hi:
        regime = "sufficient"
    elif ratio >= th.ratio_hi or acc <= th.acc_lo:
        regime = "under"
    else:
        regime = "critical"
    return RegimeLabel(regime, th)


def aggregate(records) -> list[dict]:
    """Mean and population std of every metric over seeds, per (factor, value, epoch)."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.factor, r.value, r.epoch)].append(r)
    rows = []
    for (factor, value, epoch), rs in groups.items():
        row = {"factor": factor, "value": value, "epoch": epoch, "n_seeds": len(rs)}
        for col in METRIC_COLUMNS:
            vals = [getattr(r, col) for r in rs if getattr(r, col) is not None]
            row[f"{col}_mean"] = float(np.mean(vals)) if vals else None
            row[f"{col}_std"] = float(np.std(vals)) if vals else None
        rows.append(row)
    return rows


def paired_differences(records, baseline="none") -> list[dict]:
    """Mean metric difference of each regularizer setting against ``baseline``,
    matched on seed and epoch (the ``y_bar - x_bar`` of a paired scatter)."""
    base = {(r.seed, r.epoch): r for r in records if r.factor == "regularizer" and r.value == baseline}
    groups = defaultdict(list)
    for r in records:
        if r.factor == "regularizer" and r.value != baseline and (r.seed, r.epoch) in base:
            groups[(r.value, r.epoch)].append((r, base[(r.seed, r.epoch)]))
    rows = []
    for (value, epoch), pairs in groups.items():
        row = {"value": value, "baseline": baseline, "epoch": epoch, "n_pairs": len(pairs)}
        for col in METRIC_COLUMNS:
            diffs = [
                getattr(a, col) - getattr(b, col)
                for a, b in pairs
                if getattr(a, col) is not None and getattr(b, col) is not None
            ]
            row[f"{col}_diff"] = float(np.mean(diffs)) if diffs else None
        rows.append(row)
    return rows


def _write_dicts(path, rows) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _format(v) for k, v in row.items()})


def report(records, out_dir, thresholds: RegimeThresholds | None = None) -> dict:
    """Write ``records.csv``, ``summary.csv``, ``regimes.csv`` (and
    ``paired.csv`` for regularizer sweeps); return the regime counts."""
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records(out_dir / "records.csv", records)
    _write_dicts(out_dir / "summary.csv", aggregate(records))
    counts = {"under": 0, "critical": 0, "sufficient": 0, "unlabeled": 0}
    for r in records:
        try:
            counts[label_regime(r, thresholds).regime] += 1
        except ValueError:
            counts["unlabeled"] += 1
    _write_dicts(out_dir / "regimes.csv", [{"regime": k, "count": v} for k, v in counts.items()])
    paired = paired_differences(records)
    if paired:
        _write_dicts(out_dir / "paired.csv", paired)
    return counts


def strip_wall_time(path) -> str:
    """Contents of a records file without the wall-time column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    drop = rows[0].index("wall_time")
    return "\n".join(",".join(c for i, c in enumerate(row) if i != drop) for row in rows)
