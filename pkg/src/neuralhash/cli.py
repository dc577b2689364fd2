"""Command line entry point: ``neuralhash {train,encode,metrics,diameter,sweep,report}``.

Datasets are read from ``$NEURALHASH_DATA`` (default ``~/.cache/neuralhash``)
unless ``--data-dir`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from . import data as data_mod
from .codes import LayerMask, code_matrix, restrict_matrix, write_code_export
from .geometry import DEFAULT_CAP, avg_stochastic_diameter, write_histogram_csv
from .harness import SweepConfig, read_records, report, run_sweep
from .nn import TrainConfig, accuracy, init_model, load_checkpoint, save_checkpoint, train
from .probes import kmeans_accuracy, knn_accuracy, logreg_accuracy, redundancy


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _value_list(text: str) -> list:
    out = []
    for v in text.split(","):
        for cast in (int, float):
            try:
                out.append(cast(v))
                break
            except ValueError:
                continue
        else:
            out.append(v)
    return out


def _add_data_args(p, default_train_size=10000):
    p.add_argument("--dataset", default="mnist", choices=["mnist", "cifar10", "random_pixel"])
    p.add_argument("--data-dir", default=None)
    p.add_argument("--train-size", type=int, default=default_train_size)
    p.add_argument("--test-size", type=int, default=None)
    p.add_argument("--subsample-seed", type=int, default=0)


def _sweep_like(args) -> SweepConfig:
    return SweepConfig(
        factor="width",
        values=[0],
        dataset=args.dataset,
        data_dir=args.data_dir,
        train_size=args.train_size,
        test_size=args.test_size,
        subsample_seed=args.subsample_seed,
    )


def _load(args, split):
    from .harness import load_split

    return load_split(_sweep_like(args), split)


def cmd_train(args) -> int:
    train_ds = _load(args, "train")
    if args.label_noise:
        train_ds = data_mod.inject_label_noise(train_ds, args.label_noise, seed=args.seed)
    dims = (train_ds.input_dim, *_int_list(args.hidden), train_ds.n_classes)
    config = TrainConfig(
        optimizer=args.optimizer,
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_decay=args.lr_decay,
        lr_decay_every=args.lr_decay_every,
        weight_decay=args.weight_decay,
        grad_clip_norm=args.grad_clip,
        batch_norm=args.batch_norm,
        seed=args.seed,
    )
    result = train(init_model(dims, seed=args.seed), train_ds.X, train_ds.y, config)
    save_checkpoint(result.model, args.out)
    test_ds = _load(args, "test")
    loss, acc = result.history[-1] if result.history else (float("nan"), float("nan"))
    print(
        json.dumps(
            {
                "layer_dims": list(dims),
                "train_loss": loss,
                "train_acc": acc,
                "test_acc": accuracy(result.model, test_ds.X, test_ds.y),
                "checkpoint": str(args.out),
            }
        )
    )
    return 0


def _codes(model, X, layers):
    bits = code_matrix(model, X)
    if layers:
        bits, _ = restrict_matrix(bits, model.hidden_widths, LayerMask.parse(layers))
    return bits


def cmd_encode(args) -> int:
    model = load_checkpoint(args.model)
    ds = _load(args, args.split)
    write_code_export(args.out, _codes(model, ds.X, args.layers), ds.y)
    return 0


def cmd_metrics(args) -> int:
    model = load_checkpoint(args.model)
    train_ds, test_ds = _load(args, "train"), _load(args, "test")
    tr = _codes(model, train_ds.X, args.layers)
    te = _codes(model, test_ds.X, args.layers)
    out = {
        "raw_test_acc": accuracy(model, test_ds.X, test_ds.y),
        "redundancy_train": asdict(redundancy(tr)),
        "redundancy_test": asdict(redundancy(te)),
    }
    if args.random_ball:
        ball = data_mod.random_ball(args.random_ball, model.input_dim, seed=args.seed)
        out["redundancy_random_ball"] = asdict(redundancy(_codes(model, ball.X, args.layers)))
    probes = args.probes.split(",") if args.probes else []
    if "kmeans" in probes:
        out["kmeans"] = asdict(kmeans_accuracy(tr, train_ds.y, te, test_ds.y, train_ds.n_classes, seed=args.seed))
    if "knn" in probes:
        out["knn"] = asdict(knn_accuracy(tr, train_ds.y, te, test_ds.y, args.knn_k))
    if "logreg" in probes:
        out["logreg"] = asdict(logreg_accuracy(tr, train_ds.y, te, test_ds.y, {"random_state": args.seed}))
    print(json.dumps(out, indent=2, default=str))
    return 0


def cmd_diameter(args) -> int:
    model = load_checkpoint(args.model)
    ds = _load(args, args.split)
    rng = np.random.default_rng(args.seed)
    n = min(args.n, len(ds))
    idx = np.sort(rng.choice(len(ds), size=n, replace=False))
    summary = avg_stochastic_diameter(
        model, ds.X[idx], rng, cap=args.cap, shared_direction=args.shared_direction, indices=idx
    )
    if args.out:
        write_histogram_csv(args.out, summary)
    print(
        json.dumps(
            {
                "mean_diameter": summary.mean,
                "bounded_count": summary.bounded_count,
                "unbounded_count": summary.unbounded_count,
                "skipped": len(summary.skipped),
            }
        )
    )
    return 0


SWEEP_FLAGS = {
    "factor": str,
    "values": _value_list,
    "seeds": _int_list,
    "checkpoint_epochs": _int_list,
    "probes": lambda s: s.split(","),
    "width": int,
    "depth": int,
    "epochs": int,
    "lr": float,
    "batch_size": int,
    "dataset": str,
    "data_dir": str,
    "train_size": int,
    "test_size": int,
    "iterations": int,
    "noise_rate": float,
    "knn_k": int,
    "workers": int,
}


def cmd_sweep(args) -> int:
    mapping = {}
    if args.config:
        mapping = yaml.safe_load(Path(args.config).read_text()) or {}
    for key in SWEEP_FLAGS:
        v = getattr(args, key)
        if v is not None:
            mapping[key] = v
    config = SweepConfig.from_mapping(mapping)
    records = run_sweep(config, args.out)
    counts = report(records, args.out, config.thresholds)
    print(json.dumps({"records": len(records), "regimes": counts}))
    return 0


def cmd_report(args) -> int:
    records = read_records(args.records)
    counts = report(records, args.out)
    print(json.dumps({"records": len(records), "regimes": counts}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuralhash", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a ReLU MLP and save an NHL1 checkpoint")
    _add_data_args(p)
    p.add_argument("--hidden", default="100", help="comma-separated hidden widths")
    p.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr-decay", type=float, default=None)
    p.add_argument("--lr-decay-every", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--batch-norm", action="store_true")
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="export neural codes as index,label,bitstring")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="train", choices=["train", "test"])
    p.add_argument("--layers", default=None, help='layer subset, e.g. "1,2" or "1-3"')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("metrics", help="redundancy ratios and categorization probes")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--probes", default="kmeans,knn,logreg")
    p.add_argument("--layers", default=None)
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--random-ball", type=int, default=0, help="also probe this many random-ball inputs")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("diameter", help="stochastic activation diameters")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--cap", type=float, default=DEFAULT_CAP)
    p.add_argument("--shared-direction", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="histogram CSV path")
    p.set_defaults(func=cmd_diameter)

    p = sub.add_parser("sweep", help="run a factor sweep from a YAML config")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    for key, cast in SWEEP_FLAGS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=cast, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate an existing records.csv")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
