"""Command-line entry points for the event feature pipeline.

Exit codes: 0 on success, 2 on configuration problems, 3 on data or
I/O problems. Every command is deterministic for a fixed config and
seed: models, feature files, and CSV values (timing columns aside) come
out identical across reruns.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .config import PipelineConfig, load_config, serialize_config, with_overrides
from .container import ModelContainer, load_container, save_container
from .errors import ConfigError, DataError, EventfeatError
from .events import SensorGeometry, parse_event_file
from .pipeline import (
    SWEEP_PARAMS,
    attach_classifier,
    discover_dataset,
    encode_items,
    evaluate_features,
    learn_basis,
    metrics_row,
    run_sweep,
    stratified_split,
    write_confusion,
    write_metrics,
    write_per_class,
)
from .synthetic import benchmark_config, make_synthetic_benchmark


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    overrides = {}
    if getattr(args, "formulation", None):
        overrides["formulation"] = args.formulation
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return with_overrides(cfg, **overrides) if overrides else cfg


def _cmd_synth(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    counts = make_synthetic_benchmark(args.out, seed)
    config_path = os.path.join(args.out, "config.txt")
    with open(config_path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(benchmark_config()))
    print(
        f"wrote {counts['train']} train and {counts['test']} test recordings "
        f"under {args.out} (config: {config_path})"
    )
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    try:
        with open(args.file, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {args.file}: {exc}") from exc
    stream = parse_event_file(data, SensorGeometry(args.width, args.height))
    print(f"file: {args.file}")
    print(f"events: {len(stream)}")
    if len(stream):
        pos = int((stream.polarity > 0).sum())
        print(f"time range: {int(stream.t.min())} .. {int(stream.t.max())} us")
        print(f"polarity: +{pos} / -{len(stream) - pos}")
        print(
            f"x range: {int(stream.x.min())} .. {int(stream.x.max())}, "
            f"y range: {int(stream.y.min())} .. {int(stream.y.max())}"
        )
    return 0


def _split_items(dataset: str, cfg: PipelineConfig, split: str):
    train_items, test_items = discover_dataset(dataset)
    if test_items is None:
        train_items, test_items = stratified_split(
            train_items, cfg.split_fraction, cfg.seed
        )
    if split == "train":
        return train_items
    if split == "test":
        return test_items
    return train_items + test_items


def _cmd_learn_basis(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    train_items = _split_items(args.dataset, cfg, "train")
    start = time.perf_counter()
    container = learn_basis(cfg, train_items)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "model.evft")
    save_container(container, path)
    print(
        f"learned {cfg.formulation} basis (K={cfg.num_basis_vectors}, "
        f"d={cfg.volume_dim}) from {len(train_items)} recordings "
        f"in {time.perf_counter() - start:.1f}s -> {path}"
    )
    return 0


def _cmd_encode(args: argparse.Namespace) -> int:
    container = load_container(args.model)
    items = _split_items(args.dataset, container.config, args.split)
    start = time.perf_counter()
    features, labels = encode_items(container, items)
    os.makedirs(args.out, exist_ok=True)
    features_path = os.path.join(args.out, f"{args.split}_features.npy")
    labels_path = os.path.join(args.out, f"{args.split}_labels.txt")
    np.save(features_path, features)
    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(labels) + "\n")
    print(
        f"encoded {features.shape[0]} recordings to {features.shape[1]}-dim "
        f"features in {time.perf_counter() - start:.1f}s -> {features_path}"
    )
    return 0


def _load_features(features_path: str, labels_path: str):
    try:
        features = np.load(features_path)
        with open(labels_path, encoding="utf-8") as fh:
            labels = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read features: {exc}") from exc
    if features.ndim != 2 or features.shape[0] != len(labels):
        raise DataError(
            f"{features_path} has {features.shape[0]} rows but "
            f"{labels_path} has {len(labels)} labels"
        )
    return features, labels


def _cmd_train_classifier(args: argparse.Namespace) -> int:
    container = load_container(args.model)
    features, labels = _load_features(args.features, args.labels)
    start = time.perf_counter()
    container = attach_classifier(container, features, labels)
    save_container(container, args.out)
    assert container.svm is not None
    print(
        f"trained classifier on {features.shape[0]} examples "
        f"(reg_c={container.svm.reg_c:g}) in {time.perf_counter() - start:.1f}s "
        f"-> {args.out}"
    )
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    container = load_container(args.model)
    features, labels = _load_features(args.features, args.labels)
    start = time.perf_counter()
    result = evaluate_features(container, features, labels)
    seconds = time.perf_counter() - start
    os.makedirs(args.out, exist_ok=True)
    row = metrics_row("evaluate", container.config, result.accuracy, seconds)
    write_metrics(os.path.join(args.out, "metrics.csv"), [row])
    write_per_class(os.path.join(args.out, "per_class.csv"), result)
    write_confusion(os.path.join(args.out, "confusion.csv"), result)
    print(f"accuracy {result.accuracy:.4f} over {len(labels)} recordings -> {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("values: expected a comma-separated list")
    rows = run_sweep(cfg, args.dataset, args.param, values)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "metrics.csv")
    write_metrics(path, rows)
    for row in rows:
        print(f"{row['setting']}: accuracy {row['accuracy']}")
    print(f"wrote {len(rows)} rows -> {path}")
    return 0


def _cmd_dump_basis(args: argparse.Namespace) -> int:
    from PIL import Image

    container = load_container(args.model)
    cfg = container.config
    vectors = container.basis_vectors
    shape = (cfg.volume_length, cfg.block_height, cfg.block_width)
    gap = 1
    columns = args.columns
    rows = -(-vectors.shape[0] // columns)
    tile_w = cfg.block_width * cfg.volume_length + gap * (cfg.volume_length - 1)
    tile_h = cfg.block_height
    canvas = np.zeros(
        (rows * (tile_h + gap * 3) - gap * 3, columns * (tile_w + gap * 3) - gap * 3),
        dtype=np.uint8,
    )
    for k, atom in enumerate(vectors):
        lo, hi = float(atom.min()), float(atom.max())
        scaled = (atom - lo) / (hi - lo) if hi > lo else np.zeros_like(atom)
        planes = (scaled * 255).round().astype(np.uint8).reshape(shape)
        r, c = divmod(k, columns)
        y0 = r * (tile_h + gap * 3)
        x0 = c * (tile_w + gap * 3)
        for t in range(cfg.volume_length):
            x_t = x0 + t * (cfg.block_width + gap)
            canvas[y0 : y0 + tile_h, x_t : x_t + cfg.block_width] = planes[t]
    Image.fromarray(canvas, mode="L").save(args.out)
    print(f"wrote {vectors.shape[0]} basis tiles -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventfeat",
        description="Sparse feature learning pipeline for event camera streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic 4-class benchmark")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("inspect", help="summarize one event file")
    p.add_argument("file")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("learn-basis", help="sample volumes and train the basis")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="directory for model.evft")
    p.add_argument("--formulation", choices=("inverse", "direct"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_learn_basis)

    p = sub.add_parser("encode", help="encode a dataset split into features")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("train-classifier", help="fit the SVM stage onto a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True, help="path for the updated model file")
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("evaluate", help="score encoded features against labels")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True, help="directory for the CSV reports")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="rerun the pipeline across one parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)
    p.add_argument("--formulation", choices=("inverse", "direct"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("dump-basis", help="render basis vectors as a PNG mosaic")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--columns", type=int, default=8)
    p.set_defaults(func=_cmd_dump_basis)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EventfeatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
