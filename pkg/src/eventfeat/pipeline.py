"""End-to-end orchestration: datasets, training, encoding, evaluation.

Ties the library modules into the four pipeline stages (accumulate,
learn basis, encode, classify) plus dataset discovery, metrics output,
and the parameter sweep. All stages are deterministic given the config
and its seed; derived seeds are fixed offsets so the stages stay
decoupled.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from .classifier import cross_validate, predict, train_svm
from .config import PipelineConfig, with_overrides
from .container import ModelContainer
from .direct import DirectHyperparams, train_direct
from .errors import ConfigError, DataError
from .events import EventStream, SensorGeometry, parse_event_file
from .features import encode_recording
from .inverse import InverseHyperparams, train_inverse
from .volumes import AccumulatedGrid, accumulate, normalize_volume, sample_random_volumes
from .whitening import apply_whitening_matrix, fit_whitening, volume_matrix

METRICS_HEADER = (
    "setting",
    "formulation",
    "K",
    "Bx",
    "By",
    "Tl",
    "intervals",
    "accuracy",
    "seconds",
)

# Basis learning samples volumes from at most this many recordings; more
# would only slow loading without changing the volume distribution much.
MAX_BASIS_RECORDINGS = 2000

SWEEP_PARAMS = ("basis", "volume", "intervals")

LabeledPaths = list[tuple[str, str]]


def discover_dataset(root: str) -> tuple[LabeledPaths, LabeledPaths | None]:
    """Find (path, label) pairs under a dataset root.

    Two layouts are accepted: root/train/<class>/* with root/test/<class>/*
    gives a fixed split (returned as two lists), and root/<class>/* gives
    a flat dataset (second element None; callers split it themselves).
    Listings are sorted, so discovery is deterministic.
    """
    if not os.path.isdir(root):
        raise DataError(f"dataset directory {root} does not exist")
    entries = sorted(
        e for e in os.listdir(root) if os.path.isdir(os.path.join(root, e))
    )
    if "train" in entries and "test" in entries:
        train = _class_items(os.path.join(root, "train"))
        test = _class_items(os.path.join(root, "test"))
        return train, test
    return _class_items(root), None


def _class_items(split_dir: str) -> LabeledPaths:
    classes = sorted(
        e for e in os.listdir(split_dir) if os.path.isdir(os.path.join(split_dir, e))
    )
    if not classes:
        raise DataError(f"{split_dir} has no class subdirectories")
    items: LabeledPaths = []
    for name in classes:
        class_dir = os.path.join(split_dir, name)
        files = sorted(
            f for f in os.listdir(class_dir)
            if os.path.isfile(os.path.join(class_dir, f))
        )
        items.extend((os.path.join(class_dir, f), name) for f in files)
    if not items:
        raise DataError(f"{split_dir} contains no recordings")
    return items


def stratified_split(
    items: LabeledPaths, fraction: float, seed: int
) -> tuple[LabeledPaths, LabeledPaths]:
    """Seeded per-class split of a flat dataset into train/test."""
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[tuple[str, str]]] = {}
    for item in items:
        by_class.setdefault(item[1], []).append(item)
    train: LabeledPaths = []
    test: LabeledPaths = []
    for name in sorted(by_class):
        members = by_class[name]
        order = rng.permutation(len(members))
        cut = max(1, min(len(members) - 1, int(round(fraction * len(members)))))
        train.extend(members[i] for i in order[:cut])
        test.extend(members[i] for i in order[cut:])
    return train, test


def downsample_stream(stream: EventStream, factor: int) -> EventStream:
    """Pool pixel coordinates by an integer factor (timestamps unchanged)."""
    if factor < 1:
        raise ConfigError("downsample_factor: must be at least 1")
    if factor == 1:
        return stream
    geometry = SensorGeometry(
        (stream.geometry.n_x - 1) // factor + 1,
        (stream.geometry.n_y - 1) // factor + 1,
    )
    return EventStream(
        geometry, stream.x // factor, stream.y // factor, stream.t, stream.polarity
    )


def resolve_delta_t(stream: EventStream, cfg: PipelineConfig) -> int:
    """Per-recording interval width when the config leaves delta_t at 0.

    Splits the recording's span evenly so every event lands in one of
    the num_intervals windows and none are dropped.
    """
    if cfg.delta_t >= 1:
        return cfg.delta_t
    if len(stream) == 0:
        return 1
    return int(stream.t.max()) // cfg.num_intervals + 1


def load_grid(path: str, cfg: PipelineConfig) -> AccumulatedGrid:
    """Read one event file and accumulate it into an interval grid."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read recording {path}: {exc}") from exc
    stream = parse_event_file(
        data, SensorGeometry(cfg.sensor_width, cfg.sensor_height)
    )
    stream = downsample_stream(stream, cfg.downsample_factor)
    grid, _ = accumulate(stream, cfg.accumulation(resolve_delta_t(stream, cfg)))
    return grid


def _extraction_config(cfg: PipelineConfig):
    # delta_t is irrelevant for extraction; substitute 1 when it is
    # per-recording so AccumulationConfig validation passes.
    return cfg.accumulation(cfg.delta_t if cfg.delta_t >= 1 else 1)


def inverse_hyperparams(cfg: PipelineConfig) -> InverseHyperparams:
    return InverseHyperparams(
        l1_weight=cfg.l1_weight,
        penalty_weight=cfg.penalty_weight,
        frobenius_weight=cfg.frobenius_weight,
        coherence_weight=cfg.coherence_weight,
        logdet_weight=cfg.logdet_weight,
        num_iterations=cfg.num_iterations,
        lasso_tol=cfg.lasso_tol,
        lasso_max_sweeps=cfg.lasso_max_sweeps,
        target_sparsity=cfg.target_sparsity if cfg.target_sparsity > 0 else None,
    )


def direct_hyperparams(cfg: PipelineConfig) -> DirectHyperparams:
    return DirectHyperparams(
        l1_weight=cfg.l1_weight,
        penalty_weight=cfg.penalty_weight,
        frobenius_weight=cfg.frobenius_weight,
        coherence_weight=cfg.coherence_weight,
        logdet_weight=cfg.logdet_weight,
        num_iterations=cfg.num_iterations,
    )


def learn_basis(cfg: PipelineConfig, train_items: LabeledPaths) -> ModelContainer:
    """Sample volumes, fit whitening, and train the configured basis."""
    if not train_items:
        raise DataError("no training recordings")
    rng = np.random.default_rng(cfg.seed)
    items = train_items
    if len(items) > MAX_BASIS_RECORDINGS:
        picked = rng.choice(len(items), size=MAX_BASIS_RECORDINGS, replace=False)
        items = [items[i] for i in np.sort(picked)]
    grids = [load_grid(path, cfg) for path, _ in items]
    volumes = sample_random_volumes(
        grids, _extraction_config(cfg), cfg.num_train_volumes, cfg.seed
    )
    normalized = [normalize_volume(v, cfg.norm_epsilon) for v in volumes]
    whitening = fit_whitening(normalized, cfg.whitening_epsilon)
    whitened = apply_whitening_matrix(whitening, volume_matrix(normalized))
    if cfg.formulation == "inverse":
        dictionary, _, _ = train_inverse(
            whitened, cfg.num_basis_vectors, inverse_hyperparams(cfg), cfg.seed + 1
        )
        vectors = dictionary.atoms.T.copy()
    else:
        transform, _, _ = train_direct(
            whitened, cfg.num_basis_vectors, direct_hyperparams(cfg), cfg.seed + 1
        )
        vectors = transform.rows
    return ModelContainer(cfg, whitening, cfg.formulation, vectors)


def encode_items(
    container: ModelContainer, items: LabeledPaths
) -> tuple[np.ndarray, list[str]]:
    """Encode recordings into an N x 4K feature matrix plus labels."""
    if not items:
        raise DataError("no recordings to encode")
    cfg = container.config
    view = container.basis_view()
    extraction = _extraction_config(cfg)
    rows = []
    labels = []
    for path, label in items:
        grid = load_grid(path, cfg)
        feature = encode_recording(
            view,
            container.whitening,
            grid,
            extraction,
            encoder=cfg.encoder,
            norm_epsilon=cfg.norm_epsilon,
        )
        rows.append(feature.data)
        labels.append(label)
    return np.stack(rows), labels


def attach_classifier(
    container: ModelContainer, features: np.ndarray, labels: list[str]
) -> ModelContainer:
    """Train the SVM stage (cross-validating reg_c if unset) onto the model."""
    cfg = container.config
    reg_c = cfg.svm_reg_c
    if reg_c == 0.0:
        reg_c = cross_validate(
            features, labels, cfg.svm_reg_grid, cfg.svm_folds, cfg.seed + 2
        )
    container.svm = train_svm(features, labels, reg_c, cfg.seed + 3)
    return container


@dataclass
class EvalResult:
    accuracy: float
    classes: list[str]
    per_class: dict[str, float]
    confusion: np.ndarray


def evaluate_features(
    container: ModelContainer, features: np.ndarray, labels: list[str]
) -> EvalResult:
    """Accuracy, per-class accuracy, and confusion counts on a split."""
    if container.svm is None:
        raise DataError("model has no classifier stage; run train-classifier first")
    model = container.svm
    index = {name: i for i, name in enumerate(model.classes)}
    unknown = sorted(set(labels) - set(index))
    if unknown:
        raise DataError(f"labels not seen at training time: {', '.join(unknown)}")
    got = predict(model, features)
    confusion = np.zeros((len(index), len(index)), dtype=np.int64)
    for truth, pred in zip(labels, got):
        confusion[index[truth], index[pred]] += 1
    totals = confusion.sum(axis=1)
    per_class = {
        name: (float(confusion[i, i] / totals[i]) if totals[i] else 0.0)
        for name, i in index.items()
    }
    accuracy = float(confusion.trace() / max(1, confusion.sum()))
    return EvalResult(accuracy, list(model.classes), per_class, confusion)


def metrics_row(
    setting: str, cfg: PipelineConfig, accuracy: float, seconds: float
) -> dict[str, object]:
    return {
        "setting": setting,
        "formulation": cfg.formulation,
        "K": cfg.num_basis_vectors,
        "Bx": cfg.block_width,
        "By": cfg.block_height,
        "Tl": cfg.volume_length,
        "intervals": cfg.num_intervals,
        "accuracy": repr(accuracy),
        "seconds": f"{seconds:.3f}",
    }


def write_metrics(path: str, rows: list[dict[str, object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
        writer.writeheader()
        writer.writerows(rows)


def write_per_class(path: str, result: EvalResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("class", "accuracy"))
        for name in result.classes:
            writer.writerow((name, repr(result.per_class[name])))


def write_confusion(path: str, result: EvalResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("true\\pred", *result.classes))
        for i, name in enumerate(result.classes):
            writer.writerow((name, *result.confusion[i].tolist()))


def run_once(
    cfg: PipelineConfig, dataset_root: str
) -> tuple[EvalResult, ModelContainer, float]:
    """Full train-and-test cycle; returns the test-set evaluation."""
    start = time.perf_counter()
    train_items, test_items = discover_dataset(dataset_root)
    if test_items is None:
        train_items, test_items = stratified_split(
            train_items, cfg.split_fraction, cfg.seed
        )
    container = learn_basis(cfg, train_items)
    train_x, train_y = encode_items(container, train_items)
    container = attach_classifier(container, train_x, train_y)
    test_x, test_y = encode_items(container, test_items)
    result = evaluate_features(container, test_x, test_y)
    return result, container, time.perf_counter() - start


def derive_sweep_config(
    cfg: PipelineConfig, param: str, value: str
) -> PipelineConfig:
    """One sweep point's config. volume values look like '8x8x5' (WxHxL)."""
    if param == "basis":
        return with_overrides(cfg, num_basis_vectors=_as_int(param, value))
    if param == "intervals":
        n = _as_int(param, value)
        return with_overrides(cfg, num_intervals=n, volume_length=n)
    if param == "volume":
        parts = value.lower().split("x")
        if len(parts) != 3:
            raise ConfigError(f"volume: expected WxHxL, got {value!r}")
        width, height, length = (_as_int("volume", p) for p in parts)
        return with_overrides(
            cfg, block_width=width, block_height=height, volume_length=length
        )
    raise ConfigError(
        f"param: expected one of {', '.join(SWEEP_PARAMS)}, got {param!r}"
    )


def _as_int(param: str, value: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{param}: expected integer, got {value!r}") from exc


def run_sweep(
    cfg: PipelineConfig, dataset_root: str, param: str, values: list[str]
) -> list[dict[str, object]]:
    """Run the full pipeline once per swept value; one metrics row each."""
    rows = []
    for value in values:
        point = derive_sweep_config(cfg, param, value)
        result, _, seconds = run_once(point, dataset_root)
        rows.append(metrics_row(f"{param}={value}", point, result.accuracy, seconds))
    return rows
