"""Seeded synthetic event dataset: four moving shapes on a 34x34 sensor.

A desk-scale stand-in for the neuromorphic benchmarks: each recording
renders a bright shape translating over 8 brightness frames spanning
7 ms, run through the threshold-crossing synthesizer. Classes differ in
shape and motion direction (horizontal bar falling, vertical bar
sliding right, diagonal bar sweeping, blob drifting), with per-sample
position and speed jitter so raw pixel templates blur across examples.
"""

from __future__ import annotations

import os

import numpy as np

from .config import PipelineConfig
from .events import CameraModel, EventStream, synthesize_events, write_event_file

SENSOR_SIZE = 34
NUM_FRAMES = 8
RECORDING_SPAN_US = 7000
CONTRAST = 0.25

CLASSES = ("bar_h", "bar_v", "bar_diag", "blob")
TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 100


def _coords() -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:SENSOR_SIZE, 0:SENSOR_SIZE]
    return xs.astype(np.float64), ys.astype(np.float64)


def _render(name: str, rng: np.random.Generator) -> np.ndarray:
    """Render the brightness frame stack for one jittered sample."""
    xs, ys = _coords()
    frames = np.zeros((NUM_FRAMES, SENSOR_SIZE, SENSOR_SIZE))
    if name == "bar_h":
        pos = rng.uniform(2.0, 8.0)
        speed = rng.uniform(1.2, 2.2)
        for f in range(NUM_FRAMES):
            top = pos + speed * f
            frames[f] = ((ys >= top) & (ys < top + 3.0)).astype(np.float64)
    elif name == "bar_v":
        pos = rng.uniform(2.0, 8.0)
        speed = rng.uniform(1.2, 2.2)
        for f in range(NUM_FRAMES):
            left = pos + speed * f
            frames[f] = ((xs >= left) & (xs < left + 3.0)).astype(np.float64)
    elif name == "bar_diag":
        pos = rng.uniform(16.0, 30.0)
        speed = rng.uniform(1.2, 2.2)
        for f in range(NUM_FRAMES):
            c = pos + speed * f
            frames[f] = (np.abs(xs + ys - c) <= 1.5).astype(np.float64)
    elif name == "blob":
        radius = rng.uniform(3.0, 5.0)
        cx = rng.uniform(11.0, 23.0)
        cy = rng.uniform(11.0, 23.0)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        speed = rng.uniform(0.8, 1.6)
        vx, vy = speed * np.cos(angle), speed * np.sin(angle)
        for f in range(NUM_FRAMES):
            d2 = (xs - (cx + vx * f)) ** 2 + (ys - (cy + vy * f)) ** 2
            frames[f] = (d2 <= radius * radius).astype(np.float64)
    else:
        raise ValueError(f"unknown class {name!r}")
    return frames


def generate_recording(name: str, rng: np.random.Generator) -> EventStream:
    """One seeded recording of the given class."""
    frames = _render(name, rng)
    times = np.linspace(0, RECORDING_SPAN_US, NUM_FRAMES).astype(np.int64)
    camera = CameraModel(contrast_threshold=CONTRAST, reference=frames[0])
    return synthesize_events(frames, times, camera)


def make_synthetic_benchmark(root: str, seed: int = 0) -> dict[str, int]:
    """Write the benchmark dataset under root/train and root/test.

    200 training and 100 test recordings per class, one .bin event file
    each. The same seed reproduces every file byte for byte. Returns the
    per-split file counts.
    """
    rng = np.random.default_rng(seed)
    counts = {"train": 0, "test": 0}
    for split, per_class in (("train", TRAIN_PER_CLASS), ("test", TEST_PER_CLASS)):
        for name in CLASSES:
            class_dir = os.path.join(root, split, name)
            os.makedirs(class_dir, exist_ok=True)
            for i in range(per_class):
                stream = generate_recording(name, rng)
                path = os.path.join(class_dir, f"{name}_{i:04d}.bin")
                with open(path, "wb") as fh:
                    fh.write(write_event_file(stream))
                counts[split] += 1
    return counts


def benchmark_config() -> PipelineConfig:
    """Pipeline settings sized for the synthetic benchmark."""
    return PipelineConfig(
        sensor_width=SENSOR_SIZE,
        sensor_height=SENSOR_SIZE,
        delta_t=0,
        num_intervals=5,
        volume_length=4,
        block_width=6,
        block_height=6,
        stride=2,
        num_basis_vectors=160,
        formulation="inverse",
        l1_weight=0.6,
        penalty_weight=1.0,
        frobenius_weight=0.001,
        coherence_weight=0.0,
        logdet_weight=0.001,
        num_iterations=8,
        lasso_tol=1e-4,
        whitening_epsilon=0.1,
        num_train_volumes=4000,
        svm_reg_c=1.0,
        seed=0,
    )


def nearest_centroid_accuracy(
    train_features: np.ndarray,
    train_labels: list[str],
    test_features: np.ndarray,
    test_labels: list[str],
) -> float:
    """Accuracy of a nearest-class-centroid rule on flattened grids."""
    classes = sorted(set(train_labels))
    label_arr = np.array(train_labels)
    centroids = np.stack(
        [train_features[label_arr == name].mean(axis=0) for name in classes]
    )
    d2 = (
        (test_features * test_features).sum(axis=1)[:, None]
        - 2.0 * test_features @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    picks = np.argmin(d2, axis=1)
    hits = sum(classes[int(p)] == t for p, t in zip(picks, test_labels))
    return hits / len(test_labels)
