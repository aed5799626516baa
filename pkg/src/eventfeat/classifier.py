"""Linear multiclass L2-SVM on pooled features.

One squared-hinge problem per class (one-vs-rest), solved by
deterministic full-batch gradient descent with a backtracking line
search. Reproducibility is the point: no stochastic subsampling, no
data-order dependence, identical models on identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels, DimensionMismatch, TooFewExamples

DEFAULT_REG_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_FOLDS = 5

_GRAD_TOL = 1e-5
_MAX_ITERATIONS = 10_000
_ARMIJO_C = 1e-4


@dataclass
class LinearSvmModel:
    """One weight row and bias per class, plus the feature standardizer."""

    weights: np.ndarray
    bias: np.ndarray
    classes: list[str]
    reg_c: float
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.shape[0] != len(self.classes) or self.bias.shape != (
            len(self.classes),
        ):
            raise DimensionMismatch("one weight row and bias per class required")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise DimensionMismatch("model parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def svm_objective(
    w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, reg_c: float
) -> float:
    """0.5 ||w||^2 + reg_c * sum of squared hinge losses."""
    margin = np.maximum(0.0, 1.0 - y * (x @ w + b))
    return 0.5 * float(w @ w) + reg_c * float(margin @ margin)


def _svm_gradient(
    w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, reg_c: float
) -> tuple[np.ndarray, float]:
    margin = np.maximum(0.0, 1.0 - y * (x @ w + b))
    scaled = 2.0 * reg_c * margin * y
    return w - x.T @ scaled, -float(scaled.sum())


def _descend(x: np.ndarray, y: np.ndarray, reg_c: float) -> tuple[np.ndarray, float]:
    """Minimize one class's squared-hinge objective from the origin.

    Backtracking line search on the steepest-descent direction: the
    trial step starts at twice the previously accepted step and halves
    until the Armijo condition holds. The objective is convex and
    differentiable, so this converges without tuning.
    """
    w = np.zeros(x.shape[1])
    b = 0.0
    step = 1.0 / max(1.0, 2.0 * reg_c * x.shape[0])
    value = svm_objective(w, b, x, y, reg_c)
    for _ in range(_MAX_ITERATIONS):
        gw, gb = _svm_gradient(w, b, x, y, reg_c)
        gnorm_sq = float(gw @ gw) + gb * gb
        if gnorm_sq < _GRAD_TOL * _GRAD_TOL:
            break
        step *= 2.0
        while True:
            cand_w = w - step * gw
            cand_b = b - step * gb
            cand = svm_objective(cand_w, cand_b, x, y, reg_c)
            if cand <= value - _ARMIJO_C * step * gnorm_sq:
                break
            step *= 0.5
            if step < 1e-18:
                return w, b
        w, b, value = cand_w, cand_b, cand
    return w, b


def train_svm(
    features: np.ndarray, labels: list[str], reg_c: float, seed: int = 0
) -> LinearSvmModel:
    """Fit a one-vs-rest linear SVM with squared hinge loss.

    Features are standardized per dimension (training mean and
    population std; constant dimensions keep std 1) and the standardizer
    is stored in the model. The optimizer is deterministic; seed is
    accepted for interface parity with the basis trainers and ignored.
    """
    del seed
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != len(labels):
        raise DimensionMismatch("features must be N x dim with one label per row")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DegenerateLabels(f"need at least 2 classes, got {len(classes)}")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    x = (features - mean) / std
    label_arr = np.array(labels)
    weights = np.zeros((len(classes), features.shape[1]))
    bias = np.zeros(len(classes))
    for c, name in enumerate(classes):
        y = np.where(label_arr == name, 1.0, -1.0)
        weights[c], bias[c] = _descend(x, y, reg_c)
    return LinearSvmModel(weights, bias, classes, reg_c, mean, std)


def predict(model: LinearSvmModel, feature: np.ndarray) -> str | list[str]:
    """Class with the highest score w^T x + b; ties go to class order.

    Accepts a single feature vector or an N x dim batch; batch output is
    element-wise identical to per-item calls.
    """
    feature = np.asarray(feature, dtype=np.float64)
    single = feature.ndim == 1
    x = feature[None, :] if single else feature
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise DimensionMismatch(f"expected features of dimension {model.dim}")
    x = (x - model.feature_mean) / model.feature_std
    scores = x @ model.weights.T + model.bias
    picks = np.argmax(scores, axis=1)
    if single:
        return model.classes[int(picks[0])]
    return [model.classes[int(p)] for p in picks]


def _stratified_folds(
    labels: list[str], folds: int, seed: int
) -> np.ndarray:
    """Fold id per example: seeded per-class shuffle, round-robin deal."""
    rng = np.random.default_rng(seed)
    label_arr = np.array(labels)
    fold_of = np.empty(len(labels), dtype=np.int64)
    for name in sorted(set(labels)):
        members = np.nonzero(label_arr == name)[0]
        if members.shape[0] < folds:
            raise TooFewExamples(
                f"class {name!r} has {members.shape[0]} examples, need >= {folds}"
            )
        rng.shuffle(members)
        fold_of[members] = np.arange(members.shape[0]) % folds
    return fold_of


def cross_validate(
    features: np.ndarray,
    labels: list[str],
    reg_grid: tuple[float, ...] = DEFAULT_REG_GRID,
    folds: int = DEFAULT_FOLDS,
    seed: int = 0,
) -> float:
    """Pick the regularization constant by stratified k-fold accuracy.

    Candidates are scored on the same fold assignment; ties break toward
    the smaller constant.
    """
    if folds < 2:
        raise TooFewExamples("need at least 2 folds")
    if not reg_grid:
        raise DimensionMismatch("empty regularization grid")
    features = np.asarray(features, dtype=np.float64)
    fold_of = _stratified_folds(labels, folds, seed)
    label_arr = np.array(labels)
    best_c = None
    best_acc = -1.0
    for reg_c in sorted(reg_grid):
        fold_accs = []
        for f in range(folds):
            val = fold_of == f
            model = train_svm(features[~val], list(label_arr[~val]), reg_c)
            got = predict(model, features[val])
            fold_accs.append(float(np.mean(np.array(got) == label_arr[val])))
        acc = float(np.mean(fold_accs))
        if acc > best_acc:
            best_acc = acc
            best_c = reg_c
    return float(best_c)
