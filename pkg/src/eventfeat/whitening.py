"""ZCA whitening over populations of normalized local volumes."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, EmptyInput
from .volumes import LocalVolume


@dataclass
class WhiteningModel:
    """Symmetric (ZCA) whitening map fitted to a volume population.

    ``transform`` is E diag(1/sqrt(eig + epsilon)) E^T for the
    eigendecomposition of the population covariance, so it is symmetric
    and positive semi-definite by construction.
    """

    mean: np.ndarray
    transform: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.transform = np.asarray(self.transform, dtype=np.float64)
        d = self.mean.shape[0]
        if self.transform.shape != (d, d):
            raise DimensionMismatch("transform must be d x d for a d-vector mean")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def volume_matrix(volumes: list[LocalVolume]) -> np.ndarray:
    """Stack volume data as columns of a d x N matrix."""
    if not volumes:
        raise EmptyInput("no volumes")
    return np.stack([v.data for v in volumes], axis=1)


def fit_whitening(volumes: list[LocalVolume], epsilon: float) -> WhiteningModel:
    """Fit ZCA whitening on a volume population.

    The covariance uses the population (1/M) normalization; eigenvalues
    are clamped at zero from below before the inverse square root, and
    epsilon regularizes near-singular directions. Fewer than d + 1
    volumes is allowed (epsilon then carries the rank deficiency), but at
    least one volume is required.
    """
    if not volumes:
        raise EmptyInput("cannot fit whitening on an empty population")
    data = volume_matrix(volumes)  # d x M
    mean = data.mean(axis=1)
    centered = data - mean[:, None]
    cov = centered @ centered.T / centered.shape[1]
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.maximum(eigvals, 0.0)
    scale = 1.0 / np.sqrt(eigvals + epsilon)
    transform = (eigvecs * scale) @ eigvecs.T
    return WhiteningModel(mean=mean, transform=transform, epsilon=float(epsilon))


def apply_whitening(model: WhiteningModel, v: LocalVolume) -> LocalVolume:
    """Whiten one volume; origin metadata is preserved."""
    if v.data.shape[0] != model.dim:
        raise DimensionMismatch(
            f"volume has length {v.data.shape[0]}, model expects {model.dim}"
        )
    return replace(v, data=model.transform @ (v.data - model.mean))


def apply_whitening_matrix(model: WhiteningModel, data: np.ndarray) -> np.ndarray:
    """Whiten a d x N matrix of volume columns in one product."""
    if data.shape[0] != model.dim:
        raise DimensionMismatch(
            f"columns have length {data.shape[0]}, model expects {model.dim}"
        )
    return model.transform @ (data - model.mean[:, None])
