"""Pieces shared by the two basis-learning formulations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularGram


def soft_threshold(z: np.ndarray, lam: float) -> np.ndarray:
    """sign(z) * max(|z| - lam, 0), the exact minimizer of
    0.5*(z - l)^2 + lam*|l| applied element-wise."""
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def conditioning_penalty(
    mat: np.ndarray,
    frobenius_weight: float,
    coherence_weight: float,
    logdet_weight: float,
) -> float:
    """Conditioning/coherence penalty on a basis matrix.

    Value: fw*||M||_F^2 - cw*||M M^T - I||_F^2 - lw*log|det(M M^T)|.
    Matrix norms are read as Frobenius. For a dictionary, pass the d x K
    atom matrix (Gram is d x d); for a transform, the K x d row matrix
    (Gram is K x K).

    Raises SingularGram when the log-determinant is requested
    (lw != 0) but the Gram determinant is exactly zero. Near-singular
    Grams produce large finite values instead; callers that monitor the
    penalty may map SingularGram to +inf.
    """
    mat = np.asarray(mat, dtype=np.float64)
    value = frobenius_weight * float((mat * mat).sum())
    if coherence_weight != 0.0 or logdet_weight != 0.0:
        gram = mat @ mat.T
        if coherence_weight != 0.0:
            dev = gram - np.eye(gram.shape[0])
            value -= coherence_weight * float((dev * dev).sum())
        if logdet_weight != 0.0:
            sign, logabsdet = np.linalg.slogdet(gram)
            if sign == 0 or not np.isfinite(logabsdet):
                raise SingularGram("gram determinant is zero, log|det| undefined")
            value -= logdet_weight * float(logabsdet)
    return value


@dataclass(frozen=True)
class TraceEntry:
    """Objective snapshot recorded after one training half-step.

    fidelity: 0.5 * squared Frobenius residual of the current model.
    code_l1: sum of absolute code values.
    penalty: conditioning penalty of the basis (+inf if its Gram is
        exactly singular).
    objective: fidelity + l1_weight*code_l1 + penalty_weight*penalty.
    coding_objective: fidelity + l1_weight*code_l1, the part each coding
        half-step minimizes.
    basis_objective: the transform half-step's own subproblem value
        (direct formulation only; None for the inverse formulation).
    """

    phase: str
    iteration: int
    fidelity: float
    code_l1: float
    penalty: float
    objective: float
    coding_objective: float
    basis_objective: float | None = None
