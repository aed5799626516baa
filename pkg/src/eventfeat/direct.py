"""Direct-formulation basis learning: closed-form coding and updates.

The direct model maps a whitened volume straight to its code through a
learned transform, l = soft_threshold(A v, l1_weight). Coding is a
single matrix product plus an element-wise shrink, so its cost per code
element is linear in the volume dimension; no optimization problem is
solved at encode time. Training alternates that exact prox step with a
closed-form transform update.

For square A the update minimizes

    ||A V - L||_F^2 + fw*||A||_F^2 - lw*log|det A|

exactly (fw and lw are the combined penalty weights defined below), via
a Cholesky factor of V V^T + fw I and an SVD. Overcomplete transforms
(K > d) are updated one square row-block at a time with the same
formula; row blocks are independent in the fidelity term, which
separates over rows, so each block solves against its own code rows.
Row normalization and the coherence reseed then stand in for the
Gram-deviation part of the conditioning penalty, mirroring the inverse
formulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis_common import TraceEntry, conditioning_penalty, soft_threshold
from .errors import DimensionMismatch, EmptyInput, NotNormalized, SingularFactor, SingularGram
from .inverse import COHERENCE_LIMIT, Dictionary, InverseHyperparams, SparseCodes, lasso_code
from .volumes import LocalVolume
from .whitening import volume_matrix


@dataclass
class Transform:
    """Analysis transform with one row per code element (K x d)."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise DimensionMismatch("rows must be a K x d matrix")

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def condition_number(self) -> float:
        """Ratio of largest to smallest singular value (inf if rank-deficient)."""
        s = np.linalg.svd(self.rows, compute_uv=False)
        smallest = s[-1]
        if smallest == 0.0:
            return float("inf")
        return float(s[0] / smallest)


@dataclass
class DirectHyperparams:
    l1_weight: float
    penalty_weight: float = 0.0
    frobenius_weight: float = 0.0
    coherence_weight: float = 0.0
    logdet_weight: float = 0.0
    num_iterations: int = 10

    def __post_init__(self) -> None:
        if self.l1_weight <= 0:
            raise DimensionMismatch("l1_weight must be positive")
        for name in ("penalty_weight", "frobenius_weight", "coherence_weight", "logdet_weight"):
            if getattr(self, name) < 0:
                raise DimensionMismatch(f"{name} must be non-negative")

    @property
    def frob_combined(self) -> float:
        """Effective Frobenius weight inside the transform update."""
        return self.penalty_weight * self.frobenius_weight

    @property
    def logdet_combined(self) -> float:
        """Effective log-det weight inside the transform update."""
        return self.penalty_weight * self.logdet_weight


def threshold_code(A: Transform, v: np.ndarray, l1_weight: float) -> np.ndarray:
    """Code one volume (or a d x N batch) in closed form.

    Returns soft_threshold(A v, l1_weight), the exact minimizer of
    0.5*||A v - l||^2 + l1_weight*||l||_1. Element order does not matter:
    every output element depends only on its own row of A, so elements
    may be computed independently or asynchronously with identical
    results.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != A.dim:
        raise DimensionMismatch(f"volume length {v.shape[0]}, transform dim {A.dim}")
    return soft_threshold(A.rows @ v, l1_weight)


def _square_block_update(
    chol: np.ndarray, vl: np.ndarray, logdet_weight: float
) -> np.ndarray:
    """Closed-form minimizer for one square row block.

    chol is the lower Cholesky factor of V V^T + fw I and vl is V L_b^T
    for the block's code rows. Solves
    min ||A V - L_b||^2 + fw ||A||^2 - lw log|det A| exactly.
    """
    w = np.linalg.solve(chol, vl)
    q, sig, rt = np.linalg.svd(w)
    gamma = 0.5 * (sig + np.sqrt(sig * sig + 2.0 * logdet_weight))
    b = (rt.T * gamma) @ q.T
    return np.linalg.solve(chol.T, b.T).T


def _ridge_block_update(chol: np.ndarray, vl: np.ndarray) -> np.ndarray:
    """Least-squares block update without the log-det term."""
    half = np.linalg.solve(chol, vl)
    return np.linalg.solve(chol.T, half).T


def update_transform(
    targets: np.ndarray, L: SparseCodes, h: DirectHyperparams
) -> Transform:
    """Solve the transform half-step for fixed codes.

    Square case (K = d): exact closed form as in _square_block_update.
    Overcomplete (K > d): each full block of d rows is updated by the
    square formula against its own code rows; a trailing partial block
    falls back to the ridge solution (no log-det term exists for a
    non-square block). Rows are then unit-normalized and near-duplicate
    rows are reseeded from the worst-coded volume. Undercomplete
    (K < d): single ridge block, same normalization rules do not apply
    (the square objective is exact only at K = d).
    """
    targets = np.asarray(targets, dtype=np.float64)
    codes = L.codes
    if targets.ndim != 2 or codes.shape[1] != targets.shape[1]:
        raise DimensionMismatch("targets must be d x N with one column per code")
    d = targets.shape[0]
    k = codes.shape[0]
    fw = h.frob_combined
    lw = h.logdet_combined
    m = targets @ targets.T + fw * np.eye(d)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise SingularFactor(
            "V V^T + fw I is not positive definite; raise frobenius_weight"
        ) from exc

    if k == d:
        if lw > 0.0:
            return Transform(_square_block_update(chol, targets @ codes.T, lw))
        return Transform(_ridge_block_update(chol, targets @ codes.T))

    rows = np.empty((k, d))
    for start in range(0, k, d):
        stop = min(start + d, k)
        vl = targets @ codes[start:stop].T
        if stop - start == d and lw > 0.0:
            rows[start:stop] = _square_block_update(chol, vl, lw)
        else:
            rows[start:stop] = _ridge_block_update(chol, vl)

    if k > d:
        norms = np.linalg.norm(rows, axis=1)
        degenerate = norms < 1e-12
        if degenerate.any():
            _reseed_rows(rows, np.nonzero(degenerate)[0], targets, codes)
            norms = np.linalg.norm(rows, axis=1)
        rows /= norms[:, None]
        _reseed_coherent_rows(rows, targets, codes)
    return Transform(rows)


def _reseed_rows(
    rows: np.ndarray, which: np.ndarray, targets: np.ndarray, codes: np.ndarray
) -> None:
    """Point the given rows at the worst-coded volumes, unit norm."""
    errs = ((rows @ targets - codes) ** 2).sum(axis=0)
    order = np.argsort(-errs, kind="stable")
    for rank, idx in enumerate(which):
        col = targets[:, order[rank % order.shape[0]]]
        norm = np.linalg.norm(col)
        if norm < 1e-12:
            col = np.zeros(rows.shape[1])
            col[int(idx) % rows.shape[1]] = 1.0
            norm = 1.0
        rows[int(idx)] = col / norm


def _reseed_coherent_rows(rows: np.ndarray, targets: np.ndarray, codes: np.ndarray) -> None:
    gram = np.abs(rows @ rows.T)
    np.fill_diagonal(gram, 0.0)
    dup = np.argwhere(np.triu(gram > COHERENCE_LIMIT))
    if dup.size == 0:
        return
    seen: set[int] = set()
    doomed = []
    for i, j in dup:
        if int(j) not in seen:
            doomed.append(int(j))
            seen.add(int(j))
    _reseed_rows(rows, np.asarray(doomed), targets, codes)


def transform_subproblem_value(
    A: Transform, targets: np.ndarray, codes: np.ndarray, h: DirectHyperparams
) -> float:
    """Value of the objective update_transform minimizes, block for block.

    Used by the training trace so the transform half-step's descent is
    measured against the quantity it actually optimizes. Blocks without a
    log-det term contribute only fidelity and Frobenius parts.
    """
    rows = A.rows
    d = targets.shape[0]
    fw = h.frob_combined
    lw = h.logdet_combined
    resid = rows @ targets - codes
    value = float((resid * resid).sum()) + fw * float((rows * rows).sum())
    if lw > 0.0:
        for start in range(0, rows.shape[0], d):
            block = rows[start : start + d]
            if block.shape[0] != d:
                continue
            sign, logabsdet = np.linalg.slogdet(block)
            if sign == 0 or not np.isfinite(logabsdet):
                return float("inf")
            value -= lw * float(logabsdet)
    return value


def train_direct(
    volumes: list[LocalVolume] | np.ndarray,
    num_rows: int,
    h: DirectHyperparams,
    seed: int,
) -> tuple[Transform, SparseCodes, list[TraceEntry]]:
    """Alternate closed-form coding and transform updates.

    The transform starts from seeded Gaussian rows, unit-normalized
    (data rows would make the first update rank-deficient under exact
    self-coding). Each trace entry records the full objective; the
    coding half-step never increases fidelity + l1_weight * code L1, and
    in the square case the transform half-step never increases its own
    subproblem value. num_iterations = 0 yields the initialization plus
    one coding pass.
    """
    targets = volumes if isinstance(volumes, np.ndarray) else volume_matrix(volumes)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[1] == 0:
        raise EmptyInput("no volumes to train on")
    if num_rows < 1:
        raise DimensionMismatch("num_rows must be at least 1")
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((num_rows, targets.shape[0]))
    rows /= np.linalg.norm(rows, axis=1)[:, None]
    A = Transform(rows)

    trace: list[TraceEntry] = []

    def record(phase: str, iteration: int, codes: np.ndarray) -> None:
        resid = A.rows @ targets - codes
        fidelity = 0.5 * float((resid * resid).sum())
        code_l1 = float(np.abs(codes).sum())
        try:
            pen = conditioning_penalty(
                A.rows, h.frobenius_weight, h.coherence_weight, h.logdet_weight
            )
        except SingularGram:
            pen = float("inf")
        coding = fidelity + h.l1_weight * code_l1
        trace.append(
            TraceEntry(
                phase=phase,
                iteration=iteration,
                fidelity=fidelity,
                code_l1=code_l1,
                penalty=pen,
                objective=coding + h.penalty_weight * pen,
                coding_objective=coding,
                basis_objective=transform_subproblem_value(A, targets, codes, h),
            )
        )

    codes = threshold_code(A, targets, h.l1_weight)
    record("code", 0, codes)
    for it in range(1, h.num_iterations + 1):
        A = update_transform(targets, SparseCodes(codes), h)
        record("basis", it, codes)
        codes = threshold_code(A, targets, h.l1_weight)
        record("code", it, codes)
    return A, SparseCodes(codes), trace


def code_consistency_check(
    D: Dictionary, l1_weight: float, num_vectors: int = 100, seed: int = 0
) -> float:
    """Max deviation between the two coding routes on an orthonormal basis.

    With a square orthonormal dictionary the inverse problem's LASSO
    solution and the direct problem's threshold code (with A = D^T)
    coincide; this computes both on a batch of random vectors and
    returns the largest absolute difference.
    """
    atoms = D.atoms
    if atoms.shape[0] != atoms.shape[1]:
        raise DimensionMismatch("consistency check needs a square dictionary")
    if not np.allclose(atoms.T @ atoms, np.eye(atoms.shape[1]), atol=1e-10):
        raise NotNormalized("dictionary columns are not orthonormal")
    rng = np.random.default_rng(seed)
    h = InverseHyperparams(l1_weight=l1_weight)
    A = Transform(atoms.T)
    worst = 0.0
    for _ in range(num_vectors):
        v = rng.standard_normal(atoms.shape[0])
        via_lasso = lasso_code(D, v, h)
        via_threshold = threshold_code(A, v, l1_weight)
        worst = max(worst, float(np.abs(via_lasso - via_threshold).max()))
    return worst
