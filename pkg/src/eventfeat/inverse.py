"""Inverse-formulation basis learning: LASSO coding + K-SVD updates.

The inverse model explains each whitened volume v as a sparse linear
combination D l of learned basis columns. Training alternates two
half-steps: sparse coding of every column by cyclic coordinate descent
on 0.5*||v - D l||^2 + l1_weight*||l||_1, and a K-SVD pass that rewrites
one atom (and its code row) at a time from a rank-1 factorization of the
residual restricted to the columns using that atom.

The conditioning penalty on the basis does not enter the K-SVD step
directly; it acts through atom normalization and through rejection and
reseeding of near-duplicate atoms, and its value is monitored in the
training trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis_common import TraceEntry, conditioning_penalty, soft_threshold
from .errors import DimensionMismatch, EmptyInput, NotNormalized, SingularGram
from .volumes import LocalVolume
from .whitening import volume_matrix

# Mutual-coherence level past which one of a pair of atoms is considered
# a duplicate and becomes a reseed candidate.
COHERENCE_LIMIT = 0.99

_NORM_TOL = 1e-6


@dataclass
class Dictionary:
    """Basis matrix with one unit-norm atom per column (d x K)."""

    atoms: np.ndarray

    def __post_init__(self) -> None:
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 2:
            raise DimensionMismatch("atoms must be a d x K matrix")

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[1]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.atoms, axis=0)


@dataclass
class SparseCodes:
    """Code matrix, one column per coded volume (K x N)."""

    codes: np.ndarray

    def __post_init__(self) -> None:
        self.codes = np.asarray(self.codes, dtype=np.float64)
        if self.codes.ndim != 2:
            raise DimensionMismatch("codes must be a K x N matrix")

    @property
    def support_sizes(self) -> np.ndarray:
        return np.count_nonzero(self.codes, axis=0)


@dataclass
class InverseHyperparams:
    l1_weight: float
    penalty_weight: float = 0.0
    frobenius_weight: float = 0.0
    coherence_weight: float = 0.0
    logdet_weight: float = 0.0
    num_iterations: int = 10
    lasso_tol: float = 1e-6
    lasso_max_sweeps: int = 1000
    target_sparsity: int | None = None

    def __post_init__(self) -> None:
        if self.l1_weight <= 0:
            raise DimensionMismatch("l1_weight must be positive")
        for name in ("penalty_weight", "frobenius_weight", "coherence_weight", "logdet_weight"):
            if getattr(self, name) < 0:
                raise DimensionMismatch(f"{name} must be non-negative")
        if self.target_sparsity is not None and self.target_sparsity < 1:
            raise DimensionMismatch("target_sparsity must be None or >= 1")


def _check_normalized(atoms: np.ndarray) -> None:
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(np.abs(norms - 1.0) > _NORM_TOL):
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise NotNormalized(f"atom {worst} has norm {norms[worst]:.6g}, expected 1")


def _kkt_satisfied(
    grad: np.ndarray, codes: np.ndarray, lam: float, tol: float
) -> bool:
    """Check subgradient optimality given grad = D^T (V - D L)."""
    active = codes != 0
    bound = 10.0 * tol
    if np.any(np.abs(grad[active] - lam * np.sign(codes[active])) >= bound):
        return False
    inactive = ~active
    return not np.any(np.abs(grad[inactive]) > lam + bound)


def _truncate_support(codes: np.ndarray, target: int) -> np.ndarray:
    """Zero all but the ``target`` largest-magnitude entries per column.

    Ties keep the lowest index: the stable sort on negated magnitudes
    visits equal values in index order.
    """
    k = codes.shape[0]
    if target >= k:
        return codes
    order = np.argsort(-np.abs(codes), axis=0, kind="stable")
    drop = order[target:, :]
    out = codes.copy()
    np.put_along_axis(out, drop, 0.0, axis=0)
    return out


def lasso_code_batch(
    D: Dictionary,
    targets: np.ndarray,
    h: InverseHyperparams,
    warm: np.ndarray | None = None,
) -> np.ndarray:
    """Sparse-code many columns at once by cyclic coordinate descent.

    Coordinates are visited in index order; each visit updates that
    coordinate for every column simultaneously, which matches running
    the per-vector solver column by column. Correlations are tracked
    through the atom Gram matrix, so a visit costs O(N) when nothing
    moves instead of O(dN); the tracked values are refreshed from
    scratch periodically and before any convergence decision. Sweeps
    stop once the largest coordinate change falls under lasso_tol and
    the subgradient optimality residuals check out (within 10x
    lasso_tol), or at the sweep cap. Warm starts are monotone:
    coordinate descent never increases the objective from its starting
    point.
    """
    atoms = D.atoms
    _check_normalized(atoms)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[0] != D.dim:
        raise DimensionMismatch("targets must be d x N")
    k, n = D.num_atoms, targets.shape[1]
    lam = h.l1_weight
    gram = atoms.T @ atoms
    corr = atoms.T @ targets
    if warm is None:
        codes = np.zeros((k, n))
        proj = np.zeros((k, n))  # tracks gram @ codes
    else:
        codes = np.array(warm, dtype=np.float64, copy=True)
        if codes.shape != (k, n):
            raise DimensionMismatch("warm start has wrong shape")
        proj = gram @ codes
    for sweep in range(h.lasso_max_sweeps):
        max_delta = 0.0
        for j in range(k):
            # d_j^T residual + codes_j, with unit-norm atoms
            rho = corr[j] - proj[j] + codes[j]
            new = soft_threshold(rho, lam)
            delta = new - codes[j]
            changed = np.nonzero(delta)[0]
            if changed.size:
                proj[:, changed] += gram[:, j, None] * delta[changed]
                codes[j] = new
                max_delta = max(max_delta, float(np.abs(delta).max()))
        if max_delta == 0.0:
            break
        if max_delta < h.lasso_tol:
            proj = gram @ codes
            if _kkt_satisfied(corr - proj, codes, lam, h.lasso_tol):
                break
        elif (sweep + 1) % 32 == 0:
            # keep incremental rounding drift from accumulating
            proj = gram @ codes
    if h.target_sparsity is not None:
        codes = _truncate_support(codes, h.target_sparsity)
    return codes


def lasso_code(
    D: Dictionary, v: np.ndarray, h: InverseHyperparams
) -> np.ndarray:
    """Sparse-code one volume; see lasso_code_batch for the contract.

    The returned code satisfies, before any target_sparsity truncation:
    |d_k^T(v - Dl) - l1_weight*sign(l_k)| < 10*lasso_tol on the support
    and |d_k^T(v - Dl)| <= l1_weight + 10*lasso_tol off it.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] != D.dim:
        raise DimensionMismatch(f"volume length {v.shape[0]}, dictionary dim {D.dim}")
    return lasso_code_batch(D, v[:, None], h)[:, 0]


def dictionary_penalty(D: Dictionary, h: InverseHyperparams) -> float:
    """Conditioning penalty of the atom matrix under h's weights."""
    return conditioning_penalty(
        D.atoms, h.frobenius_weight, h.coherence_weight, h.logdet_weight
    )


def _reseed_atom(atoms: np.ndarray, k: int, targets: np.ndarray, residual: np.ndarray) -> None:
    """Point atom k at the worst-reconstructed data column, normalized."""
    errs = (residual * residual).sum(axis=0)
    worst = int(np.argmax(errs))
    col = targets[:, worst]
    norm = np.linalg.norm(col)
    if norm < 1e-12:
        col = np.zeros(atoms.shape[0])
        col[k % atoms.shape[0]] = 1.0
        norm = 1.0
    atoms[:, k] = col / norm


def ksvd_update(
    D: Dictionary,
    targets: np.ndarray,
    L: SparseCodes,
    l1_weight: float = 0.0,
) -> tuple[Dictionary, SparseCodes]:
    """One K-SVD pass: rewrite each atom and its code row in index order.

    For atom k, the residual excluding that atom is restricted to the
    columns whose codes use it, and the dominant singular pair of that
    restricted residual becomes the new atom (left vector) and code row
    (singular value times right vector). Atoms used by no column are
    reseeded to the worst-reconstructed data column. All atoms leave with
    unit norm. The reconstruction objective 0.5*||V - DL||_F^2 never
    increases.

    With l1_weight > 0 each rank-1 rewrite is additionally guarded: it is
    kept only if it does not increase the restricted value of
    0.5*||..||^2 + l1_weight*||row||_1, otherwise the atom and row stay
    as they were. The training loop passes its sparsity weight here so
    the coding objective it monitors stays non-increasing through the
    basis half-step as well.
    """
    atoms = np.array(D.atoms, dtype=np.float64, copy=True)
    codes = np.array(L.codes, dtype=np.float64, copy=True)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (atoms.shape[0], codes.shape[1]):
        raise DimensionMismatch(
            f"targets {targets.shape} inconsistent with atoms {atoms.shape} "
            f"and codes {codes.shape}"
        )
    if atoms.shape[1] != codes.shape[0]:
        raise DimensionMismatch("code row count must equal atom count")

    residual = targets - atoms @ codes
    for k in range(atoms.shape[1]):
        row = codes[k]
        using = np.nonzero(row)[0]
        if using.size == 0:
            _reseed_atom(atoms, k, targets, residual)
            continue
        old_atom = atoms[:, k].copy()
        old_row = row[using].copy()
        restricted = residual[:, using] + np.outer(old_atom, old_row)
        u, s, vt = np.linalg.svd(restricted, full_matrices=False)
        new_atom = u[:, 0]
        new_row = s[0] * vt[0]
        if l1_weight > 0.0:
            sq = float((restricted * restricted).sum())
            base = (
                0.5 * float(((restricted - np.outer(old_atom, old_row)) ** 2).sum())
                + l1_weight * float(np.abs(old_row).sum())
            )
            cand = 0.5 * (sq - s[0] ** 2) + l1_weight * float(np.abs(new_row).sum())
            if cand > base:
                continue
        atoms[:, k] = new_atom
        codes[k, using] = new_row
        residual[:, using] = restricted - np.outer(new_atom, new_row)

    norms = np.linalg.norm(atoms, axis=0)
    atoms /= np.where(norms > 0, norms, 1.0)
    return Dictionary(atoms), SparseCodes(codes)


def _merge_coherent_atoms(
    atoms: np.ndarray,
    codes: np.ndarray,
    targets: np.ndarray,
    l1_weight: float,
) -> None:
    """Reseed atoms that duplicate a lower-indexed atom, in place.

    For a pair with |<d_i, d_j>| above COHERENCE_LIMIT, atom j's codes are
    folded into atom i's row (sign-matched) and atom j is repointed at the
    worst-reconstructed column with an empty row. The fold is accepted
    only when it does not increase fidelity + l1_weight * ||codes||_1;
    the L1 term can only shrink under the fold, so redundant duplicates
    are absorbed while genuinely load-bearing near-duplicates survive
    until training makes them redundant.
    """
    gram = np.abs(atoms.T @ atoms)
    np.fill_diagonal(gram, 0.0)
    pairs = np.argwhere(np.triu(gram > COHERENCE_LIMIT))
    if pairs.size == 0:
        return
    residual = targets - atoms @ codes
    reseeded: set[int] = set()
    for i, j in pairs:
        i, j = int(i), int(j)
        if i in reseeded or j in reseeded:
            continue
        sign = 1.0 if atoms[:, i] @ atoms[:, j] >= 0 else -1.0
        row_j = codes[j]
        if not np.any(row_j):
            _reseed_atom(atoms, j, targets, residual)
            reseeded.add(j)
            continue
        gap = atoms[:, j] - sign * atoms[:, i]
        cross = float(gap @ residual @ row_j)
        fid_delta = cross + 0.5 * float(gap @ gap) * float(row_j @ row_j)
        merged = codes[i] + sign * row_j
        l1_delta = float(
            np.abs(merged).sum() - np.abs(codes[i]).sum() - np.abs(row_j).sum()
        )
        if fid_delta + l1_weight * l1_delta > 0.0:
            continue
        residual += np.outer(gap, row_j)
        codes[i] = merged
        codes[j] = 0.0
        _reseed_atom(atoms, j, targets, residual)
        reseeded.add(j)


def train_inverse(
    volumes: list[LocalVolume] | np.ndarray,
    num_atoms: int,
    h: InverseHyperparams,
    seed: int,
) -> tuple[Dictionary, SparseCodes, list[TraceEntry]]:
    """Alternate LASSO coding and K-SVD updates on whitened volumes.

    The basis starts from num_atoms distinct randomly chosen volumes,
    normalized. Each iteration runs one K-SVD half-step (with the
    coherence reseed) and one warm-started coding half-step, recording
    the full objective after each; with num_iterations = 0 the result is
    the initialization plus a single coding pass. The coding objective
    (fidelity + l1_weight * code L1) never increases across half-steps.
    """
    targets = volumes if isinstance(volumes, np.ndarray) else volume_matrix(volumes)
    targets = np.asarray(targets, dtype=np.float64)
    n = targets.shape[1]
    if n == 0:
        raise EmptyInput("no volumes to train on")
    if num_atoms > n:
        raise DimensionMismatch(f"num_atoms {num_atoms} exceeds volume count {n}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(n, size=num_atoms, replace=False)
    atoms = targets[:, picks].copy()
    norms = np.linalg.norm(atoms, axis=0)
    for k in np.nonzero(norms < 1e-12)[0]:
        atoms[:, k] = rng.standard_normal(targets.shape[0])
        norms[k] = np.linalg.norm(atoms[:, k])
    atoms /= norms

    trace: list[TraceEntry] = []

    def record(phase: str, iteration: int, atoms_: np.ndarray, codes_: np.ndarray) -> None:
        resid = targets - atoms_ @ codes_
        fidelity = 0.5 * float((resid * resid).sum())
        code_l1 = float(np.abs(codes_).sum())
        try:
            pen = conditioning_penalty(
                atoms_, h.frobenius_weight, h.coherence_weight, h.logdet_weight
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
            )
        )

    D = Dictionary(atoms)
    codes = lasso_code_batch(D, targets, h)
    record("code", 0, D.atoms, codes)
    for it in range(1, h.num_iterations + 1):
        D, code_obj = ksvd_update(D, targets, SparseCodes(codes), l1_weight=h.l1_weight)
        codes = code_obj.codes
        _merge_coherent_atoms(D.atoms, codes, targets, h.l1_weight)
        record("basis", it, D.atoms, codes)
        codes = lasso_code_batch(D, targets, h, warm=codes)
        record("code", it, D.atoms, codes)
    return D, SparseCodes(codes), trace
