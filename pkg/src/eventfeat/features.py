"""Triangle encoding and quadrant pooling of local volume codes.

A recording becomes a single feature vector in three steps: extract the
stride lattice of local volumes from its accumulated grid, encode each
volume against the learned basis, and sum the codes over four spatial
quadrants. The concatenated quadrant sums give a 4K-dimensional vector
regardless of sensor size or recording length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis_common import soft_threshold
from .errors import DimensionMismatch, EmptyLattice, OutOfBounds
from .inverse import Dictionary, InverseHyperparams, lasso_code_batch
from .volumes import AccumulatedGrid, AccumulationConfig, extract_grid_volumes, normalize_volume
from .whitening import WhiteningModel, apply_whitening_matrix


@dataclass
class BasisView:
    """Encoding-side view of a learned basis.

    vectors holds the raw learned rows (dictionary atoms transposed for
    the inverse formulation, transform rows for the direct one);
    prototypes is the unit-normalized copy used for distance encoding.
    l1_weight is only consulted by the native encoder.
    """

    vectors: np.ndarray
    kind: str
    l1_weight: float | None = None
    prototypes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise DimensionMismatch("basis must be a K x d matrix with K >= 1")
        if self.kind not in ("inverse", "direct"):
            raise DimensionMismatch(f"unknown basis kind {self.kind!r}")
        norms = np.linalg.norm(self.vectors, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        self.prototypes = self.vectors / safe[:, None]

    @property
    def num_vectors(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class FeatureVector:
    """Pooled per-recording descriptor of length exactly 4K."""

    data: np.ndarray
    label: str | None = None

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 1 or self.data.shape[0] % 4 != 0:
            raise DimensionMismatch("feature must be a flat vector of length 4K")


def triangle_encode(basis: BasisView, v: np.ndarray) -> np.ndarray:
    """Map one volume to K non-negative activations.

    z_k is the distance from v to prototype k and mu their mean; the
    output is max(0, mu - z_k). Prototypes at or beyond the mean clip to
    zero, so at least one coordinate is always zero.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (basis.dim,):
        raise DimensionMismatch(f"volume length {v.shape}, basis dim {basis.dim}")
    z = np.linalg.norm(basis.prototypes - v, axis=1)
    return np.maximum(0.0, z.mean() - z)


def triangle_encode_batch(basis: BasisView, columns: np.ndarray) -> np.ndarray:
    """triangle_encode over a d x N matrix, returning K x N codes."""
    if columns.shape[0] != basis.dim:
        raise DimensionMismatch(f"volume length {columns.shape[0]}, basis dim {basis.dim}")
    p = basis.prototypes
    sq = (
        (p * p).sum(axis=1)[:, None]
        - 2.0 * (p @ columns)
        + (columns * columns).sum(axis=0)[None, :]
    )
    z = np.sqrt(np.maximum(sq, 0.0))
    return np.maximum(0.0, z.mean(axis=0)[None, :] - z)


def native_encode_batch(basis: BasisView, columns: np.ndarray) -> np.ndarray:
    """Code volumes with the basis's own formulation instead of triangles.

    Direct bases apply their closed-form shrink; inverse bases solve the
    LASSO against the raw (unnormalized) atoms. Codes may be signed, so
    pooled features lose the non-negativity the triangle encoder grants.
    """
    if basis.l1_weight is None:
        raise DimensionMismatch("native encoding needs the basis l1_weight")
    if basis.kind == "direct":
        return soft_threshold(basis.vectors @ columns, basis.l1_weight)
    D = Dictionary(basis.vectors.T.copy())
    h = InverseHyperparams(l1_weight=basis.l1_weight)
    return lasso_code_batch(D, columns, h)


def pool_quadrants(
    codes: np.ndarray, sites: list[tuple[int, int]], quadrant: np.ndarray
) -> np.ndarray:
    """Sum K x N codes into a 4K vector by quadrant membership.

    Sites are put in (y0, x0) order before each quadrant's sum, so any
    permutation of the input columns produces a bit-identical result.
    """
    order = sorted(range(len(sites)), key=lambda i: sites[i])
    codes = codes[:, order]
    quadrant = quadrant[order]
    k = codes.shape[0]
    pooled = np.zeros(4 * k)
    for q in range(4):
        members = codes[:, quadrant == q]
        if members.shape[1]:
            pooled[q * k : (q + 1) * k] = members.sum(axis=1)
    return pooled


def _quadrant_of(
    x0: int, y0: int, config: AccumulationConfig, n_x: int, n_y: int
) -> int:
    """0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right.

    A volume belongs to the left (top) half when its spatial center sits
    at or left of (at or above) the sensor midline floor(n/2); exact
    ties go left/top.
    """
    cx = x0 + (config.block_width - 1) / 2.0
    cy = y0 + (config.block_height - 1) / 2.0
    col = 0 if cx <= n_x // 2 else 1
    row = 0 if cy <= n_y // 2 else 1
    return 2 * row + col


def encode_recording(
    basis: BasisView,
    whitening: WhiteningModel,
    grid: AccumulatedGrid,
    config: AccumulationConfig,
    encoder: str = "triangle",
    norm_epsilon: float = 1e-8,
) -> FeatureVector:
    """Encode one recording's grid into a 4K feature vector.

    Every lattice volume is contrast-normalized, whitened, and encoded;
    codes are summed per spatial quadrant and concatenated in the order
    top-left, top-right, bottom-left, bottom-right.
    """
    if encoder not in ("triangle", "native"):
        raise DimensionMismatch(f"unknown encoder {encoder!r}")
    if whitening.dim != basis.dim or basis.dim != config.volume_dim:
        raise DimensionMismatch(
            f"basis dim {basis.dim}, whitening dim {whitening.dim}, "
            f"volume dim {config.volume_dim}"
        )
    try:
        volumes = extract_grid_volumes(grid, config)
    except OutOfBounds as exc:
        raise EmptyLattice(
            f"no {config.block_width}x{config.block_height}x{config.volume_length} "
            f"volumes fit a {grid.geometry.n_x}x{grid.geometry.n_y} grid "
            f"with {grid.num_intervals} intervals"
        ) from exc
    columns = np.stack(
        [normalize_volume(v, norm_epsilon).data for v in volumes], axis=1
    )
    columns = apply_whitening_matrix(whitening, columns)
    if encoder == "triangle":
        codes = triangle_encode_batch(basis, columns)
    else:
        codes = native_encode_batch(basis, columns)
    sites = [(v.y0, v.x0) for v in volumes]
    quadrant = np.array(
        [
            _quadrant_of(v.x0, v.y0, config, grid.geometry.n_x, grid.geometry.n_y)
            for v in volumes
        ]
    )
    return FeatureVector(pool_quadrants(codes, sites, quadrant))
