"""Accumulated polarity grids and local-volume extraction.

Events are binned into ``num_intervals`` windows of ``delta_t``
microseconds; each cell of the resulting grid holds the signed sum of
polarities for one pixel in one window. Local volumes are flattened
``volume_length x block_height x block_width`` crops of that grid, the
atomic unit that basis learning and encoding operate on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientData, OutOfBounds, ShapeMismatch
from .events import EventStream, SensorGeometry


@dataclass(frozen=True)
class AccumulationConfig:
    delta_t: int
    num_intervals: int
    volume_length: int
    block_width: int
    block_height: int
    stride: int = 1

    def __post_init__(self) -> None:
        if self.delta_t <= 0:
            raise ShapeMismatch("delta_t must be positive")
        if self.num_intervals < 1:
            raise ShapeMismatch("num_intervals must be at least 1")
        if not 1 <= self.volume_length <= self.num_intervals:
            raise ShapeMismatch("volume_length must lie in [1, num_intervals]")
        if self.block_width < 1 or self.block_height < 1:
            raise ShapeMismatch("block size must be at least 1x1")
        if self.stride < 1:
            raise ShapeMismatch("stride must be at least 1")

    @property
    def volume_dim(self) -> int:
        return self.block_width * self.block_height * self.volume_length


@dataclass
class AccumulatedGrid:
    geometry: SensorGeometry
    values: np.ndarray  # (num_intervals, n_y, n_x), float64

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ShapeMismatch("grid values must be (intervals, n_y, n_x)")
        if self.values.shape[1:] != (self.geometry.n_y, self.geometry.n_x):
            raise ShapeMismatch("grid shape does not match geometry")

    @property
    def num_intervals(self) -> int:
        return self.values.shape[0]


@dataclass
class LocalVolume:
    """Flattened crop of an accumulated grid.

    ``data`` is ordered interval-major, then row-major over (y, x); this
    matches a C-order ravel of the (volume_length, block_height,
    block_width) crop. ``block`` records which grid or lattice site the
    volume came from when that is meaningful, -1 otherwise.
    """

    data: np.ndarray
    x0: int
    y0: int
    l0: int
    block: int = -1

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64).ravel()


def accumulate(
    stream: EventStream, config: AccumulationConfig
) -> tuple[AccumulatedGrid, int]:
    """Bin a stream into an accumulated grid.

    Returns the grid and the number of dropped events, i.e. events at or
    past ``num_intervals * delta_t``. An empty stream yields an all-zero
    grid.
    """
    geo = stream.geometry
    values = np.zeros((config.num_intervals, geo.n_y, geo.n_x), dtype=np.float64)
    if len(stream) == 0:
        return AccumulatedGrid(geo, values), 0
    interval = stream.t // config.delta_t
    keep = interval < config.num_intervals
    dropped = int(np.count_nonzero(~keep))
    np.add.at(
        values,
        (interval[keep], stream.y[keep], stream.x[keep]),
        stream.polarity[keep].astype(np.float64),
    )
    return AccumulatedGrid(geo, values), dropped


def extract_volume(
    grid: AccumulatedGrid, config: AccumulationConfig, x0: int, y0: int, l0: int
) -> LocalVolume:
    """Crop one local volume with its origin at (x0, y0, l0)."""
    bx, by, tl = config.block_width, config.block_height, config.volume_length
    if x0 < 0 or y0 < 0 or l0 < 0:
        raise OutOfBounds(f"negative origin ({x0}, {y0}, {l0})")
    if x0 + bx > grid.geometry.n_x or y0 + by > grid.geometry.n_y:
        raise OutOfBounds(
            f"block {bx}x{by} at ({x0}, {y0}) exceeds "
            f"{grid.geometry.n_x}x{grid.geometry.n_y}"
        )
    if l0 + tl > grid.num_intervals:
        raise OutOfBounds(f"volume_length {tl} at interval {l0} exceeds grid")
    crop = grid.values[l0 : l0 + tl, y0 : y0 + by, x0 : x0 + bx]
    return LocalVolume(crop.ravel().copy(), x0=x0, y0=y0, l0=l0)


def lattice_positions(
    geometry: SensorGeometry, config: AccumulationConfig
) -> list[tuple[int, int]]:
    """Spatial extraction sites (x0, y0) on the stride lattice, row-major."""
    if config.block_width > geometry.n_x or config.block_height > geometry.n_y:
        raise OutOfBounds(
            f"block {config.block_width}x{config.block_height} larger than sensor"
        )
    xs = range(0, geometry.n_x - config.block_width + 1, config.stride)
    ys = range(0, geometry.n_y - config.block_height + 1, config.stride)
    return [(x0, y0) for y0 in ys for x0 in xs]


def extract_grid_volumes(
    grid: AccumulatedGrid, config: AccumulationConfig, l0: int = 0
) -> list[LocalVolume]:
    """Extract the full stride lattice of volumes at one temporal offset.

    In the usual configuration volume_length equals num_intervals, so the
    lattice is purely spatial and l0 stays 0. The site count is
    floor((n_x - B_x)/stride + 1) * floor((n_y - B_y)/stride + 1).
    """
    out = []
    for b, (x0, y0) in enumerate(lattice_positions(grid.geometry, config)):
        vol = extract_volume(grid, config, x0, y0, l0)
        vol.block = b
        out.append(vol)
    return out


_RETRIES_PER_DRAW = 1000


def sample_random_volumes(
    grids: list[AccumulatedGrid],
    config: AccumulationConfig,
    count: int,
    seed: int,
) -> list[LocalVolume]:
    """Draw volumes at uniformly random (grid, x0, y0, l0) positions.

    Reproducible for a fixed seed. All-zero volumes carry no event
    information and are rejected and redrawn; after 1000 consecutive
    rejections the sampler gives up with InsufficientData. Each returned
    volume's ``block`` is the index of its source grid.
    """
    if count < 1:
        raise InsufficientData("count must be at least 1")
    if not grids:
        raise InsufficientData("no grids to sample from")
    for g in grids:
        # fail fast if no position fits, rather than burning retries
        if (
            config.block_width > g.geometry.n_x
            or config.block_height > g.geometry.n_y
            or config.volume_length > g.num_intervals
        ):
            raise OutOfBounds("volume does not fit inside one of the grids")
    rng = np.random.default_rng(seed)
    out: list[LocalVolume] = []
    rejections = 0
    while len(out) < count:
        gi = int(rng.integers(len(grids)))
        g = grids[gi]
        x0 = int(rng.integers(g.geometry.n_x - config.block_width + 1))
        y0 = int(rng.integers(g.geometry.n_y - config.block_height + 1))
        l0 = int(rng.integers(g.num_intervals - config.volume_length + 1))
        vol = extract_volume(g, config, x0, y0, l0)
        if not np.any(vol.data):
            rejections += 1
            if rejections >= _RETRIES_PER_DRAW:
                raise InsufficientData(
                    f"{rejections} consecutive all-zero draws; not enough events"
                )
            continue
        rejections = 0
        vol.block = gi
        out.append(vol)
    return out


def normalize_volume(v: LocalVolume, epsilon: float = 1e-8) -> LocalVolume:
    """Standardize one volume: (v - mean) / sqrt(var + epsilon).

    The epsilon sits inside the square root so constant volumes map to
    zero instead of dividing by zero.
    """
    mean = v.data.mean()
    var = v.data.var()
    data = (v.data - mean) / np.sqrt(var + epsilon)
    return replace(v, data=data)
