"""Event-stream types, binary parsing, and threshold-model synthesis.

An event camera reports per-pixel brightness changes as a stream of
(x, y, t, polarity) records. This module reads and writes the common
5-byte binary layout and synthesizes streams from a sequence of
log-brightness frames using the contrast-threshold model: a pixel emits
one event per crossed multiple of the threshold C, and its reference
level advances by polarity * C per event.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    CoordinateOutOfRange,
    NonMonotonicTimestamps,
    ShapeMismatch,
    TimestampOverflow,
    TruncatedRecord,
)

RECORD_BYTES = 5
MAX_TIMESTAMP = 1 << 23  # exclusive; the format stores 23 timestamp bits


class Event(NamedTuple):
    x: int
    y: int
    t: int
    polarity: int


@dataclass(frozen=True)
class SensorGeometry:
    n_x: int
    n_y: int

    def __post_init__(self) -> None:
        if self.n_x < 1 or self.n_y < 1:
            raise ShapeMismatch(f"sensor geometry must be positive, got {self.n_x}x{self.n_y}")


@dataclass
class EventStream:
    """A time-sorted batch of events over a fixed sensor geometry.

    Events are stored as parallel numpy arrays rather than per-event
    objects; recordings routinely hold 1e4..1e6 events.
    """

    geometry: SensorGeometry
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    polarity: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.polarity = np.asarray(self.polarity, dtype=np.int64)
        n = self.x.shape[0]
        if not (self.y.shape[0] == self.t.shape[0] == self.polarity.shape[0] == n):
            raise ShapeMismatch("event component arrays differ in length")
        if n:
            if self.x.min() < 0 or self.x.max() >= self.geometry.n_x:
                raise CoordinateOutOfRange("x coordinate outside sensor")
            if self.y.min() < 0 or self.y.max() >= self.geometry.n_y:
                raise CoordinateOutOfRange("y coordinate outside sensor")
            if self.t.min() < 0:
                raise NonMonotonicTimestamps("negative timestamp")
            if np.any(np.diff(self.t) < 0):
                raise NonMonotonicTimestamps("events must be sorted by timestamp")
            if not np.all(np.abs(self.polarity) == 1):
                raise ShapeMismatch("polarity must be +1 or -1")

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.polarity[i]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.polarity, other.polarity)
        )

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Sequence[Event]) -> "EventStream":
        if not events:
            return empty_stream(geometry)
        arr = np.asarray(events, dtype=np.int64)
        return cls(geometry, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def empty_stream(geometry: SensorGeometry) -> EventStream:
    z = np.zeros(0, dtype=np.int64)
    return EventStream(geometry, z, z.copy(), z.copy(), z.copy())


@dataclass
class CameraModel:
    """Contrast threshold plus the per-pixel reference log-brightness.

    ``reference`` holds each pixel's brightness state at the first frame;
    synthesis measures changes against this evolving level, not against
    the previous frame.
    """

    contrast_threshold: float
    reference: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.contrast_threshold <= 0:
            raise ShapeMismatch("contrast threshold must be positive")
        self.reference = np.asarray(self.reference, dtype=np.float64)
        if self.reference.ndim != 2:
            raise ShapeMismatch("reference must be a n_y x n_x array")

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(n_x=self.reference.shape[1], n_y=self.reference.shape[0])


def parse_event_file(data: bytes, geometry: SensorGeometry) -> EventStream:
    """Decode the 5-byte-per-event binary layout.

    Record layout: byte0 = x, byte1 = y, byte2 bit 7 = polarity
    (1 -> +1, 0 -> -1), and the remaining 23 bits, big-endian, are the
    microsecond timestamp: ((byte2 & 0x7F) << 16) | (byte3 << 8) | byte4.

    File order is preserved; if the file contains timestamp inversions the
    events are stable-sorted by t (capture hardware occasionally reorders
    records, so inversions are tolerated rather than rejected).
    """
    if len(data) % RECORD_BYTES != 0:
        raise TruncatedRecord(
            f"file length {len(data)} is not a multiple of {RECORD_BYTES}"
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    x = raw[:, 0].astype(np.int64)
    y = raw[:, 1].astype(np.int64)
    bad_x = x >= geometry.n_x
    bad_y = y >= geometry.n_y
    if bad_x.any() or bad_y.any():
        idx = int(np.argmax(bad_x | bad_y))
        raise CoordinateOutOfRange(
            f"record {idx}: ({x[idx]}, {y[idx]}) outside {geometry.n_x}x{geometry.n_y}"
        )
    polarity = np.where(raw[:, 2] >> 7, 1, -1).astype(np.int64)
    t = (
        (raw[:, 2].astype(np.int64) & 0x7F) << 16
        | raw[:, 3].astype(np.int64) << 8
        | raw[:, 4].astype(np.int64)
    )
    if t.size and np.any(np.diff(t) < 0):
        order = np.argsort(t, kind="stable")
        x, y, t, polarity = x[order], y[order], t[order], polarity[order]
    return EventStream(geometry, x, y, t, polarity)


def write_event_file(stream: EventStream) -> bytes:
    """Encode a stream back to bytes; exact inverse of parse_event_file."""
    if len(stream) == 0:
        return b""
    if stream.t.max() >= MAX_TIMESTAMP:
        raise TimestampOverflow(
            f"timestamp {int(stream.t.max())} exceeds the 23-bit field"
        )
    raw = np.empty((len(stream), RECORD_BYTES), dtype=np.uint8)
    raw[:, 0] = stream.x
    raw[:, 1] = stream.y
    raw[:, 2] = ((stream.polarity > 0).astype(np.uint8) << 7) | (
        (stream.t >> 16) & 0x7F
    ).astype(np.uint8)
    raw[:, 3] = ((stream.t >> 8) & 0xFF).astype(np.uint8)
    raw[:, 4] = (stream.t & 0xFF).astype(np.uint8)
    return raw.tobytes()


# Tolerance used when counting threshold crossings, relative to C. Keeps
# exact multiples of C (which arise constantly in tests and clean synthetic
# inputs) from losing a crossing to one ulp of rounding.
_CROSSING_SLACK = 1e-9


def synthesize_events(
    frames: Sequence[np.ndarray] | np.ndarray,
    frame_times: Sequence[int] | np.ndarray,
    camera: CameraModel,
) -> EventStream:
    """Generate events from log-brightness frames via threshold crossings.

    Between consecutive frames the brightness of each pixel is taken to
    move linearly. Whenever the change relative to the pixel's reference
    level reaches the contrast threshold C, one event per crossed multiple
    of C is emitted, timestamped at the interpolated crossing time, and the
    reference advances by polarity * C. Residual sub-threshold change
    carries over to later frames.

    Returns the events sorted by timestamp (stable in emission order:
    frame interval, then pixel row-major, then crossing index).
    """
    stack = np.asarray(frames, dtype=np.float64)
    if stack.ndim != 3:
        raise ShapeMismatch("frames must stack to a (num_frames, n_y, n_x) array")
    if stack.shape[1:] != camera.reference.shape:
        raise ShapeMismatch(
            f"frame shape {stack.shape[1:]} does not match camera reference "
            f"{camera.reference.shape}"
        )
    times = np.asarray(frame_times, dtype=np.int64)
    if times.shape != (stack.shape[0],):
        raise ShapeMismatch("frame_times length must match frame count")
    if np.any(np.diff(times) <= 0):
        raise NonMonotonicTimestamps("frame times must be strictly increasing")

    geometry = camera.geometry
    c = float(camera.contrast_threshold)
    ref = camera.reference.astype(np.float64).copy()

    xs_all: list[np.ndarray] = []
    ys_all: list[np.ndarray] = []
    ts_all: list[np.ndarray] = []
    ps_all: list[np.ndarray] = []

    for i in range(1, stack.shape[0]):
        lo, hi = stack[i - 1], stack[i]
        delta = hi - ref
        count = np.floor(np.abs(delta) / c + _CROSSING_SLACK).astype(np.int64)
        if count.max(initial=0) == 0:
            continue
        ys, xs = np.nonzero(count)
        n_pix = count[ys, xs]
        pol = np.where(delta[ys, xs] > 0, 1, -1).astype(np.int64)

        # Expand to one row per emitted event; j counts crossings per pixel.
        total = int(n_pix.sum())
        owner = np.repeat(np.arange(len(xs)), n_pix)
        j = np.arange(total) - np.repeat(np.cumsum(n_pix) - n_pix, n_pix) + 1

        level = ref[ys, xs][owner] + pol[owner] * c * j
        start = lo[ys, xs][owner]
        stop = hi[ys, xs][owner]
        span = stop - start
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(span != 0, (level - start) / span, 0.0)
        frac = np.clip(frac, 0.0, 1.0)
        t = np.rint(times[i - 1] + frac * (times[i] - times[i - 1])).astype(np.int64)

        xs_all.append(xs[owner])
        ys_all.append(ys[owner])
        ts_all.append(t)
        ps_all.append(pol[owner])
        ref[ys, xs] += pol * c * n_pix

    if not xs_all:
        return empty_stream(geometry)
    x = np.concatenate(xs_all)
    y = np.concatenate(ys_all)
    t = np.concatenate(ts_all)
    p = np.concatenate(ps_all)
    order = np.argsort(t, kind="stable")
    return EventStream(geometry, x[order], y[order], t[order], p[order])
