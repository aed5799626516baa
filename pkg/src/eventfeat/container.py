"""Single-file binary persistence for trained pipeline models.

Layout: 8-byte magic "EVFT0001", u32 format version, then a sequence of
sections, each a 4-byte ASCII tag plus u64 payload length plus payload.
All integers and floats are little-endian; matrices are row-major f64.
Sections: CONF (canonical config text), WHIT (whitening model), BASI
(learned basis), SVMC (optional classifier). Loading the bytes written
by save reproduces the container bit-exactly, floats included.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .classifier import LinearSvmModel
from .config import PipelineConfig, parse_config, serialize_config
from .errors import DataError, DimensionMismatch
from .features import BasisView
from .whitening import WhiteningModel

MAGIC = b"EVFT0001"
FORMAT_VERSION = 1

_KIND_CODES = {"inverse": 0, "direct": 1}
_KIND_NAMES = {code: name for name, code in _KIND_CODES.items()}


@dataclass
class ModelContainer:
    """Everything needed to encode (and optionally classify) recordings.

    basis_vectors is always K x d: transform rows for the direct
    formulation, transposed dictionary atoms for the inverse one.
    """

    config: PipelineConfig
    whitening: WhiteningModel
    basis_kind: str
    basis_vectors: np.ndarray
    svm: LinearSvmModel | None = None

    def __post_init__(self) -> None:
        if self.basis_kind not in _KIND_CODES:
            raise DimensionMismatch(f"unknown basis kind {self.basis_kind!r}")
        self.basis_vectors = np.asarray(self.basis_vectors, dtype=np.float64)
        if self.basis_vectors.ndim != 2:
            raise DimensionMismatch("basis_vectors must be K x d")
        if self.basis_vectors.shape[1] != self.whitening.dim:
            raise DimensionMismatch(
                f"basis dim {self.basis_vectors.shape[1]} does not match "
                f"whitening dim {self.whitening.dim}"
            )
        if self.whitening.dim != self.config.volume_dim:
            raise DimensionMismatch(
                f"whitening dim {self.whitening.dim} does not match config "
                f"volume dim {self.config.volume_dim}"
            )

    def basis_view(self) -> BasisView:
        return BasisView(
            self.basis_vectors, self.basis_kind, l1_weight=self.config.l1_weight
        )


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _matrix_bytes(mat: np.ndarray) -> bytes:
    return np.ascontiguousarray(mat, dtype="<f8").tobytes()


def _whit_payload(model: WhiteningModel) -> bytes:
    head = struct.pack("<Id", model.dim, model.epsilon)
    return head + _matrix_bytes(model.mean) + _matrix_bytes(model.transform)


def _basi_payload(kind: str, vectors: np.ndarray) -> bytes:
    head = struct.pack(
        "<BII", _KIND_CODES[kind], vectors.shape[0], vectors.shape[1]
    )
    return head + _matrix_bytes(vectors)


def _svmc_payload(model: LinearSvmModel) -> bytes:
    parts = [struct.pack("<IId", len(model.classes), model.dim, model.reg_c)]
    for name in model.classes:
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)) + encoded)
    parts.append(_matrix_bytes(model.weights))
    parts.append(_matrix_bytes(model.bias))
    parts.append(_matrix_bytes(model.feature_mean))
    parts.append(_matrix_bytes(model.feature_std))
    return b"".join(parts)


def container_to_bytes(mc: ModelContainer) -> bytes:
    blob = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    blob.append(_section(b"CONF", serialize_config(mc.config).encode("utf-8")))
    blob.append(_section(b"WHIT", _whit_payload(mc.whitening)))
    blob.append(_section(b"BASI", _basi_payload(mc.basis_kind, mc.basis_vectors)))
    if mc.svm is not None:
        blob.append(_section(b"SVMC", _svmc_payload(mc.svm)))
    return b"".join(blob)


class _Reader:
    def __init__(self, payload: bytes, label: str):
        self.payload = payload
        self.label = label
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.payload):
            raise DataError(f"{self.label} section truncated")
        out = self.payload[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def matrix(self, *shape: int) -> np.ndarray:
        count = int(np.prod(shape))
        flat = np.frombuffer(self.take(count * 8), dtype="<f8")
        return flat.reshape(shape).astype(np.float64)

    def done(self) -> None:
        if self.pos != len(self.payload):
            raise DataError(f"{self.label} section has trailing bytes")


def _read_whit(payload: bytes) -> WhiteningModel:
    r = _Reader(payload, "WHIT")
    dim, epsilon = r.unpack("<Id")
    mean = r.matrix(dim)
    transform = r.matrix(dim, dim)
    r.done()
    return WhiteningModel(mean=mean, transform=transform, epsilon=epsilon)


def _read_basi(payload: bytes) -> tuple[str, np.ndarray]:
    r = _Reader(payload, "BASI")
    code, rows, cols = r.unpack("<BII")
    if code not in _KIND_NAMES:
        raise DataError(f"BASI section has unknown kind code {code}")
    vectors = r.matrix(rows, cols)
    r.done()
    return _KIND_NAMES[code], vectors


def _read_svmc(payload: bytes) -> LinearSvmModel:
    r = _Reader(payload, "SVMC")
    n_classes, dim, reg_c = r.unpack("<IId")
    classes = []
    for _ in range(n_classes):
        (length,) = r.unpack("<I")
        classes.append(r.take(length).decode("utf-8"))
    weights = r.matrix(n_classes, dim)
    bias = r.matrix(n_classes)
    feature_mean = r.matrix(dim)
    feature_std = r.matrix(dim)
    r.done()
    return LinearSvmModel(weights, bias, classes, reg_c, feature_mean, feature_std)


def container_from_bytes(data: bytes) -> ModelContainer:
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise DataError("not a model container (bad magic)")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported container version {version}")
    pos = len(MAGIC) + 4
    sections: dict[bytes, bytes] = {}
    while pos < len(data):
        if pos + 12 > len(data):
            raise DataError("truncated section header")
        tag = data[pos : pos + 4]
        (length,) = struct.unpack_from("<Q", data, pos + 4)
        pos += 12
        if pos + length > len(data):
            raise DataError(f"section {tag!r} truncated")
        if tag in sections:
            raise DataError(f"duplicate section {tag!r}")
        sections[tag] = data[pos : pos + length]
        pos += length
    for required in (b"CONF", b"WHIT", b"BASI"):
        if required not in sections:
            raise DataError(f"missing section {required!r}")
    unknown = set(sections) - {b"CONF", b"WHIT", b"BASI", b"SVMC"}
    if unknown:
        raise DataError(f"unknown sections {sorted(unknown)!r}")
    config = parse_config(sections[b"CONF"].decode("utf-8"))
    whitening = _read_whit(sections[b"WHIT"])
    kind, vectors = _read_basi(sections[b"BASI"])
    svm = _read_svmc(sections[b"SVMC"]) if b"SVMC" in sections else None
    return ModelContainer(config, whitening, kind, vectors, svm)


def save_container(mc: ModelContainer, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(container_to_bytes(mc))


def load_container(path: str) -> ModelContainer:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    return container_from_bytes(data)
