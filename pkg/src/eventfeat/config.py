"""Flat key-value pipeline configuration.

The on-disk format is UTF-8 text, one `key = value` per line, `#`
comments, keys named exactly after PipelineConfig fields. Every field
has a default, so a config file only lists what it overrides. The
serialized form is canonical (fixed field order) and round-trips
through parse_config bit-exactly, which the model container relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .volumes import AccumulationConfig

FORMULATIONS = ("inverse", "direct")
ENCODERS = ("triangle", "native")


@dataclass
class PipelineConfig:
    """Every knob of the pipeline, with the full-scale defaults.

    delta_t = 0 means "derive per recording": each recording's time span
    is divided evenly into num_intervals windows. svm_reg_c = 0 means
    cross-validate over svm_reg_grid. target_sparsity = 0 disables the
    hard sparsity cap in the inverse coder.
    """

    sensor_width: int = 34
    sensor_height: int = 34
    downsample_factor: int = 1
    delta_t: int = 0
    num_intervals: int = 7
    volume_length: int = 4
    block_width: int = 12
    block_height: int = 12
    stride: int = 1
    num_basis_vectors: int = 1700
    formulation: str = "inverse"
    l1_weight: float = 0.2
    penalty_weight: float = 1.0
    frobenius_weight: float = 0.001
    coherence_weight: float = 0.0
    logdet_weight: float = 0.001
    num_iterations: int = 10
    lasso_tol: float = 1e-6
    lasso_max_sweeps: int = 1000
    target_sparsity: int = 0
    whitening_epsilon: float = 0.1
    norm_epsilon: float = 1e-8
    encoder: str = "triangle"
    num_train_volumes: int = 20000
    svm_reg_c: float = 0.0
    svm_reg_grid: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    svm_folds: int = 5
    split_fraction: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        positive_ints = (
            "sensor_width",
            "sensor_height",
            "downsample_factor",
            "num_intervals",
            "volume_length",
            "block_width",
            "block_height",
            "stride",
            "num_basis_vectors",
            "num_train_volumes",
        )
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be at least 1")
        for name in ("delta_t", "lasso_max_sweeps", "target_sparsity", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(
                f"formulation: expected one of {', '.join(FORMULATIONS)}, "
                f"got {self.formulation!r}"
            )
        if self.encoder not in ENCODERS:
            raise ConfigError(
                f"encoder: expected one of {', '.join(ENCODERS)}, got {self.encoder!r}"
            )
        if self.l1_weight <= 0:
            raise ConfigError("l1_weight: must be positive")
        nonneg_floats = (
            "penalty_weight",
            "frobenius_weight",
            "coherence_weight",
            "logdet_weight",
            "whitening_epsilon",
            "norm_epsilon",
            "svm_reg_c",
        )
        for name in nonneg_floats:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative")
        if self.num_iterations < 0:
            raise ConfigError("num_iterations: must be non-negative")
        if self.lasso_tol <= 0:
            raise ConfigError("lasso_tol: must be positive")
        if self.volume_length > self.num_intervals:
            raise ConfigError(
                f"volume_length: {self.volume_length} intervals requested but "
                f"grids only hold {self.num_intervals}"
            )
        if not self.svm_reg_grid:
            raise ConfigError("svm_reg_grid: must list at least one value")
        if any(c <= 0 for c in self.svm_reg_grid):
            raise ConfigError("svm_reg_grid: values must be positive")
        if self.svm_folds < 2:
            raise ConfigError("svm_folds: must be at least 2")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction: must be strictly between 0 and 1")

    @property
    def volume_dim(self) -> int:
        return self.volume_length * self.block_width * self.block_height

    def accumulation(self, delta_t: int | None = None) -> AccumulationConfig:
        """The accumulation/extraction settings, with delta_t resolved.

        Pass the per-recording value when the config leaves delta_t at 0.
        """
        dt = self.delta_t if delta_t is None else delta_t
        if dt < 1:
            raise ConfigError(
                "delta_t: 0 means per-recording; resolve it before accumulating"
            )
        return AccumulationConfig(
            delta_t=dt,
            num_intervals=self.num_intervals,
            volume_length=self.volume_length,
            block_width=self.block_width,
            block_height=self.block_height,
            stride=self.stride,
        )


def parse_config(text: str) -> PipelineConfig:
    """Parse key-value text into a validated PipelineConfig."""
    field_types = {f.name: f.type for f in fields(PipelineConfig)}
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in field_types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, field_types[key], raw_value)
    cfg = PipelineConfig(**values)  # type: ignore[arg-type]
    cfg.validate()
    return cfg


def _convert(key: str, kind: str, raw: str) -> object:
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        return tuple(float(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from exc


def serialize_config(cfg: PipelineConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            rendered = ", ".join(repr(v) for v in value)
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def with_overrides(cfg: PipelineConfig, **overrides: object) -> PipelineConfig:
    out = replace(cfg, **overrides)  # type: ignore[arg-type]
    out.validate()
    return out
