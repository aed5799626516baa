"""Sparse feature learning for event camera streams.

Two formulations of the same idea: model accumulated event volumes
either as sparse combinations over a learned dictionary (coding by
LASSO) or as thresholded projections through a learned transform
(coding in closed form). Either basis feeds triangle encoding, quadrant
pooling, and a linear SVM.
"""

from .basis_common import TraceEntry, conditioning_penalty, soft_threshold
from .classifier import LinearSvmModel, cross_validate, predict, train_svm
from .config import PipelineConfig, load_config, parse_config, serialize_config
from .container import ModelContainer, load_container, save_container
from .direct import (
    DirectHyperparams,
    Transform,
    code_consistency_check,
    threshold_code,
    train_direct,
    update_transform,
)
from .errors import ConfigError, DataError, EventfeatError
from .events import (
    CameraModel,
    Event,
    EventStream,
    SensorGeometry,
    parse_event_file,
    synthesize_events,
    write_event_file,
)
from .features import BasisView, FeatureVector, encode_recording, triangle_encode
from .inverse import (
    Dictionary,
    InverseHyperparams,
    SparseCodes,
    ksvd_update,
    lasso_code,
    lasso_code_batch,
    train_inverse,
)
from .volumes import (
    AccumulatedGrid,
    AccumulationConfig,
    LocalVolume,
    accumulate,
    extract_grid_volumes,
    extract_volume,
    normalize_volume,
    sample_random_volumes,
)
from .whitening import WhiteningModel, apply_whitening, fit_whitening

__version__ = "0.1.0"

__all__ = [
    "AccumulatedGrid",
    "AccumulationConfig",
    "BasisView",
    "CameraModel",
    "ConfigError",
    "DataError",
    "Dictionary",
    "DirectHyperparams",
    "Event",
    "EventStream",
    "EventfeatError",
    "FeatureVector",
    "InverseHyperparams",
    "LinearSvmModel",
    "LocalVolume",
    "ModelContainer",
    "PipelineConfig",
    "SensorGeometry",
    "SparseCodes",
    "TraceEntry",
    "Transform",
    "WhiteningModel",
    "accumulate",
    "apply_whitening",
    "code_consistency_check",
    "conditioning_penalty",
    "cross_validate",
    "encode_recording",
    "extract_grid_volumes",
    "extract_volume",
    "fit_whitening",
    "ksvd_update",
    "lasso_code",
    "lasso_code_batch",
    "load_config",
    "load_container",
    "normalize_volume",
    "parse_config",
    "parse_event_file",
    "predict",
    "sample_random_volumes",
    "save_container",
    "serialize_config",
    "soft_threshold",
    "synthesize_events",
    "threshold_code",
    "train_direct",
    "train_inverse",
    "train_svm",
    "triangle_encode",
    "update_transform",
    "write_event_file",
]
