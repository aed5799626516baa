"""Binary model container round-trips and corruption handling."""

import struct

import numpy as np
import pytest

from eventfeat.classifier import LinearSvmModel
from eventfeat.config import PipelineConfig, with_overrides
from eventfeat.container import (
    MAGIC,
    ModelContainer,
    container_from_bytes,
    container_to_bytes,
    load_container,
    save_container,
)
from eventfeat.errors import DataError, DimensionMismatch
from eventfeat.whitening import WhiteningModel


def tiny_container(rng, with_svm=True):
    cfg = with_overrides(
        PipelineConfig(),
        block_width=2,
        block_height=2,
        volume_length=2,
        num_intervals=3,
        num_basis_vectors=5,
        formulation="direct",
        l1_weight=0.31,
    )
    d = cfg.volume_dim
    whitening = WhiteningModel(
        mean=rng.standard_normal(d),
        transform=rng.standard_normal((d, d)),
        epsilon=0.125,
    )
    svm = None
    if with_svm:
        svm = LinearSvmModel(
            weights=rng.standard_normal((3, 4 * 5)),
            bias=rng.standard_normal(3),
            classes=["bar", "baz", "foo"],
            reg_c=2.5,
            feature_mean=rng.standard_normal(4 * 5),
            feature_std=np.abs(rng.standard_normal(4 * 5)) + 0.1,
        )
    return ModelContainer(
        config=cfg,
        whitening=whitening,
        basis_kind="direct",
        basis_vectors=rng.standard_normal((5, d)),
        svm=svm,
    )


def assert_containers_equal(a, b):
    assert a.config == b.config
    assert a.basis_kind == b.basis_kind
    np.testing.assert_array_equal(a.basis_vectors, b.basis_vectors)
    np.testing.assert_array_equal(a.whitening.mean, b.whitening.mean)
    np.testing.assert_array_equal(a.whitening.transform, b.whitening.transform)
    assert a.whitening.epsilon == b.whitening.epsilon
    if a.svm is None:
        assert b.svm is None
    else:
        assert a.svm.classes == b.svm.classes
        assert a.svm.reg_c == b.svm.reg_c
        np.testing.assert_array_equal(a.svm.weights, b.svm.weights)
        np.testing.assert_array_equal(a.svm.bias, b.svm.bias)
        np.testing.assert_array_equal(a.svm.feature_mean, b.svm.feature_mean)
        np.testing.assert_array_equal(a.svm.feature_std, b.svm.feature_std)


def test_round_trip_with_classifier_is_bit_exact():
    rng = np.random.default_rng(130)
    mc = tiny_container(rng)
    data = container_to_bytes(mc)
    again = container_from_bytes(data)
    assert_containers_equal(mc, again)
    # serializing the loaded container reproduces the same bytes
    assert container_to_bytes(again) == data


def test_round_trip_without_classifier():
    rng = np.random.default_rng(131)
    mc = tiny_container(rng, with_svm=False)
    again = container_from_bytes(container_to_bytes(mc))
    assert again.svm is None
    assert_containers_equal(mc, again)


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(132)
    mc = tiny_container(rng)
    path = tmp_path / "model.evft"
    save_container(mc, str(path))
    assert_containers_equal(mc, load_container(str(path)))


def test_basis_view_carries_config_weight():
    rng = np.random.default_rng(133)
    mc = tiny_container(rng)
    view = mc.basis_view()
    assert view.kind == "direct"
    assert view.l1_weight == mc.config.l1_weight
    np.testing.assert_array_equal(view.vectors, mc.basis_vectors)


def test_bad_magic_rejected():
    rng = np.random.default_rng(134)
    data = container_to_bytes(tiny_container(rng))
    with pytest.raises(DataError, match="magic"):
        container_from_bytes(b"NOTEVFT1" + data[8:])
    with pytest.raises(DataError):
        container_from_bytes(b"EV")


def test_unsupported_version_rejected():
    rng = np.random.default_rng(135)
    data = bytearray(container_to_bytes(tiny_container(rng)))
    struct.pack_into("<I", data, len(MAGIC), 9)
    with pytest.raises(DataError, match="version"):
        container_from_bytes(bytes(data))


def test_truncation_rejected_everywhere():
    rng = np.random.default_rng(136)
    data = container_to_bytes(tiny_container(rng))
    for cut in (len(MAGIC) + 2, 40, len(data) - 1):
        with pytest.raises(DataError):
            container_from_bytes(data[:cut])


def test_unknown_section_rejected():
    rng = np.random.default_rng(137)
    data = container_to_bytes(tiny_container(rng, with_svm=False))
    extra = b"XTRA" + struct.pack("<Q", 3) + b"abc"
    with pytest.raises(DataError, match="unknown"):
        container_from_bytes(data + extra)


def test_duplicate_section_rejected():
    rng = np.random.default_rng(138)
    mc = tiny_container(rng, with_svm=False)
    data = container_to_bytes(mc)
    conf = serialize_section_for_test(mc)
    with pytest.raises(DataError, match="duplicate"):
        container_from_bytes(data + conf)


def serialize_section_for_test(mc):
    from eventfeat.config import serialize_config

    payload = serialize_config(mc.config).encode("utf-8")
    return b"CONF" + struct.pack("<Q", len(payload)) + payload


def test_missing_section_rejected():
    rng = np.random.default_rng(139)
    mc = tiny_container(rng, with_svm=False)
    data = container_to_bytes(mc)
    # drop the WHIT section by rebuilding from parsed pieces
    pos = len(MAGIC) + 4
    kept = bytearray(data[:pos])
    while pos < len(data):
        tag = data[pos : pos + 4]
        (length,) = struct.unpack_from("<Q", data, pos + 4)
        end = pos + 12 + length
        if tag != b"WHIT":
            kept += data[pos:end]
        pos = end
    with pytest.raises(DataError, match="missing"):
        container_from_bytes(bytes(kept))


def test_container_validates_dimension_consistency():
    rng = np.random.default_rng(140)
    cfg = with_overrides(
        PipelineConfig(), block_width=2, block_height=2, volume_length=2
    )
    whitening = WhiteningModel(
        mean=np.zeros(8), transform=np.eye(8), epsilon=0.1
    )
    with pytest.raises(DimensionMismatch):
        ModelContainer(cfg, whitening, "direct", rng.standard_normal((4, 7)))
    bad_whitening = WhiteningModel(mean=np.zeros(5), transform=np.eye(5), epsilon=0.1)
    with pytest.raises(DimensionMismatch):
        ModelContainer(cfg, bad_whitening, "direct", rng.standard_normal((4, 5)))
    with pytest.raises(DimensionMismatch):
        ModelContainer(cfg, whitening, "hybrid", rng.standard_normal((4, 8)))
