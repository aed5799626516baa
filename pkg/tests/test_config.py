"""Flat key-value configuration parsing and canonical serialization."""

import pytest

from eventfeat.config import (
    PipelineConfig,
    parse_config,
    serialize_config,
    with_overrides,
)
from eventfeat.errors import ConfigError


def test_defaults_validate_and_round_trip():
    cfg = PipelineConfig()
    cfg.validate()
    assert parse_config(serialize_config(cfg)) == cfg


def test_round_trip_preserves_awkward_floats():
    cfg = with_overrides(
        PipelineConfig(),
        l1_weight=0.30000000000000004,
        lasso_tol=1e-12,
        whitening_epsilon=0.1 + 2e-17,
        svm_reg_grid=(0.07, 3.0),
    )
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert again.l1_weight == cfg.l1_weight  # exact, not approximate


def test_parse_partial_file_keeps_defaults():
    cfg = parse_config("num_intervals = 5\nformulation = direct\n")
    assert cfg.num_intervals == 5
    assert cfg.formulation == "direct"
    assert cfg.block_width == PipelineConfig().block_width


def test_parse_ignores_comments_and_blank_lines():
    text = """
    # a comment line
    stride = 2   # trailing comment

    l1_weight = 0.5
    """
    cfg = parse_config(text)
    assert cfg.stride == 2
    assert cfg.l1_weight == 0.5


def test_parse_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"line 2: unknown key 'niter'"):
        parse_config("seed = 1\nniter = 5\n")


def test_parse_bad_value_reports_key_and_value():
    with pytest.raises(ConfigError, match=r"num_intervals: expected int"):
        parse_config("num_intervals = seven\n")
    with pytest.raises(ConfigError, match=r"l1_weight: expected float"):
        parse_config("l1_weight = big\n")


def test_parse_malformed_line():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("just some words\n")


def test_parse_grid_values():
    cfg = parse_config("svm_reg_grid = 0.5, 2, 8\n")
    assert cfg.svm_reg_grid == (0.5, 2.0, 8.0)


def test_validation_errors_name_the_field():
    with pytest.raises(ConfigError, match="num_basis_vectors"):
        parse_config("num_basis_vectors = 0\n")
    with pytest.raises(ConfigError, match="formulation"):
        parse_config("formulation = backways\n")
    with pytest.raises(ConfigError, match="encoder"):
        parse_config("encoder = onehot\n")
    with pytest.raises(ConfigError, match="l1_weight"):
        parse_config("l1_weight = 0\n")
    with pytest.raises(ConfigError, match="volume_length"):
        parse_config("volume_length = 9\nnum_intervals = 7\n")
    with pytest.raises(ConfigError, match="split_fraction"):
        parse_config("split_fraction = 1.0\n")
    with pytest.raises(ConfigError, match="svm_folds"):
        parse_config("svm_folds = 1\n")
    with pytest.raises(ConfigError, match="svm_reg_grid"):
        parse_config("svm_reg_grid = -1\n")


def test_with_overrides_validates():
    cfg = PipelineConfig()
    assert with_overrides(cfg, stride=3).stride == 3
    with pytest.raises(ConfigError):
        with_overrides(cfg, stride=0)


def test_volume_dim_property():
    cfg = with_overrides(
        PipelineConfig(), block_width=6, block_height=5, volume_length=3
    )
    assert cfg.volume_dim == 90


def test_accumulation_requires_resolved_delta_t():
    cfg = PipelineConfig()  # delta_t defaults to 0, meaning per-recording
    with pytest.raises(ConfigError, match="delta_t"):
        cfg.accumulation()
    acc = cfg.accumulation(delta_t=500)
    assert acc.delta_t == 500
    assert acc.num_intervals == cfg.num_intervals
    fixed = with_overrides(cfg, delta_t=250)
    assert fixed.accumulation().delta_t == 250
