"""Direct-formulation coding and closed-form transform updates."""

import math

import numpy as np
import pytest

from eventfeat.basis_common import soft_threshold
from eventfeat.direct import (
    DirectHyperparams,
    Transform,
    code_consistency_check,
    threshold_code,
    train_direct,
    transform_subproblem_value,
    update_transform,
)
from eventfeat.errors import (
    DimensionMismatch,
    EmptyInput,
    NotNormalized,
    SingularFactor,
)
from eventfeat.inverse import Dictionary, SparseCodes


def scalar_prox_oracle(z, lam):
    """Minimize 0.5*(l - z)^2 + lam*|l| by candidate evaluation.

    The three stationary candidates (0 and the two shifted roots) cover
    every case; a coarse grid guards against a wrong candidate list.
    """
    candidates = [0.0, z - lam, z + lam]
    candidates += list(np.linspace(z - 2 * lam - 1, z + 2 * lam + 1, 41))
    value = lambda l: 0.5 * (l - z) ** 2 + lam * abs(l)  # noqa: E731
    return min(candidates, key=value)


def test_threshold_code_matches_scalar_prox_oracle():
    rng = np.random.default_rng(70)
    A = Transform(rng.standard_normal((6, 4)))
    v = rng.standard_normal(4)
    lam = 0.35
    got = threshold_code(A, v, lam)
    pre = A.rows @ v
    for k in range(6):
        want = scalar_prox_oracle(pre[k], lam)
        assert abs(got[k] - want) <= 1e-12


def test_threshold_code_zero_weight_is_exact_linear_map():
    rng = np.random.default_rng(71)
    A = Transform(rng.standard_normal((5, 5)))
    v = rng.standard_normal(5)
    np.testing.assert_array_equal(threshold_code(A, v, 0.0), A.rows @ v)


def test_threshold_code_support_shrinks_with_weight():
    rng = np.random.default_rng(72)
    A = Transform(rng.standard_normal((40, 10)))
    v = rng.standard_normal(10)
    sizes = [
        int(np.count_nonzero(threshold_code(A, v, lam)))
        for lam in (0.01, 0.1, 0.5, 1.5)
    ]
    assert sizes == sorted(sizes, reverse=True)
    assert sizes[-1] < 40


def test_threshold_code_batch_matches_columns():
    rng = np.random.default_rng(73)
    A = Transform(rng.standard_normal((7, 5)))
    V = rng.standard_normal((5, 9))
    batch = threshold_code(A, V, 0.2)
    for i in range(9):
        np.testing.assert_allclose(
            threshold_code(A, V[:, i], 0.2), batch[:, i], rtol=1e-13, atol=1e-15
        )


def test_threshold_code_element_order_is_irrelevant():
    """Each code element depends only on its own transform row, so any
    evaluation order (or parallel schedule) produces identical bits."""
    rng = np.random.default_rng(74)
    A = Transform(rng.standard_normal((32, 12)))
    v = rng.standard_normal(12)
    lam = 0.15

    def by_order(order):
        out = np.empty(32)
        for k in order:
            out[k] = soft_threshold(A.rows[k] @ v, lam)
        return out

    forward = by_order(range(32))
    shuffled = by_order(rng.permutation(32))
    reverse = by_order(range(31, -1, -1))
    np.testing.assert_array_equal(forward, shuffled)
    np.testing.assert_array_equal(forward, reverse)
    # the batched route may reduce in a different summation order
    np.testing.assert_allclose(
        threshold_code(A, v, lam), forward, rtol=1e-13, atol=1e-14
    )


def test_threshold_code_rejects_dimension_mismatch():
    A = Transform(np.eye(3))
    with pytest.raises(DimensionMismatch):
        threshold_code(A, np.zeros(4), 0.1)


def diagonal_update_oracle(v_block, l_block, fw, lw):
    """Per-entry stationary solve for a diagonal-by-construction update.

    With orthogonal data rows and matching code rows the transform
    subproblem separates into scalar problems min a^2 m - 2 a b - lw ln|a|
    whose positive root is (b + sqrt(b^2 + 2 m lw)) / (2 m).
    """
    diag = []
    for i in range(v_block.shape[0]):
        m = float(v_block[i] @ v_block[i]) + fw
        b = float(v_block[i] @ l_block[i])
        diag.append((b + math.sqrt(b * b + 2.0 * m * lw)) / (2.0 * m))
    return np.diag(diag)


def test_update_transform_matches_scalar_stationary_oracle():
    targets = np.array([[2.0, -2.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
    codes = np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 0.5, -0.5]])
    h = DirectHyperparams(
        l1_weight=0.1, penalty_weight=1.0, frobenius_weight=0.3, logdet_weight=0.7
    )
    A = update_transform(targets, SparseCodes(codes), h)
    want = diagonal_update_oracle(targets, codes, 0.3, 0.7)
    np.testing.assert_allclose(A.rows, want, atol=1e-12)


def test_update_transform_square_beats_1000_perturbations():
    rng = np.random.default_rng(75)
    targets = rng.standard_normal((6, 50))
    codes = soft_threshold(rng.standard_normal((6, 6)) @ targets, 0.3)
    h = DirectHyperparams(
        l1_weight=0.3, penalty_weight=0.5, frobenius_weight=0.2, logdet_weight=0.4
    )
    A = update_transform(targets, SparseCodes(codes), h)
    base = transform_subproblem_value(A, targets, codes, h)
    for _ in range(1000):
        step = 1e-3 * rng.standard_normal((6, 6))
        probe = transform_subproblem_value(
            Transform(A.rows + step), targets, codes, h
        )
        assert probe >= base - 1e-12


def test_update_transform_without_logdet_is_ridge_solution():
    rng = np.random.default_rng(76)
    targets = rng.standard_normal((5, 40))
    codes = rng.standard_normal((5, 40))
    h = DirectHyperparams(l1_weight=0.1, penalty_weight=1.0, frobenius_weight=0.6)
    A = update_transform(targets, SparseCodes(codes), h)
    m = targets @ targets.T + 0.6 * np.eye(5)
    want = np.linalg.solve(m, targets @ codes.T).T
    np.testing.assert_allclose(A.rows, want, atol=1e-10)


def test_update_transform_logdet_weight_limits_to_ridge():
    rng = np.random.default_rng(77)
    targets = rng.standard_normal((4, 30))
    codes = rng.standard_normal((4, 30))
    ridge = update_transform(
        targets,
        SparseCodes(codes),
        DirectHyperparams(l1_weight=0.1, penalty_weight=1.0, frobenius_weight=0.2),
    )
    nearly = update_transform(
        targets,
        SparseCodes(codes),
        DirectHyperparams(
            l1_weight=0.1, penalty_weight=1.0, frobenius_weight=0.2,
            logdet_weight=1e-13,
        ),
    )
    np.testing.assert_allclose(nearly.rows, ridge.rows, atol=1e-6)


def test_update_transform_self_coding_approaches_identity():
    rng = np.random.default_rng(78)
    targets = rng.standard_normal((5, 60))
    h = DirectHyperparams(
        l1_weight=0.1, penalty_weight=1.0, frobenius_weight=1e-10, logdet_weight=1e-10
    )
    A = update_transform(targets, SparseCodes(targets.copy()), h)
    np.testing.assert_allclose(A.rows, np.eye(5), atol=1e-4)


def test_update_transform_overcomplete_rows_are_unit_norm():
    rng = np.random.default_rng(79)
    targets = rng.standard_normal((4, 60))
    codes = rng.standard_normal((10, 60))  # two square blocks + partial
    h = DirectHyperparams(
        l1_weight=0.2, penalty_weight=1.0, frobenius_weight=0.1, logdet_weight=0.1
    )
    A = update_transform(targets, SparseCodes(codes), h)
    assert A.rows.shape == (10, 4)
    np.testing.assert_allclose(np.linalg.norm(A.rows, axis=1), np.ones(10), atol=1e-12)


def test_update_transform_overcomplete_reseeds_zero_and_duplicate_rows():
    rng = np.random.default_rng(80)
    targets = rng.standard_normal((2, 30))
    codes = rng.standard_normal((4, 30))
    codes[1] = codes[0]  # identical code rows give identical ridge rows
    codes[3] = 0.0  # an all-zero code row gives an all-zero ridge row
    h = DirectHyperparams(l1_weight=0.2, penalty_weight=1.0, frobenius_weight=0.1)
    A = update_transform(targets, SparseCodes(codes), h)
    np.testing.assert_allclose(np.linalg.norm(A.rows, axis=1), np.ones(4), atol=1e-12)
    assert abs(A.rows[0] @ A.rows[1]) <= 0.99


def test_update_transform_undercomplete_is_plain_ridge():
    rng = np.random.default_rng(81)
    targets = rng.standard_normal((6, 40))
    codes = rng.standard_normal((3, 40))
    h = DirectHyperparams(l1_weight=0.1, penalty_weight=1.0, frobenius_weight=0.5)
    A = update_transform(targets, SparseCodes(codes), h)
    m = targets @ targets.T + 0.5 * np.eye(6)
    want = np.linalg.solve(m, targets @ codes.T).T
    np.testing.assert_allclose(A.rows, want, atol=1e-10)


def test_update_transform_singular_factor():
    codes = np.ones((3, 5))
    h = DirectHyperparams(l1_weight=0.1)
    with pytest.raises(SingularFactor):
        update_transform(np.zeros((3, 5)), SparseCodes(codes), h)


def test_condition_number():
    assert Transform(np.diag([3.0, 1.0])).condition_number == pytest.approx(3.0)
    assert Transform(np.zeros((2, 2))).condition_number == float("inf")


def test_train_direct_alternation_descends_each_subproblem():
    """Both half-steps are exact minimizers in the square case, so each
    trace transition must not increase the quantity that step optimizes."""
    rng = np.random.default_rng(82)
    volumes = rng.standard_normal((12, 300))
    h = DirectHyperparams(
        l1_weight=0.2, penalty_weight=0.3, frobenius_weight=0.05, logdet_weight=0.05,
        num_iterations=8,
    )
    A, codes, trace = train_direct(volumes, num_rows=12, h=h, seed=4)
    assert np.isfinite(A.condition_number)
    assert len(trace) == 1 + 2 * 8
    for prev, cur in zip(trace, trace[1:]):
        if cur.phase == "basis":
            assert cur.basis_objective <= prev.basis_objective + 1e-9
        else:
            assert cur.coding_objective <= prev.coding_objective + 1e-9


def test_train_direct_objective_strictly_decreases_early():
    rng = np.random.default_rng(83)
    volumes = rng.standard_normal((10, 200))
    h = DirectHyperparams(l1_weight=0.3, num_iterations=5)
    _, _, trace = train_direct(volumes, num_rows=10, h=h, seed=1)
    ends = [e.coding_objective for e in trace if e.phase == "code"]
    for a, b in zip(ends, ends[1:]):
        assert b < a


def test_train_direct_zero_iterations_is_init_plus_one_coding_pass():
    rng = np.random.default_rng(84)
    volumes = rng.standard_normal((6, 40))
    h = DirectHyperparams(l1_weight=0.2, num_iterations=0)
    A, codes, trace = train_direct(volumes, num_rows=9, h=h, seed=2)
    assert len(trace) == 1
    assert trace[0].phase == "code"
    np.testing.assert_allclose(np.linalg.norm(A.rows, axis=1), np.ones(9), atol=1e-12)
    np.testing.assert_array_equal(
        codes.codes, soft_threshold(A.rows @ volumes, 0.2)
    )


def test_train_direct_is_deterministic_for_a_seed():
    rng = np.random.default_rng(85)
    volumes = rng.standard_normal((8, 100))
    h = DirectHyperparams(l1_weight=0.25, num_iterations=3, penalty_weight=0.1,
                          frobenius_weight=0.2, logdet_weight=0.1)
    a1, c1, t1 = train_direct(volumes, num_rows=16, h=h, seed=6)
    a2, c2, t2 = train_direct(volumes, num_rows=16, h=h, seed=6)
    np.testing.assert_array_equal(a1.rows, a2.rows)
    np.testing.assert_array_equal(c1.codes, c2.codes)
    assert t1 == t2


def test_train_direct_input_validation():
    h = DirectHyperparams(l1_weight=0.2)
    with pytest.raises(EmptyInput):
        train_direct(np.zeros((4, 0)), num_rows=4, h=h, seed=0)
    with pytest.raises(DimensionMismatch):
        train_direct(np.zeros((4, 5)), num_rows=0, h=h, seed=0)


def test_hyperparams_products_and_validation():
    h = DirectHyperparams(
        l1_weight=0.5, penalty_weight=2.0, frobenius_weight=0.25, logdet_weight=0.125
    )
    assert h.frob_combined == 0.5
    assert h.logdet_combined == 0.25
    with pytest.raises(DimensionMismatch):
        DirectHyperparams(l1_weight=0.0)
    with pytest.raises(DimensionMismatch):
        DirectHyperparams(l1_weight=0.1, logdet_weight=-0.5)


def test_consistency_check_identity_basis():
    assert code_consistency_check(Dictionary(np.eye(6)), 0.3) < 1e-8


def test_consistency_check_rotation_basis():
    theta = math.radians(30.0)
    rot = np.array(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    )
    assert code_consistency_check(Dictionary(rot), 0.2) < 1e-8


def test_consistency_check_random_orthonormal_basis():
    rng = np.random.default_rng(86)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    assert code_consistency_check(Dictionary(q), 0.4, num_vectors=50, seed=1) < 1e-8


def test_consistency_check_rejects_bad_bases():
    with pytest.raises(DimensionMismatch):
        code_consistency_check(Dictionary(np.ones((3, 2))), 0.1)
    with pytest.raises(NotNormalized):
        code_consistency_check(Dictionary(np.ones((2, 2))), 0.1)
