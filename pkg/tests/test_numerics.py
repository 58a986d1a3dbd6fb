import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmodal.errors import DegenerateVectorError, InsufficientDataError, ShapeError
from xmodal.numerics import (
    cosine_matrix,
    l2_normalize,
    l2_normalize_rows,
    log_softmax_row,
    log_softmax_rows,
    pca_project_2d,
)

from oracles import cosine_matrix_oracle

finite_floats = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


def test_l2_normalize_3_4():
    np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-15)


def test_l2_normalize_already_unit():
    np.testing.assert_array_equal(l2_normalize([1.0, 0.0]), [1.0, 0.0])


def test_l2_normalize_zero_vector_raises():
    with pytest.raises(DegenerateVectorError):
        l2_normalize([0.0, 0.0])


@given(st.lists(finite_floats, min_size=1, max_size=16))
def test_l2_normalize_idempotent(values):
    arr = np.array(values)
    if math.sqrt(float(np.dot(arr, arr))) < 1e-6:
        return
    once = l2_normalize(arr)
    np.testing.assert_allclose(l2_normalize(once), once, atol=1e-15)


def test_cosine_matrix_basis():
    out = cosine_matrix([[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(out, [[1.0, 0.0]])


def test_cosine_matrix_identity_rows():
    eye = np.eye(2)
    np.testing.assert_array_equal(cosine_matrix(eye, eye), eye)


def test_cosine_matrix_matches_double_loop():
    rng = np.random.default_rng(3)
    a = l2_normalize_rows(rng.normal(size=(4, 8)))
    b = l2_normalize_rows(rng.normal(size=(3, 8)))
    np.testing.assert_allclose(cosine_matrix(a, b), cosine_matrix_oracle(a, b), atol=1e-12)


def test_cosine_matrix_shape_mismatch():
    with pytest.raises(ShapeError):
        cosine_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_cosine_matrix_self_unit_diagonal_and_symmetry():
    rng = np.random.default_rng(11)
    a = l2_normalize_rows(rng.normal(size=(6, 5)))
    sim = cosine_matrix(a, a)
    np.testing.assert_allclose(np.diag(sim), 1.0, atol=1e-12)
    np.testing.assert_allclose(sim, sim.T, atol=1e-15)
    assert np.all(sim <= 1 + 1e-9) and np.all(sim >= -1 - 1e-9)


def test_log_softmax_symmetric_row():
    np.testing.assert_allclose(log_softmax_row([[0.0, 0.0]], 0), [-math.log(2)] * 2, atol=1e-15)


def test_log_softmax_huge_entries_stay_finite():
    out = log_softmax_row([[1000.0, 0.0]], 0)
    assert np.all(np.isfinite(out))
    assert abs(out[0]) < 1e-9


def test_log_softmax_hand_values():
    out = log_softmax_row([[1.0, 0.0]], 0)
    np.testing.assert_allclose(out, [-0.3132616875182228, -1.3132616875182228], atol=1e-12)


def test_log_softmax_bad_row_index():
    with pytest.raises(ShapeError):
        log_softmax_row([[1.0, 0.0]], 5)


@settings(max_examples=60)
@given(
    st.lists(
        st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=2, max_size=6),
        min_size=1,
        max_size=5,
    ).filter(lambda rows: len({len(r) for r in rows}) == 1)
)
def test_log_softmax_rows_exponentials_sum_to_one(rows):
    out = log_softmax_rows(np.array(rows))
    np.testing.assert_allclose(np.exp(out).sum(axis=1), 1.0, atol=1e-12)


def test_pca_rank1_second_column_vanishes():
    rng = np.random.default_rng(5)
    direction = rng.normal(size=5)
    points = np.outer(np.linspace(-2, 2, 9), direction)
    projected = pca_project_2d(points)
    assert np.max(np.abs(projected[:, 1])) < 1e-9


def test_pca_orthogonal_clusters_stay_separated():
    rng = np.random.default_rng(7)
    a = rng.normal(scale=0.05, size=(20, 6))
    a[:, 0] += 5.0
    b = rng.normal(scale=0.05, size=(20, 6))
    b[:, 1] += 5.0
    projected = pca_project_2d(np.vstack([a, b]))
    centroid_gap = np.linalg.norm(projected[:20].mean(axis=0) - projected[20:].mean(axis=0))
    assert centroid_gap > 1.0


def test_pca_zero_variance_projects_to_zero():
    points = np.ones((4, 3))
    projected = pca_project_2d(points)
    np.testing.assert_array_equal(projected, np.zeros((4, 2)))


def test_pca_sign_convention_deterministic():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(12, 4))
    np.testing.assert_array_equal(pca_project_2d(x), pca_project_2d(x.copy()))


def test_pca_single_row_raises():
    with pytest.raises(InsufficientDataError):
        pca_project_2d(np.ones((1, 3)))
