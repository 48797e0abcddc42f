import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import min_inf_norm_d1
from shuffle_agg.vecspace import (
    KashinConvergenceError,
    KashinFrame,
    Rotation,
    kashin_batch,
    kashin_forward,
    kashin_inverse,
    make_frame,
    min_sq_dist,
    random_rotation,
    random_unit_vectors,
    unit_vector,
)


def test_unit_vector_rejects_long_vectors():
    assert unit_vector([0.6, 0.8]).shape == (2,)
    with pytest.raises(ValueError):
        unit_vector([1.0, 0.1])
    with pytest.raises(ValueError):
        unit_vector([])


def test_frame_d1_entries_are_plus_minus_inv_sqrt2():
    f = make_frame(1, 4.0, seed=7)
    assert f.matrix.shape == (2, 1)
    np.testing.assert_allclose(np.abs(f.matrix), 1 / math.sqrt(2), atol=1e-15)
    assert abs((f.matrix.T @ f.matrix).item() - 1.0) <= 1e-15


@pytest.mark.parametrize("d", [1, 3, 4, 16, 33])
def test_frame_is_tight(d):
    f = make_frame(d, 4.0, seed=1)
    assert f.matrix.shape == (2 * d, d)
    assert np.max(np.abs(f.matrix.T @ f.matrix - np.eye(d))) <= 1e-9


def test_frame_is_deterministic_and_serializable():
    a, b = make_frame(6, 4.0, 3), make_frame(6, 4.0, 3)
    assert np.array_equal(a.matrix, b.matrix)
    back = KashinFrame.from_json(a.to_json())
    assert back == a and np.array_equal(back.matrix, a.matrix)
    assert json.loads(a.to_json()) == {"d": 6, "level": 4.0, "seed": 3}


def test_frame_rejects_bad_arguments():
    with pytest.raises(ValueError):
        make_frame(0)
    with pytest.raises(ValueError):
        make_frame(2, level=0.0)


def test_kashin_zero_maps_to_zero():
    f = make_frame(5)
    assert np.array_equal(kashin_forward(f, np.zeros(5)), np.zeros(10))


def test_kashin_d1_matches_hand_solution():
    f = make_frame(1, 4.0, seed=7)
    a = kashin_forward(f, np.array([1.0]))
    np.testing.assert_allclose(a, min_inf_norm_d1(f.matrix), atol=1e-12)


@pytest.mark.parametrize("d", [4, 16, 64])
def test_kashin_level_over_random_vectors(d):
    f = make_frame(d, 4.0, seed=0)
    V = random_unit_vectors(np.random.default_rng(d), 1000, d)
    A = kashin_forward(f, V)
    assert np.all(np.max(np.abs(A), axis=1) <= 4.0 / math.sqrt(d))
    assert np.max(np.linalg.norm(kashin_inverse(f, A) - V, axis=1)) <= 1e-6


def test_kashin_level_d16_bound_is_one():
    f = make_frame(16)
    V = random_unit_vectors(np.random.default_rng(5), 1000, 16)
    assert np.max(np.abs(kashin_forward(f, V))) <= 1.0


def test_kashin_nonconvergence_is_reported():
    # a level below what the frame can reach cannot be met by clipping
    base = make_frame(4)
    f = KashinFrame(d=4, level=0.3, seed=0, matrix=base.matrix)
    with pytest.raises(KashinConvergenceError):
        kashin_forward(f, random_unit_vectors(np.random.default_rng(0), 3, 4), max_iter=1)


def test_kashin_dimension_mismatch():
    f = make_frame(3)
    with pytest.raises(ValueError):
        kashin_forward(f, np.zeros(4))
    with pytest.raises(ValueError):
        kashin_inverse(f, np.zeros(5))


def test_kashin_batch_matches_rowwise():
    f = make_frame(4)
    rng = np.random.default_rng(2)
    rows = random_unit_vectors(rng, 3, 4)
    V = rows[rng.integers(0, 3, size=(5, 7))]
    np.testing.assert_allclose(kashin_batch(f, V), kashin_forward(f, V), atol=1e-12)
    same = np.broadcast_to(rows[:2], (6, 2, 4))
    np.testing.assert_allclose(kashin_batch(f, same), kashin_forward(f, np.array(same)), atol=1e-12)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_kashin_roundtrip_property(d, seed):
    f = make_frame(d, 4.0, seed=seed % 5)
    v = random_unit_vectors(np.random.default_rng(seed), 1, d)[0] * np.random.default_rng(seed).uniform()
    a = kashin_forward(f, v)
    assert np.linalg.norm(kashin_inverse(f, a) - v) <= 1e-6
    assert np.max(np.abs(a)) <= f.bound * (1 + 1e-12)


@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.lists(st.floats(-5, 5), min_size=8, max_size=8))
def test_kashin_inverse_is_linear(a, b):
    f = make_frame(4)
    a, b = np.array(a), np.array(b)
    np.testing.assert_allclose(kashin_inverse(f, a + b), kashin_inverse(f, a) + kashin_inverse(f, b), atol=1e-12)


@given(st.integers(1, 10), st.integers(0, 2**31))
def test_rotation_isometry_and_inverse(d, seed):
    rot = random_rotation(d, seed)
    v = np.random.default_rng(seed).standard_normal(d)
    assert np.max(np.abs(rot.matrix.T @ rot.matrix - np.eye(d))) <= 1e-9
    assert abs(np.linalg.norm(rot.apply(v)) - np.linalg.norm(v)) <= 1e-9
    np.testing.assert_allclose(rot.apply_transpose(rot.apply(v)), v, atol=1e-9)


def test_rotation_determinism_and_json():
    a = random_rotation(4, 11)
    assert np.array_equal(a.matrix, random_rotation(4, 11).matrix)
    assert np.array_equal(Rotation.from_json(a.to_json()).matrix, a.matrix)


def test_rotation_is_haar_symmetric():
    # mean of U e1 over 10^5 independent rotations, d=4
    from shuffle_agg.vecspace import haar_orthogonal
    U = haar_orthogonal(np.random.default_rng(0), 4, 100_000)
    assert np.linalg.norm(U[:, :, 0].mean(axis=0)) <= 0.02


def test_min_sq_dist_examples():
    assert min_sq_dist([1, 0], [[1, 0], [0, 1]]) == 0
    assert min_sq_dist([1, 0], [[0, 1]]) == 2
    assert min_sq_dist([0.5, 0], [[1, 0], [-1, 0]]) == 0.25
    with pytest.raises(ValueError):
        min_sq_dist([1, 0], np.empty((0, 2)))
