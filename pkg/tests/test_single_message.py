import math

import numpy as np
import pytest
from conftest import mean_within_3sigma
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import gamma_direct, scan_best_r, single_exact_mse
from shuffle_agg.runtime import simulate
from shuffle_agg.single_message import (
    BucketMessage,
    InfeasibleParams,
    SingleMsgParams,
    aggregate_single,
    debias,
    gamma_for,
    r_max,
    randomize_buckets,
    randomize_single,
    select_params,
    single_message_protocol,
)


def test_gamma_for_fixed_r():
    g = gamma_for(4, 1.0, 1e-6, 10_000, 1)
    assert g == pytest.approx(0.10157, abs=1e-5)
    assert g == pytest.approx(gamma_direct(1.0, 1e-6, 10_000, 5), rel=1e-9)
    p = select_params(1.0, 1e-6, 10_000, 1, r=4)
    assert p.r == 4 and p.gamma == pytest.approx(g)
    assert p.gamma == pytest.approx(p.c * (p.r + 1) / p.n)


def test_select_params_matches_scan_at_one_million():
    p = select_params(1.0, 1e-6, 10**6, 1)
    assert abs(p.r - 17) <= 2
    assert abs(p.r - scan_best_r(1.0, 1e-6, 10**6, 1)) <= 2


def test_select_params_infeasible():
    with pytest.raises(InfeasibleParams):
        select_params(1.0, 1e-6, 10, 3)


def test_select_params_rejects_bad_ranges():
    for args in [(0.0, 1e-6, 100, 1), (1.5, 1e-6, 100, 1), (1.0, 0.0, 100, 1), (1.0, 1e-6, 1, 1)]:
        with pytest.raises(ValueError):
            select_params(*args)


def test_r_max():
    assert r_max(1000, 1) == 1000
    assert r_max(10**6, 1) == 1000
    assert r_max(100, 2) == 10
    assert r_max(101, 2) == 11
    assert r_max(5, 10) == 2
    assert r_max(1, 3) == 1


def test_params_invariants():
    with pytest.raises(ValueError):
        SingleMsgParams(r=4, c=1.0, gamma=0.3, n=100, d=1, eps=1.0, delta=1e-6)
    with pytest.raises(ValueError):
        SingleMsgParams.from_gamma(0, 0.1, 100, 1)
    with pytest.raises(ValueError):
        SingleMsgParams.from_gamma(70_000, 0.1, 100, 1)


def test_rounding_lattice_points_are_deterministic():
    p = SingleMsgParams.from_gamma(4, 0.0, 10, 1)
    rng = np.random.default_rng(0)
    assert randomize_single([0.0], p, rng).buckets == (2,)
    assert randomize_single([1.0], p, rng).buckets == (4,)
    assert randomize_single([-1.0], p, rng).buckets == (0,)
    w = randomize_buckets(np.zeros((1000, 1)), p, rng)
    assert np.all(w == 2)


def test_rounding_is_unbiased_between_lattice_points():
    p = SingleMsgParams.from_gamma(4, 0.0, 10, 1)
    # x' = 0.6 so r x' = 2.4
    w = randomize_buckets(np.full((100_000, 1), 0.2), p, np.random.default_rng(1))
    assert set(np.unique(w)) == {2, 3}
    assert w.mean() == pytest.approx(2.4, abs=3 * math.sqrt(0.24 / 100_000))


def test_full_blanket_is_uniform():
    p = SingleMsgParams.from_gamma(4, 1.0, 10, 2)
    w = randomize_buckets(np.tile([1.0, 0.0], (50_000, 1)), p, np.random.default_rng(2))
    cells = np.bincount(w[:, 0].astype(int) * 5 + w[:, 1], minlength=25)
    assert stats.chisquare(cells).pvalue > 0.001


@given(
    st.integers(1, 50), st.floats(0, 1), st.integers(1, 5), st.integers(0, 2**31),
)
def test_buckets_stay_in_range(r, gamma, d, seed):
    rng = np.random.default_rng(seed)
    p = SingleMsgParams.from_gamma(r, gamma, 100, d)
    V = rng.normal(size=(20, d))
    V /= np.maximum(1.0, np.linalg.norm(V, axis=1, keepdims=True))
    w = randomize_buckets(V, p, rng)
    assert w.dtype == np.uint16 and w.min() >= 0 and w.max() <= r
    BucketMessage(tuple(int(b) for b in w[0])).check(r)


def test_debias_examples():
    p0 = SingleMsgParams.from_gamma(4, 0.0, 1, 1)
    assert debias([2], p0, 1)[0] == 0.0
    half = SingleMsgParams.from_gamma(4, 0.5, 1, 1)
    # z = 3/4, c (r+1) = 0.5, so (0.75 - 0.25) / 0.5 = 1 in the shifted domain
    assert debias([3], half, 1)[0] == pytest.approx(2 * 1.0 - 1)
    with pytest.raises(InfeasibleParams):
        debias([3], SingleMsgParams.from_gamma(4, 1.0, 1, 1), 1)


def test_aggregate_single_on_message_objects():
    p = SingleMsgParams.from_gamma(4, 0.0, 3, 2)
    msgs = [BucketMessage((2, 4)), BucketMessage((4, 0)), BucketMessage((0, 2))]
    assert aggregate_single(msgs, p) == pytest.approx([0.0, 0.0])
    with pytest.raises(ValueError):
        aggregate_single(msgs[:2], p)


def test_unbiased_on_basis_inputs():
    p = SingleMsgParams.from_gamma(4, 0.5, 100, 2)
    V = np.zeros((100, 2))
    V[:, 0] = 1.0
    out = simulate(single_message_protocol(p), V, 10_000, seed=3)
    assert mean_within_3sigma(out, [100.0, 0.0])


@pytest.mark.parametrize("n,d,eps", [(2000, 1, 1.0), (5000, 1, 0.5), (20000, 2, 1.0)])
def test_mse_matches_exact_variance_and_bound(n, d, eps):
    p = select_params(eps, 1e-6, n, d)
    rng = np.random.default_rng(4)
    V = rng.normal(size=(n, d))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    out = simulate(single_message_protocol(p), V, 2000, seed=5)
    mse = float(np.mean(np.sum((out - V.sum(axis=0)) ** 2, axis=1)))
    exact = single_exact_mse(p.r, p.gamma, n, d, V)
    assert mse == pytest.approx(exact, rel=0.15)
    assert mse <= 1.25 * 4 * p.mse_bound()


def test_bucket_wire_form():
    m = BucketMessage((0, 7, 65535))
    data = m.to_bytes()
    assert data == b"\x00\x00\x07\x00\xff\xff"
    assert BucketMessage.from_bytes(data) == m
    with pytest.raises(ValueError):
        BucketMessage((5,)).check(4)


def test_protocol_metadata_and_count_check():
    p = SingleMsgParams.from_gamma(4, 0.2, 10, 3)
    proto = single_message_protocol(p)
    assert (proto.k, proto.d) == (1, 3)
    msgs = proto.randomizer(np.zeros(3), np.random.default_rng(0))
    assert msgs.payload.shape == (1, 3)
    with pytest.raises(ValueError):
        proto.aggregator(msgs, 9)
    with pytest.raises(ValueError):
        proto.aggregator(msgs, 10)
