import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from shuffle_agg.baselines import additive_shares_protocol, closed_form_err, identity_protocol
from shuffle_agg.multi_message import make_multi_params, multi_message_protocol, multi_vector_protocol
from shuffle_agg.protocol import Messages
from shuffle_agg.runtime import (
    FAMILIES,
    ShufflerTopology,
    estimate_err,
    make_inputs,
    run_protocol,
    shuffle,
    simulate,
)
from shuffle_agg.single_message import select_params, single_message_protocol
from shuffle_agg.vecspace import random_unit_vectors


@given(st.lists(st.lists(st.integers(0, 9), min_size=0, max_size=4), min_size=1, max_size=6), st.integers(0, 2**31))
def test_shuffle_preserves_multiset(bundles, seed):
    bundles = [np.array(b, dtype=float) for b in bundles]
    t = shuffle(bundles, np.random.default_rng(seed))
    flat = np.concatenate(bundles) if any(len(b) for b in bundles) else np.zeros(0)
    assert sorted(t.messages.payload[:, 0].tolist()) == sorted(flat.tolist())
    assert t.n == len(bundles) and t.counts == tuple(len(b) for b in bundles)


def test_shuffle_is_deterministic_per_seed():
    bundles = [np.arange(5.0), np.arange(5.0, 9.0)]
    a = shuffle(bundles, np.random.default_rng(3)).messages.payload
    b = shuffle(bundles, np.random.default_rng(3)).messages.payload
    assert np.array_equal(a, b)


def test_shuffle_orders_are_uniform():
    rng = np.random.default_rng(0)
    bundles = [np.array([0.0]), np.array([1.0]), np.array([2.0])]
    counts = Counter(tuple(shuffle(bundles, rng).messages.payload[:, 0]) for _ in range(100_000))
    assert len(counts) == 6
    freq = np.array(list(counts.values()))
    sigma = math.sqrt(100_000 * (1 / 6) * (5 / 6))
    assert np.all(np.abs(freq - 100_000 / 6) <= 3 * sigma)
    assert stats.chisquare(freq).pvalue > 0.001


def test_shuffle_provenance_is_separate():
    bundles = [np.array([10.0, 11.0]), np.array([20.0])]
    t, owner = shuffle(bundles, np.random.default_rng(1), return_provenance=True)
    for value, who in zip(t.messages.payload[:, 0], owner):
        assert int(value) // 10 == who + 1
    with pytest.raises(ValueError):
        shuffle([Messages(np.zeros((1, 1)), np.zeros(1)), Messages(np.zeros((1, 1)))], np.random.default_rng(0))


def test_run_identity_is_exact():
    V = random_unit_vectors(np.random.default_rng(0), 7, 3)
    result = run_protocol(V, identity_protocol(3), ShufflerTopology(), np.random.default_rng(1))
    assert np.allclose(result.output, V.sum(axis=0), atol=1e-12)
    assert result.report.total_dropped == 0


def test_topologies_agree_on_honest_users():
    n, d, runs = 20, 2, 300
    proto = multi_message_protocol(make_multi_params(1.0, 1e-5, n, d))
    V = random_unit_vectors(np.random.default_rng(2), n, d)
    outs = {}
    for mode in ("single", "per-coordinate"):
        rng = np.random.default_rng(3 if mode == "single" else 4)
        outs[mode] = np.array([run_protocol(V, proto, ShufflerTopology(mode), rng).output for _ in range(runs)])
    a, b = outs["single"], outs["per-coordinate"]
    se = np.sqrt(a.var(axis=0) / runs + b.var(axis=0) / runs)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 3 * se)
    ea, eb = np.sum((a - V.sum(0)) ** 2, axis=1), np.sum((b - V.sum(0)) ** 2, axis=1)
    assert abs(ea.mean() - eb.mean()) <= 3 * math.sqrt(ea.var() / runs + eb.var() / runs)


def test_per_coordinate_is_same_output_for_noiseless_engine():
    n, d = 5, 3
    proto = multi_message_protocol(make_multi_params(1.0, 1e-5, n, d, noise=False))
    V = random_unit_vectors(np.random.default_rng(5), n, d)
    topo = ShufflerTopology("per-coordinate", groups=((0, 1), (2, 3, 4), (5,)))
    out = run_protocol(V, proto, topo, np.random.default_rng(6)).output
    assert np.allclose(out, V.sum(axis=0), atol=1e-5)


def test_rate_limit_drops_excess_per_coordinate():
    n, d = 4, 2
    proto = multi_vector_protocol(make_multi_params(1.0, 1e-5, n, d))
    V = random_unit_vectors(np.random.default_rng(7), n, d)
    extra = Messages(np.ones((2, d)), np.array([0, 0], dtype=np.int16))
    honest = Messages(np.zeros((2 * d, d)), np.arange(2 * d, dtype=np.int16))
    bundle = Messages(np.concatenate([honest.payload, extra.payload]), np.concatenate([honest.tags, extra.tags]))
    topo = ShufflerTopology("per-coordinate", rate_limit=1)
    result = run_protocol(V, proto, topo, np.random.default_rng(8), replace={0: bundle})
    assert result.report.dropped == {0: 2}
    assert json.loads(result.report.to_json()) == {"dropped": {"0": 2}, "total_dropped": 2}


def test_rate_limit_single_shuffler():
    n, d = 3, 2
    proto = additive_shares_protocol(d, 2)
    V = random_unit_vectors(np.random.default_rng(9), n, d)
    flood = np.ones((5, d))
    result = run_protocol(V, proto, ShufflerTopology("single", rate_limit=2), np.random.default_rng(0),
                          replace={1: flood})
    assert result.report.dropped == {1: 3}


def test_topology_validation():
    with pytest.raises(ValueError):
        ShufflerTopology("ring")
    with pytest.raises(ValueError):
        ShufflerTopology(rate_limit=0)
    with pytest.raises(ValueError):
        ShufflerTopology("per-coordinate", groups=((0, 1), (1,))).group_of(2)
    with pytest.raises(ValueError):
        ShufflerTopology("per-coordinate", groups=((0,),)).group_of(2)
    with pytest.raises(ValueError):
        run_protocol(np.zeros((2, 2)), identity_protocol(2), ShufflerTopology("per-coordinate"))


def test_make_inputs_families():
    rng = np.random.default_rng(0)
    for family in FAMILIES:
        V = make_inputs(family, 6, 3, rng)
        assert V.shape == (6, 3)
        assert np.allclose(np.linalg.norm(V, axis=1), 1.0)
    same = make_inputs("same-random", 4, 3, rng)
    assert np.all(same == same[0])
    with pytest.raises(ValueError):
        make_inputs("gaussian", 3, 2, rng)


def test_estimate_err_noiseless_is_zero():
    est = estimate_err(identity_protocol(3), "sup", 10, 3, 30)
    assert est.mse_mean <= 1e-25 and est.mse_ci95 <= 1e-25
    assert est.input_family.startswith("sup:")


@pytest.mark.parametrize("family", FAMILIES)
def test_estimate_err_matches_closed_form(family):
    n, k, d, sigma = 10, 3, 4, 0.2
    est = estimate_err(additive_shares_protocol(d, k, sigma=sigma), family, n, d, 4000, seed=1)
    assert abs(est.mse_mean - closed_form_err(n, k, sigma, d)) <= 1.5 * est.mse_ci95
    assert closed_form_err(n, k, sigma, d) == pytest.approx(n * k * sigma**2 * d)
    record = json.loads(est.to_json())
    assert set(record) == {"mse_mean", "mse_ci95", "trials", "input_family"}


def test_estimate_err_single_message_smoke():
    proto = single_message_protocol(select_params(1.0, 1e-5, 2000, 1))
    a = estimate_err(proto, "sup", 2000, 1, 50, seed=2)
    b = estimate_err(proto, "sup", 2000, 1, 50, seed=2)
    assert 0 < a.mse_mean < math.inf and a == b


def test_estimate_err_argument_checks():
    with pytest.raises(ValueError):
        estimate_err(identity_protocol(2), "basis", 5, 2, 29)
    with pytest.raises(ValueError):
        estimate_err(identity_protocol(2), "basis", 5, 3, 30)
    with pytest.raises(ValueError):
        estimate_err(identity_protocol(2), "nope", 5, 2, 30)


def test_simulate_is_thread_independent():
    proto = multi_message_protocol(make_multi_params(1.0, 1e-5, 200, 8))
    V = random_unit_vectors(np.random.default_rng(0), 200, 8)
    a = simulate(proto, V, 400, seed=5, threads=1)
    b = simulate(proto, V, 400, seed=5, threads=4)
    assert np.array_equal(a, b)


def test_simulate_permutation_does_not_change_symmetric_output():
    proto = multi_message_protocol(make_multi_params(1.0, 1e-5, 10, 2, noise=False))
    V = random_unit_vectors(np.random.default_rng(0), 10, 2)
    assert np.allclose(simulate(proto, V, 5, 1, permute=True), simulate(proto, V, 5, 1, permute=False))
