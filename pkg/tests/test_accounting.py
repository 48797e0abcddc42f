import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import advanced_composition_direct, gamma_direct, split_direct
from shuffle_agg.accounting import advanced_composition, amplification_gamma_bound
from shuffle_agg.multi_message import split_budget


def test_advanced_composition_hand_value():
    eps_t, delta_t = advanced_composition(0.5, 0.0, 1, 1e-9)
    ref, _ = advanced_composition_direct(0.5, 0.0, 1, 1e-9)
    assert eps_t == pytest.approx(ref, rel=1e-6)
    assert eps_t == pytest.approx(3.3414, abs=1e-4)
    assert delta_t == 1e-9


def test_advanced_composition_empty_and_delta():
    assert advanced_composition(0.3, 1e-7, 0, 1e-6) == (0.0, 1e-6)
    _, delta_t = advanced_composition(0.3, 1e-7, 10, 1e-6)
    assert delta_t == pytest.approx(10 * 1e-7 + 1e-6)
    with pytest.raises(ValueError):
        advanced_composition(0.3, 0.0, 1, 0.0)


@given(st.floats(0.01, 2.0), st.integers(1, 500), st.floats(1e-12, 0.5))
def test_advanced_composition_matches_oracle_and_grows_in_k(eps, k, dp):
    a = advanced_composition(eps, 0.0, k, dp)
    assert a[0] == pytest.approx(advanced_composition_direct(eps, 0.0, k, dp)[0], rel=1e-12)
    assert advanced_composition(eps, 0.0, k + 1, dp)[0] > a[0]


def test_gamma_bound_hand_value():
    g = amplification_gamma_bound(1.0, 1e-6, 10_000, 5)
    assert g == pytest.approx(14 * 5 * math.log(2e6) / 9999, rel=1e-6)
    assert g == pytest.approx(0.10157, abs=1e-5)


def test_gamma_bound_clamps_and_errors():
    assert amplification_gamma_bound(1.0, 1e-6, 100, 1e6) == 1.0
    assert amplification_gamma_bound(1.0, 1e-6, 100, 1e300) == 1.0
    with pytest.raises(ValueError):
        amplification_gamma_bound(1.0, 1e-6, 1, 5)


@given(st.floats(0.05, 1.0), st.floats(1e-9, 0.1), st.integers(2, 10**7), st.floats(1, 1e4))
def test_gamma_bound_matches_oracle_and_is_monotone(eps, delta, n, k):
    g = amplification_gamma_bound(eps, delta, n, k)
    assert g == pytest.approx(gamma_direct(eps, delta, n, k), rel=1e-9)
    assert 0 < g <= 1
    assert amplification_gamma_bound(eps, delta, n, 2 * k) >= g


def test_split_budget_examples():
    eps0, delta0 = split_budget(1.0, 1e-6, 2)
    assert eps0 == pytest.approx(0.06563, abs=1e-5)
    assert delta0 == pytest.approx(2.5e-7)
    assert split_budget(0.7, 1e-5, 1)[0] == pytest.approx(0.7 / (2 * math.sqrt(2 * math.log(2e5))))


@pytest.mark.parametrize("eps", [0.01, 0.1, 0.5, 1.0])
@pytest.mark.parametrize("delta", [1e-9, 1e-6, 1e-3, 0.1])
@pytest.mark.parametrize("d", [1, 2, 8, 32, 128])
def test_split_budget_recombines_below_eps(eps, delta, d):
    eps0, delta0 = split_budget(eps, delta, d)
    assert (eps0, delta0) == pytest.approx(split_direct(eps, delta, d))
    eps_t, _ = advanced_composition(eps0, delta0, 2 * d, delta / 2)
    assert eps_t <= eps
