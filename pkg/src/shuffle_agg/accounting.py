"""Privacy accounting: advanced composition and the shuffling-amplification blanket bound."""

from __future__ import annotations

import math


def advanced_composition(eps: float, delta: float, k: int, delta_prime: float) -> tuple[float, float]:
    """Compose ``k`` (eps, delta)-DP mechanisms; returns ``(eps_tilde, delta_tilde)``.

    eps_tilde = eps sqrt(2k ln(1/delta')) + k eps (e^eps - 1)/(e^eps + 1),
    delta_tilde = k delta + delta'.
    """
    if eps < 0 or delta < 0 or k < 0:
        raise ValueError("eps, delta and k must be non-negative")
    if not 0 < delta_prime < 1:
        raise ValueError("delta_prime must lie in (0, 1)")
    if k == 0:
        return 0.0, float(delta_prime)
    eps_tilde = eps * math.sqrt(2 * k * math.log(1 / delta_prime)) + k * eps * math.tanh(eps / 2)
    return eps_tilde, k * delta + delta_prime


def log_amplification_gamma_bound(eps: float, delta: float, n: int, log_k: float) -> float:
    """``amplification_gamma_bound`` taking ``ln k`` so that huge bucket counts do not overflow."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not eps > 0 or not 0 < delta < 1:
        raise ValueError("need eps > 0 and 0 < delta < 1")
    # compare in log space; any term above 1 clamps
    log_a = log_k + math.log(14 * math.log(2 / delta)) - math.log((n - 1) * eps * eps)
    log_b = log_k + math.log(27.0) - math.log((n - 1) * eps)
    top = max(log_a, log_b)
    return 1.0 if top >= 0 else math.exp(top)


def amplification_gamma_bound(eps: float, delta: float, n: int, k_buckets: float) -> float:
    """Smallest blanket probability gamma for which randomized response over ``k_buckets``
    values, shuffled among ``n`` users, is (eps, delta)-DP; clamped to 1.

    min(1, max(14 k ln(2/delta) / ((n-1) eps^2), 27 k / ((n-1) eps)))
    """
    if not k_buckets > 0:
        raise ValueError("k_buckets must be positive")
    return log_amplification_gamma_bound(eps, delta, n, math.log(k_buckets))
