"""Reference protocols with vector messages and a summation aggregator.

They serve as bases for the combinators and as targets for the attacks.
"""

from __future__ import annotations

import numpy as np

from .protocol import Messages, ProtocolPair, check_dimension, summation


def identity_protocol(d: int) -> ProtocolPair:
    """Each user sends its own vector; the sum is exact."""

    def randomize(V, rng, shared):
        V = check_dimension(V, d)
        return Messages(V[..., None, :].copy())

    return ProtocolPair(d=d, k=1, width=d, randomize=randomize, aggregate=summation,
                        label="identity", vector_messages=True)


def additive_shares_protocol(d: int, k: int = 2, *, spread: float = 1.0, sigma=0.0) -> ProtocolPair:
    """Split v into k additive shares plus independent Gaussian noise per message.

    The first k-1 shares are N(0, spread^2 I) and the last closes the sum.  ``sigma``
    is a scalar or a length-d vector of per-coordinate noise scales, which gives an
    axis-aligned (asymmetric) protocol.  Err = n k sum(sigma^2).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scales = np.broadcast_to(np.asarray(sigma, dtype=float), (d,)).copy()
    if np.any(scales < 0):
        raise ValueError("sigma must be non-negative")

    def randomize(V, rng, shared):
        V = check_dimension(V, d)
        shares = np.empty(V.shape[:-1] + (k, d))
        if k > 1:
            shares[..., :-1, :] = spread * rng.standard_normal(V.shape[:-1] + (k - 1, d))
        shares[..., -1, :] = V - shares[..., :-1, :].sum(axis=-2)
        if np.any(scales > 0):
            shares += scales * rng.standard_normal(shares.shape)
        return Messages(shares)

    return ProtocolPair(d=d, k=k, width=d, randomize=randomize, aggregate=summation,
                        label=f"shares(k={k})", vector_messages=True)


def gaussian_protocol(d: int, sigma, k: int = 1) -> ProtocolPair:
    """Noisy additive shares with the default share spread; convenience alias."""
    return additive_shares_protocol(d, k, sigma=sigma)


def closed_form_err(n: int, k: int, sigma, d: int) -> float:
    """Err of :func:`additive_shares_protocol`: n k sum_j sigma_j^2."""
    scales = np.broadcast_to(np.asarray(sigma, dtype=float), (d,))
    return float(n * k * np.sum(scales**2))
