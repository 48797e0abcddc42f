"""Single-message protocol: per-coordinate randomized rounding into r+1 buckets with a
uniform blanket, and the debiasing analyzer.

Inputs live in the unit ball, so each coordinate is first shifted to [0, 1] by
``x -> (x + 1) / 2``; the analyzer undoes the shift.  The shift multiplies the
error by exactly 4.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .accounting import log_amplification_gamma_bound
from .protocol import Messages, ProtocolPair, check_dimension

R_SCAN_MAX = 1000
R_WIRE_MAX = 65535


class InfeasibleParams(ValueError):
    """No granularity r gives a blanket probability below 1."""


@dataclass(frozen=True)
class SingleMsgParams:
    r: int
    c: float
    gamma: float
    n: int
    d: int
    eps: float
    delta: float

    def __post_init__(self):
        if not 1 <= self.r <= R_WIRE_MAX:
            raise ValueError(f"r must lie in [1, {R_WIRE_MAX}]")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not math.isclose(self.gamma, self.c * (self.r + 1) / self.n, rel_tol=1e-9, abs_tol=1e-15):
            raise ValueError("gamma must equal c (r + 1) / n")

    @classmethod
    def from_gamma(cls, r: int, gamma: float, n: int, d: int, eps: float = math.inf, delta: float = 1.0):
        """Build params from the blanket probability directly (c is derived)."""
        return cls(r=r, c=gamma * n / (r + 1), gamma=gamma, n=n, d=d, eps=eps, delta=delta)

    @property
    def log_buckets(self) -> float:
        return self.d * math.log(self.r + 1)

    def mse_bound(self) -> float:
        return mse_bound(self.r, self.gamma, self.n, self.d)


def mse_bound(r: int, gamma: float, n: int, d: int) -> float:
    """Analytic objective n d ((1-gamma)/(4 r^2) + gamma/2) / (1-gamma)^2 in the shifted domain."""
    if gamma >= 1.0:
        return math.inf
    return n * d * ((1 - gamma) / (4 * r * r) + gamma / 2) / (1 - gamma) ** 2


def gamma_for(r: int, eps: float, delta: float, n: int, d: int) -> float:
    return log_amplification_gamma_bound(eps, delta, n, d * math.log(r + 1))


def r_max(n: int, d: int) -> int:
    # ceil(n^(1/d)) with a guard against float round-up at exact powers
    root = n ** (1.0 / d)
    top = math.ceil(root)
    if (top - 1) ** d >= n:
        top -= 1
    return max(1, min(R_SCAN_MAX, top))


def select_params(eps: float, delta: float, n: int, d: int, r: int | None = None) -> SingleMsgParams:
    """Choose the granularity r minimizing the analytic error bound.

    Each r gets the smallest blanket probability that the amplification bound allows;
    ties favour the smaller r.  Passing ``r`` skips the scan.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    candidates = [r] if r is not None else range(1, r_max(n, d) + 1)
    best = None
    for rr in candidates:
        g = gamma_for(rr, eps, delta, n, d)
        if g >= 1.0:
            continue
        value = mse_bound(rr, g, n, d)
        if best is None or value < best[0]:
            best = (value, rr, g)
    if best is None:
        g1 = gamma_for(candidates[0], eps, delta, n, d)
        raise InfeasibleParams(
            f"blanket probability gamma >= 1 for every r (gamma={g1:.4g} at r={candidates[0]}); "
            f"n={n} is too small for eps={eps}, delta={delta}, d={d}"
        )
    _, rr, g = best
    return SingleMsgParams(r=rr, c=g * n / (rr + 1), gamma=g, n=n, d=d, eps=eps, delta=delta)


@dataclass(frozen=True)
class BucketMessage:
    buckets: tuple

    def check(self, r: int) -> None:
        if any(not 0 <= b <= r for b in self.buckets):
            raise ValueError(f"bucket outside [0, {r}]")

    def to_bytes(self) -> bytes:
        return struct.pack(f"<{len(self.buckets)}H", *self.buckets)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BucketMessage":
        return cls(struct.unpack(f"<{len(data) // 2}H", data))


def randomize_buckets(V, params: SingleMsgParams, rng: np.random.Generator) -> np.ndarray:
    """Bucket vectors for a batch of inputs ``(..., d)``; returns uint16 of the same shape."""
    V = check_dimension(V, params.d)
    r = params.r
    scaled = r * np.clip((V + 1.0) / 2.0, 0.0, 1.0)
    low = np.floor(scaled)
    # lattice points have zero fractional part, so the comparison never fires
    w = low + (rng.random(V.shape) < scaled - low)
    if params.gamma > 0:
        blanket = rng.random(V.shape[:-1]) < params.gamma
        uniform = rng.integers(0, r + 1, size=V.shape)
        w = np.where(blanket[..., None], uniform, w)
    return w.astype(np.uint16)


def randomize_single(v, params: SingleMsgParams, rng: np.random.Generator) -> BucketMessage:
    return BucketMessage(tuple(int(b) for b in randomize_buckets(np.asarray(v, float), params, rng)))


def debias(bucket_sums, params: SingleMsgParams, n: int) -> np.ndarray:
    """Map per-coordinate bucket sums to the sum estimate in the unit-ball domain."""
    if params.gamma >= 1.0:
        raise InfeasibleParams("gamma = 1 leaves nothing to debias")
    z = np.asarray(bucket_sums, dtype=float) / params.r
    shifted = (z - params.c * (params.r + 1) / 2.0) / (1.0 - params.gamma)
    return 2.0 * shifted - n


def aggregate_single(messages, params: SingleMsgParams) -> np.ndarray:
    if len(messages) != params.n:
        raise ValueError(f"expected {params.n} messages, got {len(messages)}")
    W = np.array([m.buckets if isinstance(m, BucketMessage) else m for m in messages], dtype=np.int64)
    return debias(W.sum(axis=0), params, params.n)


def single_message_protocol(params: SingleMsgParams) -> ProtocolPair:
    d = params.d

    def randomize(V, rng, shared):
        w = randomize_buckets(V, params, rng)
        return Messages(w[..., None, :])

    def aggregate(messages, shared, n):
        if n != params.n:
            raise ValueError(f"params were selected for n={params.n}, got n={n}")
        if messages.payload.shape[-2] != n:
            raise ValueError(f"expected {n} messages, got {messages.payload.shape[-2]}")
        return debias(messages.payload.sum(axis=-2, dtype=np.int64), params, n)

    return ProtocolPair(
        d=d, k=1, width=d, randomize=randomize, aggregate=aggregate,
        label=f"single(r={params.r})",
    )
