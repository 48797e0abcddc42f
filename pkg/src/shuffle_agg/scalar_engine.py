"""One-dimensional shuffle summation: fixed-point encoding, split-and-mix shares
over Z_q and distributed discrete-Laplace noise.

Each user encodes ``x in [0, 1]`` as ``round(x * 2**p)``, adds its share of the
noise, and splits the result into ``g`` additive shares modulo ``q``.  Each
user's noise share is the difference of two Polya(1/n, t) draws with
``t = exp(-eps0)``, so the n shares add up to a discrete Laplace variable with
parameter ``t``.  The noise lattice is the integers in real units; one noise
step therefore equals ``2**p`` encoded units.

The modulus is a power of two so that unsigned 64-bit wraparound agrees with
reduction mod ``q``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_PRECISION = 24
DEFAULT_SHARES = 3
_MAX_MODULUS_BITS = 62


class WraparoundError(ArithmeticError):
    """The decoded total left the window the modulus can represent unambiguously."""


def noise_parameter(eps0: float) -> float:
    return 0.0 if math.isinf(eps0) else math.exp(-eps0)


def discrete_laplace_variance(t: float) -> float:
    return 2.0 * t / (1.0 - t) ** 2


@dataclass(frozen=True)
class ScalarEngineParams:
    eps0: float
    delta0: float
    n: int
    precision_bits: int = DEFAULT_PRECISION
    modulus: int | None = None
    shares: int = DEFAULT_SHARES
    noise: bool = True

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.shares < 2:
            raise ValueError("shares_per_user g must be >= 2")
        if not 0 <= self.precision_bits <= 40:
            raise ValueError("precision_bits must lie in [0, 40]")
        if self.modulus is None:
            object.__setattr__(self, "modulus", default_modulus(self))
        q = self.modulus
        if q <= 0 or q & (q - 1):
            raise ValueError(f"modulus {q} is not a power of two")
        if q.bit_length() - 1 > _MAX_MODULUS_BITS:
            raise ValueError(f"modulus 2^{q.bit_length() - 1} exceeds 2^{_MAX_MODULUS_BITS}")
        needed = self.n * self.scale + 6.0 * self.share_noise_std * math.sqrt(self.n)
        if not q > needed:
            raise ValueError(f"modulus {q} too small: need > {needed:.6g} to avoid wraparound")

    @property
    def scale(self) -> int:
        return 1 << self.precision_bits

    @property
    def t(self) -> float:
        return noise_parameter(self.eps0) if self.noise else 0.0

    @property
    def total_noise_variance(self) -> float:
        """Variance of the summed noise across all n users, in real units."""
        return discrete_laplace_variance(self.t)

    @property
    def share_noise_std(self) -> float:
        """Standard deviation of one user's noise share, in encoded units."""
        return math.sqrt(self.total_noise_variance / self.n) * self.scale


def default_modulus(params: ScalarEngineParams) -> int:
    """Smallest power of two above ``16 n 2^p`` whose decode window leaves 32 noise sigmas.

    Decoding accepts totals in ``[-q/4, n 2^p + q/4]``; discrete-Laplace tails fall
    like ``exp(-sqrt(2) k)`` at k sigmas, so 32 sigmas never trip in practice.
    """
    scale = 1 << params.precision_bits
    t = noise_parameter(params.eps0) if params.noise else 0.0
    total_std = math.sqrt(discrete_laplace_variance(t)) * scale
    floor = max(16 * params.n * scale, 4 * (params.n * scale + 32 * total_std))
    return 1 << (int(math.floor(floor)).bit_length())


def make_engine_params(eps0: float, delta0: float, n: int, **kwargs) -> ScalarEngineParams:
    return ScalarEngineParams(eps0=eps0, delta0=delta0, n=n, **kwargs)


@dataclass(frozen=True)
class ScalarMessage:
    residue: int

    def check(self, modulus: int) -> None:
        if not 0 <= self.residue < modulus:
            raise ValueError(f"residue {self.residue} outside [0, {modulus})")

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.residue)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ScalarMessage":
        (residue,) = struct.unpack("<Q", data)
        return cls(residue)


def encode_fixed(x, p: int):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("fixed-point input must lie in [0, 1]")
    out = np.rint(arr * float(1 << p)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def decode_fixed(k, p: int):
    out = np.asarray(k, dtype=float) / float(1 << p)
    return float(out) if out.ndim == 0 else out


def sample_noise_share(params: ScalarEngineParams, rng: np.random.Generator, size=None):
    """One user's integer noise share; the n-user total is discrete Laplace(t)."""
    t = params.t
    if t == 0.0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    r = 1.0 / params.n
    x1 = rng.negative_binomial(r, 1.0 - t, size)
    x2 = rng.negative_binomial(r, 1.0 - t, size)
    if size is None:
        return int(x1) - int(x2)
    return x1.astype(np.int64) - x2.astype(np.int64)


def _masked_total(x, params, rng):
    enc = np.asarray(encode_fixed(x, params.precision_bits), dtype=np.int64)
    noise = np.asarray(sample_noise_share(params, rng, enc.shape), dtype=np.int64)
    total = enc + noise * params.scale
    return total, total.astype(np.uint64) & np.uint64(params.modulus - 1)


def randomize_scalar(x, params: ScalarEngineParams, rng: np.random.Generator) -> np.ndarray:
    """Split ``encode(x) + noise`` into g residues; returns shape ``x.shape + (g,)``.

    The first g-1 residues are uniform on [0, q) and the last one closes the sum,
    so every single residue is marginally uniform.
    """
    _, total = _masked_total(x, params, rng)
    mask = np.uint64(params.modulus - 1)
    g = params.shares
    shares = rng.integers(0, params.modulus, size=total.shape + (g,), dtype=np.uint64)
    partial = np.sum(shares[..., : g - 1], axis=-1, dtype=np.uint64)
    # uint64 arithmetic wraps mod 2^64, and q divides 2^64
    with np.errstate(over="ignore"):
        shares[..., g - 1] = (np.asarray(total, dtype=np.uint64) - partial) & mask
    return shares


def user_value(x, params: ScalarEngineParams, rng: np.random.Generator):
    """The real value a user's share bundle sums to: quantized x plus its noise share.

    Draws the same randomness as the noise path of :func:`randomize_scalar`
    (the shares themselves are omitted since they cancel).
    """
    total, _ = _masked_total(x, params, rng)
    return total / float(params.scale)


def decode_total(total, params: ScalarEngineParams, n: int):
    """Centered decode of a residue total (mod q) into real units."""
    q = params.modulus
    t = np.asarray(total, dtype=np.uint64) & np.uint64(q - 1)
    signed = t.astype(np.int64)
    signed = np.where(signed >= q // 2, signed - q, signed)
    low, high = -(q // 4), n * params.scale + q // 4
    if np.any(signed < low) or np.any(signed > high):
        raise WraparoundError(
            f"decoded total outside [{low}, {high}]; modulus {q} is misconfigured"
        )
    out = signed / float(params.scale)
    return float(out) if out.ndim == 0 else out


def aggregate_scalar(messages, params: ScalarEngineParams, n: int):
    """Sum residues (last axis) modulo q and decode; an unbiased estimate of sum x_i."""
    if isinstance(messages, (list, tuple)) and messages and isinstance(messages[0], ScalarMessage):
        messages = [m.residue for m in messages]
    res = np.asarray(messages, dtype=np.uint64)
    if res.shape[-1] != n * params.shares:
        raise ValueError(f"expected {n * params.shares} messages, got {res.shape[-1]}")
    total = np.sum(res, axis=-1, dtype=np.uint64)
    return decode_total(total, params, n)
