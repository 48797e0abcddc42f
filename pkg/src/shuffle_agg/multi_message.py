"""Multi-message protocol: Kashin coefficients, one scalar-engine instance per
coefficient with a split privacy budget, and summation with the inverse frame.

Two equivalent wire views are provided.  :func:`multi_message_protocol` sends
tagged residues (the deployed form).  :func:`multi_vector_protocol` sends, per
coefficient j, the vector ``(C_K/sqrt d) y_j U[j, :]`` where ``y_j`` is the
un-shifted value the user's share bundle for j adds up to; its messages sum to the
same estimate and live in R^d, which is what rotation and poisoning need.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .protocol import Messages, ProtocolPair, check_dimension
from .scalar_engine import (
    DEFAULT_PRECISION,
    DEFAULT_SHARES,
    ScalarEngineParams,
    ScalarMessage,
    decode_total,
    randomize_scalar,
    user_value,
)
from .vecspace import DEFAULT_LEVEL, KashinFrame, kashin_batch, kashin_inverse, make_frame


def split_budget(eps: float, delta: float, d: int) -> tuple[float, float]:
    """Per-coefficient budget: eps0 = eps / (2 sqrt(2 d ln(2/delta))), delta0 = delta / (2d)."""
    if not eps > 0 or not 0 < delta < 1 or d < 1:
        raise ValueError("need eps > 0, 0 < delta < 1, d >= 1")
    return eps / (2 * math.sqrt(2 * d * math.log(2 / delta))), delta / (2 * d)


@dataclass(frozen=True)
class MultiMsgParams:
    eps: float
    delta: float
    eps0: float
    delta0: float
    frame: KashinFrame
    engine: ScalarEngineParams

    def __post_init__(self):
        eps0, delta0 = split_budget(self.eps, self.delta, self.frame.d)
        if not (math.isclose(self.eps0, eps0) and math.isclose(self.delta0, delta0)):
            raise ValueError("eps0/delta0 do not match the budget split")
        if not (self.engine.eps0 == self.eps0 and self.engine.delta0 == self.delta0):
            raise ValueError("engine budget differs from the split budget")

    @property
    def d(self) -> int:
        return self.frame.d

    @property
    def n(self) -> int:
        return self.engine.n

    @property
    def coords(self) -> int:
        return 2 * self.frame.d

    @property
    def k(self) -> int:
        return self.coords * self.engine.shares

    @property
    def scale(self) -> float:
        """C_K / sqrt(d): converts unit coefficients back to frame coefficients."""
        return self.frame.bound


def make_multi_params(
    eps: float,
    delta: float,
    n: int,
    d: int,
    *,
    level: float = DEFAULT_LEVEL,
    frame_seed: int = 0,
    precision_bits: int = DEFAULT_PRECISION,
    shares: int = DEFAULT_SHARES,
    modulus: int | None = None,
    noise: bool = True,
    frame: KashinFrame | None = None,
) -> MultiMsgParams:
    eps0, delta0 = split_budget(eps, delta, d)
    if frame is None:
        frame = make_frame(d, level, frame_seed)
    elif frame.d != d:
        raise ValueError("frame dimension differs from d")
    engine = ScalarEngineParams(
        eps0=eps0, delta0=delta0, n=n, precision_bits=precision_bits,
        modulus=modulus, shares=shares, noise=noise,
    )
    return MultiMsgParams(eps=eps, delta=delta, eps0=eps0, delta0=delta0, frame=frame, engine=engine)


@dataclass(frozen=True)
class TaggedMessage:
    """A residue labelled with its Kashin coefficient ``coord`` in 1..2d."""

    coord: int
    payload: ScalarMessage

    def to_bytes(self) -> bytes:
        return struct.pack("<I", self.coord) + self.payload.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TaggedMessage":
        (coord,) = struct.unpack("<I", data[:4])
        return cls(coord, ScalarMessage.from_bytes(data[4:12]))


class LevelViolation(RuntimeError):
    """A scaled Kashin coefficient left [-1, 1]."""


def unit_coefficients(V, params: MultiMsgParams) -> np.ndarray:
    """u = (sqrt d / C_K) kashin_forward(v), each entry in [-1, 1]."""
    V = check_dimension(V, params.d)
    u = kashin_batch(params.frame, V) / params.scale
    if np.any(np.abs(u) > 1.0 + 1e-9):
        raise LevelViolation("Kashin coefficient exceeds the frame level")
    return np.clip(u, -1.0, 1.0)


def encode_multi(V, params: MultiMsgParams, rng: np.random.Generator) -> Messages:
    """Residues ``(..., 2d g, 1)`` and 0-based coefficient tags ``(..., 2d g)``."""
    u = unit_coefficients(V, params)
    residues = randomize_scalar((u + 1.0) / 2.0, params.engine, rng)
    g = params.engine.shares
    payload = residues.reshape(u.shape[:-1] + (params.coords * g, 1))
    tags = np.broadcast_to(
        np.repeat(np.arange(params.coords, dtype=np.int16), g), payload.shape[:-1]
    )
    return Messages(payload, tags)


def randomize_multi(v, params: MultiMsgParams, rng: np.random.Generator) -> list[TaggedMessage]:
    msgs = encode_multi(np.asarray(v, float), params, rng)
    return [
        TaggedMessage(int(t) + 1, ScalarMessage(int(p)))
        for t, p in zip(msgs.tags, msgs.payload[:, 0])
    ]


def coefficient_sums(messages: Messages, params: MultiMsgParams, n: int) -> np.ndarray:
    """Decoded per-coefficient totals ``(..., 2d)`` from a tagged transcript ``(..., N)``."""
    tags = np.asarray(messages.tags)
    per = n * params.engine.shares
    expected = params.coords * per
    if tags.shape[-1] != expected:
        raise ValueError(f"expected {expected} messages, got {tags.shape[-1]}")
    # int16 keys make the stable sort a radix sort
    order = np.argsort(tags, axis=-1, kind="stable")
    sorted_tags = np.take_along_axis(tags, order, axis=-1)
    pattern = np.repeat(np.arange(params.coords, dtype=tags.dtype), per)
    if not np.array_equal(sorted_tags, np.broadcast_to(pattern, sorted_tags.shape)):
        counts = np.bincount(tags.reshape(-1).astype(np.int64), minlength=params.coords)
        raise ValueError(f"coordinate groups must hold {per} messages each; got counts {counts}")
    residues = np.take_along_axis(messages.payload[..., 0].astype(np.uint64), order, axis=-1)
    grouped = residues.reshape(residues.shape[:-1] + (params.coords, per))
    totals = np.sum(grouped, axis=-1, dtype=np.uint64)
    return np.asarray(decode_total(totals, params.engine, n))


def aggregate_multi(messages, params: MultiMsgParams, n: int) -> np.ndarray:
    if isinstance(messages, Messages):
        batch = messages
    else:
        batch = Messages(
            np.array([[m.payload.residue] for m in messages], dtype=np.uint64).reshape(-1, 1),
            np.array([m.coord - 1 for m in messages], dtype=np.int16),
        )
        if np.any(batch.tags < 0) or np.any(batch.tags >= params.coords):
            raise ValueError("coordinate tag outside 1..2d")
    sums = coefficient_sums(batch, params, n)
    u_hat = 2.0 * sums - n
    return params.scale * kashin_inverse(params.frame, u_hat)


def multi_message_protocol(params: MultiMsgParams) -> ProtocolPair:
    def randomize(V, rng, shared):
        return encode_multi(V, params, rng)

    def aggregate(messages, shared, n):
        return aggregate_multi(messages, params, n)

    return ProtocolPair(
        d=params.d, k=params.k, width=1, randomize=randomize, aggregate=aggregate,
        label="multi", n_tags=params.coords,
    )


def vector_messages(V, params: MultiMsgParams, rng: np.random.Generator) -> Messages:
    """Vector view: ``(..., 2d, d)`` messages whose plain sum is the protocol's estimate."""
    u = unit_coefficients(V, params)
    y = 2.0 * user_value((u + 1.0) / 2.0, params.engine, rng) - 1.0
    payload = params.scale * y[..., :, None] * params.frame.matrix
    tags = np.broadcast_to(np.arange(params.coords, dtype=np.int16), payload.shape[:-1])
    return Messages(payload, tags)


def multi_vector_protocol(params: MultiMsgParams) -> ProtocolPair:
    def randomize(V, rng, shared):
        return vector_messages(V, params, rng)

    def aggregate(messages, shared, n):
        return messages.payload.sum(axis=-2)

    return ProtocolPair(
        d=params.d, k=params.coords, width=params.d, randomize=randomize, aggregate=aggregate,
        label="multi-vector", vector_messages=True, n_tags=params.coords,
    )
