"""The (aggregator, randomizer) pair abstraction shared by every protocol.

Everything is batched over a leading trial axis ``T``.  A randomizer maps inputs of
shape ``(T, n, d)`` to :class:`Messages` whose payload has shape ``(T, n, k, w)``;
the aggregator receives the shuffled, flattened transcript ``(T, N, w)`` and returns
estimates of the sum with shape ``(T, d)``.

Public randomness shared by all parties of one run (a rotation, a coordinate
permutation) is drawn by ``draw_shared`` before any user acts, and is passed to both
sides explicitly.  It never appears in the transcript.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional

import numpy as np


class Messages(NamedTuple):
    """A batch of messages: ``payload`` is ``(..., m, w)``, ``tags`` is ``(..., m)`` or None.

    Tags are 0-based coordinate labels used for routing and grouping; they are part
    of the message, so shuffling permutes them together with the payload.
    """

    payload: np.ndarray
    tags: Optional[np.ndarray] = None

    def flatten_users(self) -> "Messages":
        """Merge the user and per-user message axes: ``(T, n, k, w) -> (T, n k, w)``."""
        p = self.payload
        payload = p.reshape(p.shape[:-3] + (p.shape[-3] * p.shape[-2], p.shape[-1]))
        tags = None
        if self.tags is not None:
            t = self.tags
            tags = t.reshape(t.shape[:-2] + (t.shape[-2] * t.shape[-1],))
        return Messages(payload, tags)

    def take(self, index: np.ndarray, axis: int) -> "Messages":
        """Gather along the message axis with a batched index of shape ``(..., m')``."""
        payload = np.take_along_axis(self.payload, index[..., None], axis=axis)
        tags = None if self.tags is None else np.take_along_axis(self.tags, index, axis=axis)
        return Messages(payload, tags)

    def __len__(self) -> int:
        return self.payload.shape[-2]


Randomize = Callable[[np.ndarray, np.random.Generator, Any], Messages]
Aggregate = Callable[[Messages, Any, int], np.ndarray]


@dataclass(frozen=True)
class SharedRandomness:
    """Public per-run randomness; arrays carry a leading trial axis.

    Only the fields the wrapping combinator needs are set.  ``base`` holds the
    shared randomness of the wrapped protocol, if any.
    """

    rotation: Optional[np.ndarray] = None
    permutation: Optional[np.ndarray] = None
    signs: Optional[np.ndarray] = None
    seed: Optional[int] = None
    base: Any = None

    def trial(self, t: int) -> "SharedRandomness":
        """The slice belonging to trial ``t``, keeping a length-1 trial axis."""
        sl = slice(t, t + 1)
        return SharedRandomness(
            rotation=None if self.rotation is None else self.rotation[sl],
            permutation=None if self.permutation is None else self.permutation[sl],
            signs=None if self.signs is None else self.signs[sl],
            seed=self.seed,
            base=self.base.trial(t) if isinstance(self.base, SharedRandomness) else self.base,
        )


@dataclass(frozen=True)
class ProtocolPair:
    """A shuffle protocol ``(A, R)``.

    ``d`` is the input/output dimension, ``k`` the number of messages per user and
    ``width`` the per-message payload width.  ``vector_messages`` marks protocols
    whose messages are vectors in R^d and whose aggregator is plain summation;
    only those can be rotated or attacked by subset enumeration.  ``symmetric``
    marks aggregators that are functions of the message multiset alone.
    """

    d: int
    k: int
    width: int
    randomize: Randomize = field(repr=False)
    aggregate: Aggregate = field(repr=False)
    label: str = "protocol"
    draw_shared: Optional[Callable[[np.random.Generator, int], Any]] = field(default=None, repr=False)
    vector_messages: bool = False
    unbiased: bool = True
    n_tags: int = 0
    symmetric: bool = True

    def shared(self, rng: np.random.Generator, trials: int) -> Any:
        return None if self.draw_shared is None else self.draw_shared(rng, trials)

    def randomizer(self, v, rng: np.random.Generator, shared: Any = None) -> Messages:
        """Messages of a single user: payload ``(k, w)``, tags ``(k,)``."""
        V = np.asarray(v, dtype=float).reshape(1, 1, self.d)
        if shared is None:
            shared = self.shared(rng, 1)
        out = self.randomize(V, rng, shared)
        return Messages(out.payload[0, 0], None if out.tags is None else out.tags[0, 0])

    def aggregator(self, transcript: Messages, n: int, shared: Any = None) -> np.ndarray:
        """Aggregate one unbatched transcript (payload ``(N, w)``)."""
        batch = Messages(
            transcript.payload[None],
            None if transcript.tags is None else transcript.tags[None],
        )
        return self.aggregate(batch, shared, n)[0]


def summation(messages: Messages, shared: Any, n: int) -> np.ndarray:
    """The plain summation aggregator A+."""
    return messages.payload.sum(axis=-2)


def check_dimension(V: np.ndarray, d: int) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.shape[-1] != d:
        raise ValueError(f"input dimension {V.shape[-1]} != protocol dimension {d}")
    return V
