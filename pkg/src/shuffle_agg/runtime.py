"""Shuffle execution: shufflers, rate limiting, protocol runs and Monte-Carlo error estimates."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .protocol import Messages, ProtocolPair, SharedRandomness
from .vecspace import random_unit_vectors

FAMILIES = ("basis", "same-random", "iid-uniform")
MIN_TRIALS = 30
# floats per simulation chunk; bounds peak memory, never depends on thread count
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class Transcript:
    """Post-shuffle messages of one run; the order carries no user attribution."""

    messages: Messages
    n: int
    counts: tuple

    def __len__(self) -> int:
        return len(self.messages)


def as_messages(bundle) -> Messages:
    if isinstance(bundle, Messages):
        return bundle
    arr = np.asarray(bundle)
    if arr.ndim == 1:
        arr = arr[:, None]
    return Messages(arr)


def shuffle(bundles: Sequence, rng: np.random.Generator, *, return_provenance: bool = False):
    """Uniformly permute the concatenation of per-user bundles.

    With ``return_provenance`` the owner of each shuffled message is returned as a
    separate array; it is a test decoration and is not part of the transcript.
    """
    bundles = [as_messages(b) for b in bundles]
    counts = tuple(len(b) for b in bundles)
    if not bundles:
        raise ValueError("no bundles to shuffle")
    payload = np.concatenate([b.payload for b in bundles], axis=0)
    has_tags = [b.tags is not None for b in bundles]
    if any(has_tags) and not all(has_tags):
        raise ValueError("either every bundle carries tags or none does")
    tags = np.concatenate([b.tags for b in bundles]) if all(has_tags) else None
    owner = np.repeat(np.arange(len(bundles)), counts)
    perm = rng.permutation(payload.shape[0])
    transcript = Transcript(
        Messages(payload[perm], None if tags is None else tags[perm]), len(bundles), counts
    )
    if return_provenance:
        return transcript, owner[perm]
    return transcript


@dataclass(frozen=True)
class ShufflerTopology:
    """``single``: one shuffler, at most ``rate_limit`` messages per user.

    ``per-coordinate``: one shuffler per coordinate group, at most ``rate_limit``
    messages per user and group.  ``groups`` lists the tags of each group and
    defaults to one group per tag.
    """

    mode: str = "single"
    rate_limit: Optional[int] = None
    groups: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("single", "per-coordinate"):
            raise ValueError(f"unknown topology mode {self.mode!r}")
        if self.rate_limit is not None and self.rate_limit < 1:
            raise ValueError("rate_limit must be >= 1")

    def group_of(self, n_tags: int) -> np.ndarray:
        """Lookup table tag -> shuffler index; checks that groups partition the tags."""
        if self.groups is None:
            return np.arange(n_tags)
        table = np.full(n_tags, -1)
        for s, group in enumerate(self.groups):
            for tag in group:
                if not 0 <= tag < n_tags or table[tag] != -1:
                    raise ValueError("coordinate groups must partition the tags")
                table[tag] = s
        if np.any(table < 0):
            raise ValueError("coordinate groups must partition the tags")
        return table


@dataclass
class RateLimitReport:
    dropped: dict = field(default_factory=dict)

    @property
    def total_dropped(self) -> int:
        return int(sum(self.dropped.values()))

    def to_json(self) -> str:
        return json.dumps(
            {"dropped": {str(k): v for k, v in sorted(self.dropped.items())},
             "total_dropped": self.total_dropped},
            sort_keys=True,
        )


@dataclass(frozen=True)
class RunResult:
    output: np.ndarray
    report: RateLimitReport


def _limit(bundle: Messages, keys: np.ndarray, limit: int) -> tuple[Messages, int]:
    """Keep the first ``limit`` messages per key value, in submission order."""
    keep = np.zeros(len(bundle), dtype=bool)
    for key in np.unique(keys):
        where = np.flatnonzero(keys == key)
        keep[where[:limit]] = True
    tags = None if bundle.tags is None else bundle.tags[keep]
    return Messages(bundle.payload[keep], tags), int((~keep).sum())


def run_protocol(
    inputs,
    protocol: ProtocolPair,
    topology: ShufflerTopology = ShufflerTopology(),
    rng: np.random.Generator | None = None,
    *,
    replace: dict | None = None,
    shared=None,
) -> RunResult:
    """One end-to-end run: randomize, rate-limit, shuffle per topology, aggregate.

    ``replace`` maps user indices to bundles submitted instead of the honest ones
    (malicious users); honest users' randomness is unaffected by it.
    """
    rng = np.random.default_rng() if rng is None else rng
    V = np.asarray(inputs, dtype=float)
    if V.ndim != 2 or V.shape[1] != protocol.d:
        raise ValueError(f"inputs must have shape (n, {protocol.d})")
    n = V.shape[0]
    if shared is None:
        shared = protocol.shared(rng, 1)
    honest = protocol.randomize(V[None], rng, shared)
    bundles = []
    for i in range(n):
        if replace and i in replace:
            bundles.append(as_messages(replace[i]))
        else:
            bundles.append(Messages(honest.payload[0, i], None if honest.tags is None else honest.tags[0, i]))

    report = RateLimitReport()
    limit = topology.rate_limit
    if topology.mode == "single":
        if limit is not None:
            for i, b in enumerate(bundles):
                bundles[i], dropped = _limit(b, np.zeros(len(b), dtype=int), limit)
                if dropped:
                    report.dropped[i] = dropped
        transcript = shuffle(bundles, rng).messages
    else:
        if any(b.tags is None for b in bundles):
            raise ValueError("per-coordinate topology needs tagged messages")
        table = topology.group_of(protocol.n_tags)
        for i, b in enumerate(bundles):
            if np.any(b.tags < 0) or np.any(b.tags >= protocol.n_tags):
                raise ValueError("message tag outside the protocol's coordinate range")
            if limit is not None:
                bundles[i], dropped = _limit(b, table[b.tags.astype(int)], limit)
                if dropped:
                    report.dropped[i] = dropped
        parts = []
        for s in range(int(table.max()) + 1):
            routed = []
            for b in bundles:
                mask = table[b.tags.astype(int)] == s
                routed.append(Messages(b.payload[mask], b.tags[mask]))
            parts.append(shuffle(routed, rng).messages)
        transcript = Messages(
            np.concatenate([p.payload for p in parts]), np.concatenate([p.tags for p in parts])
        )
    out = protocol.aggregator(transcript, n, shared)
    return RunResult(out, report)


def root_seed(seed) -> np.random.SeedSequence:
    """Normalize an int, a sequence of ints, a SeedSequence or a Generator into a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    if isinstance(seed, (list, tuple)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


def child_seed(root: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + key)


def chunk_size(protocol: ProtocolPair, n: int, trials: int) -> int:
    per_trial = max(1, n * protocol.k * max(protocol.width, protocol.d))
    return max(1, min(trials, _CHUNK_BUDGET // per_trial))


def _simulate_chunk(protocol, V, trials, root, index, permute):
    rng = np.random.default_rng(child_seed(root, index))
    shared = protocol.shared(rng, trials)
    batch = np.broadcast_to(V, (trials,) + V.shape[-2:]) if V.ndim == 2 else V
    msgs = protocol.randomize(batch, rng, shared).flatten_users()
    if permute:
        perm = rng.permuted(np.broadcast_to(np.arange(len(msgs)), (trials, len(msgs))), axis=1)
        msgs = msgs.take(perm, axis=1)
    return protocol.aggregate(msgs, shared, V.shape[-2])


def simulate(
    protocol: ProtocolPair,
    inputs,
    trials: int,
    seed=0,
    *,
    threads: int = 1,
    permute: bool | None = None,
) -> np.ndarray:
    """Independent shuffled runs on a fixed dataset ``(n, d)``; returns outputs ``(trials, d)``.

    Trials are split into fixed-size chunks, each with its own seed derived from
    ``(seed, chunk index)``, so results do not depend on ``threads``.  A symmetric
    aggregator returns the same value for every message order, so the permutation
    step is skipped for those unless ``permute=True``.
    """
    if permute is None:
        permute = not protocol.symmetric
    V = np.asarray(inputs, dtype=float)
    if V.ndim != 2 or V.shape[1] != protocol.d:
        raise ValueError(f"inputs must have shape (n, {protocol.d})")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = root_seed(seed)
    size = chunk_size(protocol, V.shape[0], trials)
    jobs = [(min(size, trials - start), i) for i, start in enumerate(range(0, trials, size))]
    if threads <= 1 or len(jobs) == 1:
        parts = [_simulate_chunk(protocol, V, t, base, i, permute) for t, i in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: _simulate_chunk(protocol, V, job[0], base, job[1], permute), jobs))
    return np.concatenate(parts, axis=0)


def make_inputs(family: str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """One dataset of ``n`` unit vectors from a named family."""
    if family == "basis":
        V = np.zeros((n, d))
        V[:, 0] = 1.0
        return V
    if family == "same-random":
        return np.repeat(random_unit_vectors(rng, 1, d), n, axis=0)
    if family == "iid-uniform":
        return random_unit_vectors(rng, n, d)
    raise ValueError(f"unknown input family {family!r}; expected one of {FAMILIES} or 'sup'")


@dataclass(frozen=True)
class ErrEstimate:
    mse_mean: float
    mse_ci95: float
    trials: int
    input_family: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def err_from_outputs(outputs, truth, family: str) -> ErrEstimate:
    sq = np.sum((np.asarray(outputs) - np.asarray(truth)) ** 2, axis=-1)
    t = sq.shape[0]
    ci = 1.96 * float(np.std(sq, ddof=1)) / math.sqrt(t) if t > 1 else math.inf
    return ErrEstimate(float(np.mean(sq)), ci, t, family)


def estimate_err(
    protocol: ProtocolPair,
    input_family: str,
    n: int,
    d: int,
    trials: int,
    seed=0,
    *,
    threads: int = 1,
) -> ErrEstimate:
    """Monte-Carlo Err(A, R) on one input family, or the max over all of them for ``'sup'``."""
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS} for a normal-approximation CI")
    if d != protocol.d:
        raise ValueError("d differs from the protocol dimension")
    if input_family != "sup" and input_family not in FAMILIES:
        raise ValueError(f"unknown input family {input_family!r}")
    root = root_seed(seed)
    families = FAMILIES if input_family == "sup" else (input_family,)
    best = None
    for family in families:
        # streams are keyed by family so 'sup' and single-family runs agree
        fi = FAMILIES.index(family)
        V = make_inputs(family, n, d, np.random.default_rng(child_seed(root, 0, fi)))
        out = simulate(protocol, V, trials, child_seed(root, 1, fi), threads=threads)
        est = err_from_outputs(out, V.sum(axis=0), family)
        if best is None or est.mse_mean > best.mse_mean:
            best = est
    if input_family == "sup":
        best = ErrEstimate(best.mse_mean, best.mse_ci95, best.trials, f"sup:{best.input_family}")
    return best
