"""Adversaries: subset-enumeration reconstruction, Monte-Carlo reconstruction
against unbiased aggregators, sphere packings, and message poisoning.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .protocol import Messages, ProtocolPair
from .runtime import ShufflerTopology, Transcript, as_messages, make_inputs, run_protocol, shuffle
from .vecspace import random_unit_vectors

ENUMERATION_BUDGET = 10**6


class BudgetExceeded(ValueError):
    """The attack would enumerate more subsets than the budget allows."""


def check_budget(n_messages: int, k: int, budget: int = ENUMERATION_BUDGET) -> int:
    if not 1 <= k <= n_messages:
        raise ValueError(f"subset size k={k} outside [1, {n_messages}]")
    count = math.comb(n_messages, k)
    if count > budget:
        raise BudgetExceeded(f"C({n_messages}, {k}) = {count} exceeds the enumeration budget {budget}")
    return count


@dataclass(frozen=True)
class Packing:
    points: np.ndarray
    rho: float
    d: int
    seed: int

    def __len__(self) -> int:
        return self.points.shape[0]


def _pairwise_ok(points: np.ndarray, candidate: np.ndarray, rho: float) -> bool:
    if points.shape[0] == 0:
        return True
    return bool(np.min(np.linalg.norm(points - candidate, axis=1)) >= rho)


def greedy_packing(d: int, rho: float, seed: int = 0, max_size: int = 10_000, samples: int = 20_000) -> Packing:
    """A rho-separated set of unit vectors, built greedily.

    For d <= 2 the candidates sweep the sphere in a fine deterministic order from a
    seeded starting angle; for d >= 3 they are ``samples`` seeded uniform draws.
    """
    if not 0 < rho < 2:
        raise ValueError("rho must lie in (0, 2)")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    if d == 1:
        candidates = np.array([[1.0], [-1.0]])
    elif d == 2:
        start = rng.uniform(0, 2 * np.pi)
        angles = start + np.linspace(0, 2 * np.pi, 1 << 16, endpoint=False)
        candidates = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        candidates = random_unit_vectors(rng, samples, d)
    chosen = np.empty((0, d))
    for c in candidates:
        if chosen.shape[0] >= max_size:
            break
        if _pairwise_ok(chosen, c, rho):
            chosen = np.vstack([chosen, c])
    return Packing(points=chosen, rho=float(rho), d=d, seed=seed)


def project_index(P: Packing, v) -> int:
    if len(P) == 0:
        raise ValueError("packing is empty")
    dist = np.sum((P.points - np.asarray(v, dtype=float)) ** 2, axis=1)
    return int(np.argmin(dist))  # argmin returns the lowest index on ties


def project_to_packing(P: Packing, v) -> np.ndarray:
    return P.points[project_index(P, v)]


@dataclass(frozen=True)
class CandidateSet:
    vectors: np.ndarray
    subset_size: int
    subsets: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.vectors.shape[0]


def _subsets(n_messages: int, k: int) -> np.ndarray:
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n_messages), k)), dtype=np.int64
    )
    return flat.reshape(-1, k)


def _payload(transcript) -> np.ndarray:
    msgs = transcript.messages if isinstance(transcript, Transcript) else as_messages(transcript)
    return np.asarray(msgs.payload, dtype=float)


def attack_summation(transcript, k: int, *, budget: int = ENUMERATION_BUDGET) -> CandidateSet:
    """All sums of k messages out of the transcript (vector-valued messages)."""
    payload = _payload(transcript)
    check_budget(payload.shape[0], k, budget)
    idx = _subsets(payload.shape[0], k)
    return CandidateSet(vectors=payload[idx].sum(axis=1), subset_size=k, subsets=idx)


def attack_unbiased(
    transcript,
    k: int,
    protocol: ProtocolPair,
    mc_samples: int,
    rng: np.random.Generator,
    *,
    n: Optional[int] = None,
    budget: int = ENUMERATION_BUDGET,
    shared=None,
) -> CandidateSet:
    """Candidates u_t = E[A(W_t + messages of n-1 uniform dummy users)], by Monte-Carlo.

    The same ``mc_samples`` dummy populations are reused for every subset, which
    keeps candidate differences free of dummy noise.
    """
    msgs = transcript.messages if isinstance(transcript, Transcript) else as_messages(transcript)
    n = transcript.n if n is None and isinstance(transcript, Transcript) else n
    if n is None:
        raise ValueError("n is required when the transcript does not record it")
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    check_budget(len(msgs), k, budget)
    idx = _subsets(len(msgs), k)
    if shared is None:
        shared = protocol.shared(rng, 1)
    dummies_in = random_unit_vectors(rng, (mc_samples, n - 1), protocol.d)
    shared_batch = _repeat_shared(shared, mc_samples)
    dummy = protocol.randomize(dummies_in, rng, shared_batch).flatten_users() if n > 1 else None
    out = np.empty((idx.shape[0], protocol.d))
    for t, subset in enumerate(idx):
        chosen = Messages(
            np.broadcast_to(msgs.payload[subset], (mc_samples,) + msgs.payload[subset].shape),
            None if msgs.tags is None else np.broadcast_to(msgs.tags[subset], (mc_samples, k)),
        )
        if dummy is not None:
            payload = np.concatenate([chosen.payload, dummy.payload], axis=1)
            tags = None if msgs.tags is None else np.concatenate([chosen.tags, dummy.tags], axis=1)
            chosen = Messages(payload, tags)
        out[t] = protocol.aggregate(chosen, shared_batch, n).mean(axis=0)
    return CandidateSet(vectors=out, subset_size=k, subsets=idx)


def _repeat_shared(shared, count: int):
    """Repeat the single-run shared randomness across Monte-Carlo samples."""
    if shared is None:
        return None
    updates = {}
    for f in fields(shared):
        value = getattr(shared, f.name)
        if isinstance(value, np.ndarray):
            updates[f.name] = np.repeat(value, count, axis=0)
        elif f.name == "base":
            updates[f.name] = _repeat_shared(value, count)
    return replace(shared, **updates)


@dataclass
class AttackReport:
    trials: int
    success_rate: float
    mean_min_dist: float
    budget_used: int

    def to_dict(self) -> dict:
        return {"trials": self.trials, "success_rate": self.success_rate,
                "mean_min_dist": self.mean_min_dist, "budget_used": self.budget_used}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def reconstruction_experiment(
    protocol: ProtocolPair,
    packing: Packing,
    n: int,
    k: int,
    trials: int,
    rng: np.random.Generator,
    *,
    method: str = "summation",
    mc_samples: int = 100,
    budget: int = ENUMERATION_BUDGET,
) -> AttackReport:
    """Empirical rate at which the projected candidates recover the target user.

    Each trial draws a target v_i and a filler v_1 from the packing, runs the
    protocol on (v_i, v_1, ..., v_1), attacks the transcript, and projects every
    candidate onto the packing.
    """
    if protocol.k != k:
        raise ValueError(f"subset size k={k} differs from the protocol's {protocol.k} messages per user")
    if method not in ("summation", "unbiased"):
        raise ValueError(f"unknown attack method {method!r}")
    if method == "summation" and not protocol.vector_messages:
        raise ValueError("the summation attack needs vector-valued messages")
    per_trial = check_budget(n * k, k, budget)
    hits, dists = 0, []
    for _ in range(trials):
        target, filler = rng.integers(0, len(packing), size=2)
        X = np.repeat(packing.points[[filler]], n, axis=0)
        X[0] = packing.points[target]
        shared = protocol.shared(rng, 1)
        bundles = protocol.randomize(X[None], rng, shared)
        users = [Messages(bundles.payload[0, i], None if bundles.tags is None else bundles.tags[0, i])
                 for i in range(n)]
        transcript = shuffle(users, rng)
        if method == "summation":
            S = attack_summation(transcript, k, budget=budget)
        else:
            S = attack_unbiased(transcript, k, protocol, mc_samples, rng, budget=budget, shared=shared)
        projected = {project_index(packing, s) for s in S.vectors}
        hits += int(target in projected)
        dists.append(float(np.min(np.sum((S.vectors - X[0]) ** 2, axis=1))))
    return AttackReport(trials, hits / trials, float(np.mean(dists)), per_trial * trials)


@dataclass(frozen=True)
class PoisonBundle:
    messages: Messages
    norm: float
    threshold: float
    below_threshold: bool
    probes: int


def poison_messages(
    protocol: ProtocolPair,
    d: int,
    alpha: float,
    probe_budget: int,
    rng: np.random.Generator,
    *,
    shared=None,
) -> PoisonBundle:
    """Probe the honest randomizer for a large message and replicate it d times.

    Probes alternate between inputs e_1 and -e_1.  The probing stops early once a
    message of norm at least 1/(sqrt(d) alpha) is seen; the largest message found
    is returned, flagged when it stays below that threshold.
    """
    if not protocol.vector_messages:
        raise ValueError("poisoning needs vector-valued messages")
    if probe_budget < 1:
        raise ValueError("probe_budget must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    threshold = 1.0 / (math.sqrt(d) * alpha)
    best_norm, best, best_tag, used = -1.0, None, None, 0
    e1 = np.zeros(protocol.d)
    e1[0] = 1.0
    batch = 256
    if shared is None:
        shared = protocol.shared(rng, 1)
    shared_batch = _repeat_shared(shared, batch)
    while used < probe_budget:
        size = min(batch, probe_budget - used)
        signs = np.where((used + np.arange(size)) % 2 == 0, 1.0, -1.0)
        probes = (signs[:, None] * e1)[:, None, :]
        sb = shared_batch if size == batch else _repeat_shared(shared, size)
        out = protocol.randomize(probes, rng, sb)
        payload = out.payload.reshape(-1, out.payload.shape[-1])
        norms = np.linalg.norm(payload, axis=1)
        j = int(np.argmax(norms))
        if norms[j] > best_norm:
            best_norm, best = float(norms[j]), payload[j].copy()
            best_tag = None if out.tags is None else out.tags.reshape(-1)[j]
        used += size
        if best_norm >= threshold:
            break
    payload = np.repeat(best[None], d, axis=0)
    tags = None if best_tag is None else np.full(d, best_tag, dtype=np.asarray(best_tag).dtype)
    return PoisonBundle(Messages(payload, tags), best_norm, threshold, best_norm < threshold, used)


@dataclass
class PoisoningReport:
    trials: int
    honest_mse: dict
    poisoned_mse: dict
    gap: dict
    ratio: float
    message_norm: float
    below_threshold: bool
    dropped: dict

    def to_dict(self) -> dict:
        return {
            "trials": self.trials, "honest_mse": self.honest_mse, "poisoned_mse": self.poisoned_mse,
            "gap": self.gap, "ratio": self.ratio, "message_norm": self.message_norm,
            "below_threshold": self.below_threshold, "dropped": self.dropped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def poisoning_experiment(
    protocol: ProtocolPair,
    n: int,
    trials: int,
    rng: np.random.Generator,
    *,
    alpha: float = 1e-3,
    probe_budget: int = 4096,
    family: str = "basis",
) -> PoisoningReport:
    """Paired honest/poisoned runs under a single shuffler and under per-coordinate shufflers.

    User 0 is malicious.  The single shuffler admits k messages per user; the
    per-coordinate topology admits one message per user and coordinate shuffler.
    The gap is E||err_poisoned||^2 - E||err_honest||^2 with honest randomness shared
    between the paired runs.
    """
    if not protocol.vector_messages or protocol.n_tags == 0:
        raise ValueError("poisoning needs tagged vector-valued messages")
    d = protocol.d
    bundle = poison_messages(protocol, d, alpha, probe_budget, rng)
    V = make_inputs(family, n, d, rng)
    truth = V.sum(axis=0)
    topologies = {
        "single": ShufflerTopology("single", rate_limit=protocol.k),
        "per-coordinate": ShufflerTopology("per-coordinate", rate_limit=protocol.k // protocol.n_tags),
    }
    honest = {name: [] for name in topologies}
    poisoned = {name: [] for name in topologies}
    dropped = {name: 0 for name in topologies}
    for _ in range(trials):
        seed = int(rng.integers(2**63))
        for name, topo in topologies.items():
            h = run_protocol(V, protocol, topo, np.random.default_rng(seed))
            p = run_protocol(V, protocol, topo, np.random.default_rng(seed), replace={0: bundle.messages})
            honest[name].append(float(np.sum((h.output - truth) ** 2)))
            poisoned[name].append(float(np.sum((p.output - truth) ** 2)))
            dropped[name] += p.report.total_dropped
    h_mse = {k: float(np.mean(v)) for k, v in honest.items()}
    p_mse = {k: float(np.mean(v)) for k, v in poisoned.items()}
    gap = {k: p_mse[k] - h_mse[k] for k in topologies}
    ratio = gap["single"] / gap["per-coordinate"] if gap["per-coordinate"] > 0 else math.inf
    return PoisoningReport(trials, h_mse, p_mse, gap, ratio, bundle.norm, bundle.below_threshold, dropped)
