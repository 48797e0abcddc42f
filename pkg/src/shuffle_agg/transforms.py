"""Protocol combinators: rotation symmetrization, coordinate symmetrization,
unbiased binary rounding and dimension lifting.
"""

from __future__ import annotations

import math

import numpy as np

from .protocol import Messages, ProtocolPair, SharedRandomness, check_dimension
from .vecspace import KashinFrame, haar_orthogonal, kashin_batch, kashin_inverse


class CombinatorError(ValueError):
    """A combinator was applied to a protocol that does not meet its precondition."""


def _tile(array: np.ndarray, trials: int) -> np.ndarray:
    return np.broadcast_to(array, (trials,) + array.shape).copy()


def rotate_symmetrize(base: ProtocolPair, seed=None, *, rotation=None) -> ProtocolPair:
    """R^(v) = U^T R(U v) with a public rotation U drawn once per run.

    ``seed`` pins the rotation across runs (derived from the seed alone); with no
    seed and no ``rotation`` a fresh Haar rotation is drawn for each run.
    """
    if not base.vector_messages:
        raise CombinatorError("rotate_symmetrize needs vector-valued messages with a summation aggregator")
    d = base.d
    if rotation is not None:
        fixed = np.asarray(getattr(rotation, "matrix", rotation), dtype=float)
        if fixed.shape != (d, d):
            raise CombinatorError("rotation has the wrong shape")
    elif seed is not None:
        fixed = haar_orthogonal(np.random.default_rng(seed), d)
    else:
        fixed = None

    def draw(rng, trials):
        U = _tile(fixed, trials) if fixed is not None else haar_orthogonal(rng, d, trials)
        return SharedRandomness(rotation=U, seed=seed, base=base.shared(rng, trials))

    def randomize(V, rng, shared):
        V = check_dimension(V, d)
        U = shared.rotation
        rotated = np.einsum("tij,t...j->t...i", U, V)
        msgs = base.randomize(rotated, rng, shared.base)
        # U^T m for each message m
        back = np.einsum("tji,t...j->t...i", U, msgs.payload)
        return Messages(back, msgs.tags)

    return ProtocolPair(
        d=d, k=base.k, width=base.width, randomize=randomize, aggregate=base.aggregate,
        label=f"rotate({base.label})", draw_shared=draw, vector_messages=True,
        unbiased=base.unbiased, n_tags=base.n_tags,
    )


def inverse_randomness(permutation, signs) -> tuple[np.ndarray, np.ndarray]:
    """(pi', s') such that x -> s' * x[pi'] undoes x -> s * x[pi]."""
    perm = np.asarray(permutation)
    s = np.asarray(signs, dtype=float)
    inv = np.argsort(perm, axis=-1)
    return inv, np.take_along_axis(s, inv, axis=-1)


def signed_permute(X, perm, signs):
    """x -> s * x[pi] along the last axis; ``perm``/``signs`` are ``(T, d)``."""
    X = np.asarray(X, dtype=float)
    T = perm.shape[0]
    idx = perm.reshape((T,) + (1,) * (X.ndim - 2) + perm.shape[-1:])
    s = signs.reshape(idx.shape)
    return np.take_along_axis(X, np.broadcast_to(idx, X.shape), axis=-1) * s


def coord_symmetrize(base: ProtocolPair, seed=None, *, permutation=None, signs=None) -> ProtocolPair:
    """R'(v) = R(s * v[pi]) and A' = the inverse signed permutation applied to A.

    Vector-message bases get the inverse applied to each message (keeping the
    summation aggregator); other bases get a wrapped aggregator.
    """
    d = base.d
    forced = permutation is not None or signs is not None
    if forced:
        perm0 = np.arange(d) if permutation is None else np.asarray(permutation)
        signs0 = np.ones(d) if signs is None else np.asarray(signs, dtype=float)
        if sorted(perm0.tolist()) != list(range(d)) or not np.all(np.abs(signs0) == 1):
            raise CombinatorError("need a permutation of range(d) and signs in {-1, +1}")
    elif seed is not None:
        rng0 = np.random.default_rng(seed)
        perm0 = rng0.permutation(d)
        signs0 = rng0.choice([-1.0, 1.0], size=d)
    else:
        perm0 = signs0 = None

    def draw(rng, trials):
        if perm0 is not None:
            perm, s = _tile(perm0, trials), _tile(signs0, trials)
        else:
            perm = rng.permuted(np.broadcast_to(np.arange(d), (trials, d)), axis=1)
            s = rng.choice([-1.0, 1.0], size=(trials, d))
        return SharedRandomness(permutation=perm, signs=s, seed=seed, base=base.shared(rng, trials))

    def randomize(V, rng, shared):
        V = check_dimension(V, d)
        msgs = base.randomize(signed_permute(V, shared.permutation, shared.signs), rng, shared.base)
        if not base.vector_messages:
            return msgs
        inv, s_inv = inverse_randomness(shared.permutation, shared.signs)
        return Messages(signed_permute(msgs.payload, inv, s_inv), msgs.tags)

    def aggregate(messages, shared, n):
        out = base.aggregate(messages, shared.base, n)
        if base.vector_messages:
            return out
        inv, s_inv = inverse_randomness(shared.permutation, shared.signs)
        return signed_permute(out, inv, s_inv)

    return ProtocolPair(
        d=d, k=base.k, width=base.width, randomize=randomize, aggregate=aggregate,
        label=f"coord({base.label})", draw_shared=draw, vector_messages=base.vector_messages,
        unbiased=base.unbiased, n_tags=base.n_tags,
    )


def binary_round(w, rng: np.random.Generator, bound: float | None = None) -> np.ndarray:
    """Unbiased rounding of each entry to +-bound.

    u = +bound with probability (1 + w/bound)/2 and -bound otherwise.  The default
    bound is 2/sqrt(d') with d' = len(w)/2.
    """
    w = np.asarray(w, dtype=float)
    if bound is None:
        bound = 2.0 / math.sqrt(w.shape[-1] / 2)
    if np.any(np.abs(w) > bound * (1 + 1e-12)):
        raise ValueError(f"entries exceed the rounding bound {bound:.6g}")
    up = rng.random(w.shape) < (1.0 + np.clip(w / bound, -1.0, 1.0)) / 2.0
    return np.where(up, bound, -bound)


def lifted_error_bound(base_err: float, n: int, d: int, d_prime: int, level: float) -> float:
    """Err of :func:`lift_dimension` given the coordinate-symmetrized base error.

    Truncation keeps a 2d'/d share of the symmetrized base error, rescaling
    multiplies it by 2 C_K^2, and rounding adds at most 2 C_K^2 per user.
    """
    return 2 * level**2 * (2 * d_prime / d) * base_err + 2 * n * level**2


def lift_dimension(base: ProtocolPair, d_prime: int, frame: KashinFrame, seed=None) -> ProtocolPair:
    """A protocol over R^{d'} built from a base over R^d with d >= 2 d'.

    v' -> Kashin coefficients a -> +-B rounding (B = C_K/sqrt d') -> scale by
    1/(B sqrt(2d')) onto the unit sphere -> pad with zeros -> coordinate-symmetrized
    base.  The aggregator truncates to 2d' coordinates, undoes the scaling and
    applies U^T.
    """
    d = base.d
    if frame.d != d_prime:
        raise CombinatorError("frame dimension must equal d_prime")
    if d < 2 * d_prime:
        raise CombinatorError(f"base dimension {d} is below 2 d' = {2 * d_prime}")
    inner = coord_symmetrize(base, seed)
    bound = frame.bound
    lam = 1.0 / (bound * math.sqrt(2 * d_prime))

    def randomize(V, rng, shared):
        V = check_dimension(V, d_prime)
        u = binary_round(kashin_batch(frame, V), rng, bound)
        padded = np.zeros(V.shape[:-1] + (d,))
        padded[..., : 2 * d_prime] = lam * u
        return inner.randomize(padded, rng, shared)

    def aggregate(messages, shared, n):
        out = inner.aggregate(messages, shared, n)
        return kashin_inverse(frame, out[..., : 2 * d_prime] / lam)

    return ProtocolPair(
        d=d_prime, k=base.k, width=base.width, randomize=randomize, aggregate=aggregate,
        label=f"lift({base.label},d'={d_prime})", draw_shared=inner.draw_shared,
        vector_messages=False, unbiased=base.unbiased, n_tags=base.n_tags,
    )
