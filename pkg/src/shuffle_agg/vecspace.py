"""Real-vector primitives: unit vectors, Haar rotations and Kashin tight frames.

A Kashin frame is a 2d x d matrix ``U`` with orthonormal columns
(``U.T @ U == I``).  Every vector ``v`` in the unit ball admits coefficients
``a`` with ``U.T @ a == v`` and ``max|a| <= level / sqrt(d)``; the coefficients
are found by iterative residual clipping.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_LEVEL = 4.0
NORM_SLACK = 1e-12

_PROBES = 32
_CONTRACTION = 0.9
_RETRIES = 8


class FrameConstructionError(RuntimeError):
    """No contracting frame was found within the retry budget."""


class KashinConvergenceError(RuntimeError):
    """Residual clipping did not reach the level bound or the tolerance."""


def unit_vector(coords) -> np.ndarray:
    """Validate ``coords`` as a point of the unit ball and return it as floats."""
    v = np.asarray(coords, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if norm > 1.0 + NORM_SLACK:
        raise ValueError(f"vector norm {norm!r} exceeds 1")
    return v


def random_unit_vectors(rng: np.random.Generator, size, d: int) -> np.ndarray:
    """Uniform samples from the sphere S^{d-1}; ``size`` is the batch shape."""
    shape = (size,) if isinstance(size, int) else tuple(size)
    z = rng.standard_normal(shape + (d,))
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    # a zero draw has probability 0 but would poison the batch
    norms[norms == 0] = 1.0
    return z / norms


def haar_orthogonal(rng: np.random.Generator, d: int, size=None) -> np.ndarray:
    """Haar-distributed orthogonal matrices, via QR with the sign fix on diag(R)."""
    shape = () if size is None else ((size,) if isinstance(size, int) else tuple(size))
    z = rng.standard_normal(shape + (d, d))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1)).copy()
    signs[signs == 0] = 1.0
    return q * signs[..., None, :]


@dataclass(frozen=True)
class Rotation:
    d: int
    seed: int
    matrix: np.ndarray = field(repr=False, compare=False)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix.T

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "seed": self.seed}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Rotation":
        record = json.loads(text)
        return random_rotation(int(record["d"]), int(record["seed"]))


def random_rotation(d: int, seed: int) -> Rotation:
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    return Rotation(d=d, seed=seed, matrix=haar_orthogonal(rng, d))


@dataclass(frozen=True)
class KashinFrame:
    """A 2d x d tight frame.  ``matrix`` is regenerated from ``(d, level, seed)``."""

    d: int
    level: float
    seed: int
    matrix: np.ndarray = field(repr=False, compare=False)

    @property
    def bound(self) -> float:
        """The coefficient bound level / sqrt(d)."""
        return self.level / math.sqrt(self.d)

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "level": self.level, "seed": self.seed}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KashinFrame":
        record = json.loads(text)
        return make_frame(int(record["d"]), float(record["level"]), int(record["seed"]))


def _clip_iterations(U, level, V, max_iter, tol):
    """Run residual clipping on a batch; returns (coefficients, residual, norm history)."""
    two_d = U.shape[0]
    scale = level / math.sqrt(two_d)
    A = np.zeros(V.shape[:-1] + (two_d,))
    R = V.copy()
    norms = np.linalg.norm(R, axis=-1)
    history = [norms]
    for _ in range(max_iter):
        if not np.any(norms > tol):
            break
        lam = (scale * norms)[..., None]
        A += np.clip(R @ U.T, -lam, lam)
        R = V - A @ U
        norms = np.linalg.norm(R, axis=-1)
        history.append(norms)
    return A, R, history


def _contracts(U: np.ndarray, level: float, rng: np.random.Generator, tol: float = 1e-9) -> bool:
    probes = random_unit_vectors(rng, _PROBES, U.shape[1])
    _, _, history = _clip_iterations(U, level, probes, 60, tol)
    for before, after in zip(history, history[1:]):
        live = before > tol
        if np.any(after[live] > _CONTRACTION * before[live]):
            return False
    return bool(np.all(history[-1] <= tol))


def make_frame(d: int, level: float = DEFAULT_LEVEL, seed: int = 0) -> KashinFrame:
    """Build ``(1/sqrt 2) [Q1; Q2]`` from two Haar matrices, retrying on poor contraction."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if not level > 0:
        raise ValueError("level must be positive")
    for attempt in range(_RETRIES + 1):
        rng = np.random.default_rng([seed, attempt])
        q1 = haar_orthogonal(rng, d)
        q2 = haar_orthogonal(rng, d)
        U = np.vstack([q1, q2]) / math.sqrt(2.0)
        if _contracts(U, level, rng):
            return KashinFrame(d=d, level=float(level), seed=seed, matrix=U)
    raise FrameConstructionError(
        f"no contracting frame for d={d}, level={level} after {_RETRIES} retries"
    )


def kashin_forward(
    frame: KashinFrame, v, *, max_iter: int = 60, tol: float = 1e-9
) -> np.ndarray:
    """Coefficients ``a`` (length 2d) with ``U.T a = v`` and ``|a|_inf <= level/sqrt(d)``.

    Accepts a single vector or a batch with the vector on the last axis.
    """
    V = np.asarray(v, dtype=float)
    if V.shape[-1] != frame.d:
        raise ValueError(f"vector dimension {V.shape[-1]} != frame dimension {frame.d}")
    U = frame.matrix
    A, R, _ = _clip_iterations(U, frame.level, V, max_iter, tol)
    A += R @ U.T
    err = np.linalg.norm(A @ U - V, axis=-1)
    peak = np.max(np.abs(A), axis=-1) if A.size else np.zeros(A.shape[:-1])
    in_ball = np.linalg.norm(V, axis=-1) <= 1.0 + NORM_SLACK
    if np.any(err > 1e-6) or np.any(peak[in_ball] > frame.bound * (1 + 1e-12)):
        raise KashinConvergenceError(
            f"residual clipping failed: max residual {float(np.max(err)):.3g}, "
            f"max coefficient {float(np.max(peak)):.4g} vs bound {frame.bound:.4g}"
        )
    return A


def kashin_batch(frame: KashinFrame, V) -> np.ndarray:
    """:func:`kashin_forward` over a batch, solving each distinct row once.

    Monte-Carlo batches usually repeat one dataset across trials, or one vector
    across users, so deduplication saves most of the work.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim >= 3 and V.shape[0] > 1 and np.array_equal(V, np.broadcast_to(V[:1], V.shape)):
        return np.broadcast_to(kashin_batch(frame, V[:1]), V.shape[:-1] + (2 * frame.d,))
    flat = V.reshape(-1, frame.d)
    # a random projection is a 1-D key that separates distinct rows almost surely
    key = flat @ np.random.default_rng(0).standard_normal(frame.d)
    _, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    uniq = flat[first]
    if uniq.shape[0] * 2 > flat.shape[0] or not np.array_equal(uniq[inverse], flat):
        return kashin_forward(frame, V)
    return kashin_forward(frame, uniq)[inverse].reshape(V.shape[:-1] + (2 * frame.d,))


def kashin_inverse(frame: KashinFrame, a) -> np.ndarray:
    """Apply ``U.T`` to coefficients on the last axis."""
    A = np.asarray(a, dtype=float)
    if A.shape[-1] != 2 * frame.d:
        raise ValueError(f"expected {2 * frame.d} coefficients, got {A.shape[-1]}")
    return A @ frame.matrix


def min_sq_dist(v, S) -> float:
    """Smallest squared Euclidean distance from ``v`` to a row of ``S``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    v = np.asarray(v, dtype=float)
    if S.shape[0] == 0:
        raise ValueError("candidate set is empty")
    if S.shape[1] != v.shape[-1]:
        raise ValueError("dimension mismatch between v and S")
    return float(np.min(np.sum((S - v) ** 2, axis=1)))
