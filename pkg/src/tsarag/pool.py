"""Key-value prompt pool: cosine matching, top-K retrieval, augmentation.

A pool holds M (key vector, value matrix) pairs. An input embedding is
matched against keys by cosine similarity, the K best prompts are selected
(ties to the lower index), their value matrices are flattened row-major,
concatenated with the embedding, and mapped back to embedding space by a
learned projection. Selection itself is non-differentiable; keys train
through the alignment surrogate below, values and the projection through
the task loss.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import KOutOfRange, NonFiniteGradient, ShapeMismatch, ZeroVector

NORM_FLOOR = 1e-12


class PromptPool:
    """Mutable pool of M prompts with d-dim keys and (l, d) value matrices."""

    def __init__(self, keys: np.ndarray, values: np.ndarray):
        keys = np.array(keys, dtype=np.float64)
        values = np.array(values, dtype=np.float64)
        if keys.ndim != 2 or values.ndim != 3:
            raise ShapeMismatch("keys must be (M, d), values (M, l, d)")
        if keys.shape[0] != values.shape[0] or keys.shape[1] != values.shape[2]:
            raise ShapeMismatch(
                f"keys {keys.shape} inconsistent with values {values.shape}"
            )
        if min(keys.shape[0], keys.shape[1], values.shape[1]) < 1:
            raise ShapeMismatch("pool dimensions must all be >= 1")
        if not (np.all(np.isfinite(keys)) and np.all(np.isfinite(values))):
            raise ValueError("pool entries must be finite")
        if (np.linalg.norm(keys, axis=1) <= NORM_FLOOR).any():
            raise ZeroVector("every key needs norm > 1e-12")
        self.keys = keys
        self.values = values

    @property
    def size(self) -> int:
        return self.keys.shape[0]

    @property
    def prompt_len(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.keys.shape[1]

    @classmethod
    def random(cls, size: int, prompt_len: int, dim: int, seed) -> "PromptPool":
        """Unit-vector keys, N(0, 0.02^2) values."""
        rng = np.random.default_rng(seed)
        keys = rng.standard_normal((size, dim))
        keys /= np.linalg.norm(keys, axis=1, keepdims=True)
        values = 0.02 * rng.standard_normal((size, prompt_len, dim))
        return cls(keys=keys, values=values)

    def copy(self) -> "PromptPool":
        return PromptPool(self.keys.copy(), self.values.copy())


@dataclass(frozen=True)
class Retrieval:
    """Indices and scores of the selected prompts, best first."""

    indices: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.scores) or not self.indices:
            raise ShapeMismatch("indices and scores must pair up, nonempty")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("selected indices must be distinct")
        if any(a < b - 1e-15 for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("scores must be non-increasing")

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass
class Projection:
    """Learned map from the concatenated prompt+embedding vector to R^d."""

    weight: np.ndarray  # (d, (K*l + 1) * d)

    @classmethod
    def random(cls, top_k: int, prompt_len: int, dim: int, seed) -> "Projection":
        rng = np.random.default_rng(seed)
        fan_in = (top_k * prompt_len + 1) * dim
        bound = 1.0 / np.sqrt(fan_in)
        return cls(weight=rng.uniform(-bound, bound, size=(dim, fan_in)))


def score(query: np.ndarray, key: np.ndarray) -> float:
    """Cosine similarity between two vectors."""
    q = np.asarray(query, dtype=np.float64).ravel()
    k = np.asarray(key, dtype=np.float64).ravel()
    if q.shape != k.shape:
        raise ShapeMismatch(f"query {q.shape} vs key {k.shape}")
    qn = np.linalg.norm(q)
    kn = np.linalg.norm(k)
    if qn <= NORM_FLOOR or kn <= NORM_FLOOR:
        raise ZeroVector("cosine similarity needs nonzero vectors")
    return float(q @ k / (qn * kn))


def retrieve_topk(pool: PromptPool, query: np.ndarray, k: int) -> Retrieval:
    """Select the k keys most similar to the query."""
    if not 1 <= k <= pool.size:
        raise KOutOfRange(f"K={k} outside [1, {pool.size}]")
    q = np.asarray(query, dtype=np.float64).reshape(1, -1)
    if q.shape[1] != pool.dim:
        raise ShapeMismatch(f"query dim {q.shape[1]} != pool dim {pool.dim}")
    if np.linalg.norm(q) <= NORM_FLOOR:
        raise ZeroVector("query has (near-)zero norm")
    idx, sc = kernels.retrieve_batch(q, pool.keys, k)
    return Retrieval(indices=tuple(int(i) for i in idx[0]),
                     scores=tuple(float(s) for s in sc[0]))


def concat_flat(pool: PromptPool, indices, query: np.ndarray) -> np.ndarray:
    """Row-major flatten of [v_j1; ...; v_jK; query] into R^{(Kl+1)d}."""
    parts = [pool.values[j].ravel() for j in indices]
    parts.append(np.asarray(query, dtype=np.float64).ravel())
    return np.concatenate(parts)


def augment(
    pool: PromptPool, retrieval: Retrieval, query: np.ndarray, proj: Projection
) -> np.ndarray:
    """Project the concatenated prompts+query back to embedding space."""
    if max(retrieval.indices) >= pool.size:
        raise ShapeMismatch("retrieval indices exceed pool size")
    flat = concat_flat(pool, retrieval.indices, query)
    w = proj.weight
    if w.ndim != 2 or w.shape[1] != flat.shape[0] or w.shape[0] != pool.dim:
        raise ShapeMismatch(
            f"projection {w.shape} incompatible with K={retrieval.k}, "
            f"l={pool.prompt_len}, d={pool.dim}"
        )
    return w @ flat


@dataclass(frozen=True)
class PoolGradients:
    """Gradients for one retrieval: selected keys/values plus the projection."""

    indices: tuple[int, ...]
    d_keys: np.ndarray    # (K, d)
    d_values: np.ndarray  # (K, l, d)
    d_weight: np.ndarray  # same shape as Projection.weight


def pool_update(
    pool: PromptPool, proj: Projection, grads: PoolGradients, lr: float
) -> None:
    """One in-place SGD step on the selected prompts and the projection."""
    if lr <= 0.0:
        raise ValueError(f"lr must be positive, got {lr}")
    finite = (
        np.all(np.isfinite(grads.d_keys))
        and np.all(np.isfinite(grads.d_values))
        and np.all(np.isfinite(grads.d_weight))
    )
    if not finite:
        raise NonFiniteGradient("gradients contain NaN/inf")
    if grads.d_keys.shape != (len(grads.indices), pool.dim):
        raise ShapeMismatch("key gradient shape mismatch")
    if grads.d_values.shape != (len(grads.indices), pool.prompt_len, pool.dim):
        raise ShapeMismatch("value gradient shape mismatch")
    if grads.d_weight.shape != proj.weight.shape:
        raise ShapeMismatch("projection gradient shape mismatch")
    for pos, j in enumerate(grads.indices):
        pool.keys[j] -= lr * grads.d_keys[pos]
        pool.values[j] -= lr * grads.d_values[pos]
    proj.weight -= lr * grads.d_weight


def key_alignment_loss(
    query: np.ndarray, retrieval: Retrieval, pool: PromptPool
) -> tuple[float, np.ndarray]:
    """Surrogate pulling selected keys toward the query.

    Returns sum over selected prompts of (1 - cosine(query, key)) and its
    gradient w.r.t. each selected key; the query is treated as a constant.
    """
    q = np.asarray(query, dtype=np.float64).ravel()
    qn = np.linalg.norm(q)
    if qn <= NORM_FLOOR:
        raise ZeroVector("query has (near-)zero norm")
    loss = 0.0
    grads = np.empty((retrieval.k, pool.dim))
    for pos, j in enumerate(retrieval.indices):
        k = pool.keys[j]
        kn = np.linalg.norm(k)
        if kn <= NORM_FLOOR:
            raise ZeroVector(f"key {j} has (near-)zero norm")
        cos = float(q @ k / (qn * kn))
        loss += 1.0 - cos
        # d cos / dk = q/(|q||k|) - cos * k/|k|^2
        grads[pos] = -(q / (qn * kn) - cos * k / (kn * kn))
    return loss, grads
