"""Pure-numpy reference implementation of the retrieval kernel.

Semantics contract (shared with the compiled backend):

* scores are cosine similarities between each query row and each key row;
* per query, the k best-scoring key indices are returned with scores in
  non-increasing order, ties broken by ascending key index;
* callers guarantee nonzero query/key norms.
"""
from __future__ import annotations

import numpy as np


def retrieve_batch(queries: np.ndarray, keys: np.ndarray, k: int):
    """Top-k cosine retrieval for a batch of queries.

    Parameters
    ----------
    queries : (B, d) float64
    keys : (M, d) float64
    k : int, 1 <= k <= M

    Returns
    -------
    indices : (B, k) int64
    scores : (B, k) float64, selected cosine scores, non-increasing per row
    """
    qn = queries / np.linalg.norm(queries, axis=1, keepdims=True)
    kn = keys / np.linalg.norm(keys, axis=1, keepdims=True)
    scores = qn @ kn.T
    # stable sort keeps equal scores in ascending-index order
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    selected = np.take_along_axis(scores, order, axis=1)
    return order.astype(np.int64), selected
