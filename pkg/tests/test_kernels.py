"""Backend parity: the compiled kernel and the numpy fallback must agree."""
import numpy as np
import pytest

from tsarag.kernels import _fallback, backend_name

try:
    from tsarag.kernels import _native
except ImportError:
    _native = None

needs_native = pytest.mark.skipif(_native is None, reason="extension not built")


def test_backend_selected():
    assert backend_name() in ("native", "python")


@needs_native
def test_native_matches_fallback_on_random_batches():
    rng = np.random.default_rng(0)
    for _ in range(50):
        b = int(rng.integers(1, 20))
        m = int(rng.integers(1, 16))
        d = int(rng.integers(1, 10))
        k = int(rng.integers(1, m + 1))
        q = np.ascontiguousarray(rng.standard_normal((b, d)))
        keys = np.ascontiguousarray(rng.standard_normal((m, d)))
        ni, ns = _native.retrieve_batch(q, keys, k)
        fi, fs = _fallback.retrieve_batch(q, keys, k)
        np.testing.assert_array_equal(ni, fi)
        np.testing.assert_allclose(ns, fs, atol=1e-12)


@pytest.mark.parametrize("impl", [
    pytest.param("native", marks=needs_native), "fallback",
])
def test_tie_rule_lowest_index_wins(impl):
    backend = _native if impl == "native" else _fallback
    rng = np.random.default_rng(1)
    keys = np.ascontiguousarray(rng.standard_normal((6, 4)))
    keys[4] = keys[1]
    q = np.ascontiguousarray(keys[1][None, :])
    idx, _ = backend.retrieve_batch(q, keys, 2)
    assert idx[0, 0] == 1
    assert 4 in idx[0]


@pytest.mark.parametrize("impl", [
    pytest.param("native", marks=needs_native), "fallback",
])
def test_scores_sorted_non_increasing(impl):
    backend = _native if impl == "native" else _fallback
    rng = np.random.default_rng(2)
    q = np.ascontiguousarray(rng.standard_normal((8, 5)))
    keys = np.ascontiguousarray(rng.standard_normal((12, 5)))
    _, scores = backend.retrieve_batch(q, keys, 12)
    assert (np.diff(scores, axis=1) <= 1e-15).all()
