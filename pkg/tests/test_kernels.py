"""The compiled kernels and the numpy fallback must agree bit for bit."""

import numpy as np
import pytest

from dyadflow import _backend, _fallback

compiled = _backend.compiled
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def test_backend_selected():
    assert _backend.BACKEND in ("compiled", "python")
    assert _backend.kernels is (compiled if compiled is not None else _fallback)


@pytest.mark.parametrize("window", [-1, 0, 3, 50])
def test_fallback_dtw_matches_table(rng, window):
    import oracles

    for _ in range(20):
        a, b = rng.normal(size=rng.integers(1, 30)), rng.normal(size=rng.integers(1, 30))
        got = _fallback.dtw(a, b, window)
        if window < 0 or window >= 30:
            assert got == oracles.dtw(list(a), list(b))
        else:
            assert got >= oracles.dtw(list(a), list(b))


@needs_compiled
@pytest.mark.parametrize("window", [-1, 0, 4])
def test_dtw_equivalent(rng, window):
    for _ in range(30):
        a, b = rng.normal(size=rng.integers(1, 90)), rng.normal(size=rng.integers(1, 90))
        assert compiled.dtw(a, b, window) == _fallback.dtw(a, b, window)


@needs_compiled
def test_best_split_equivalent(rng):
    X = np.round(rng.normal(size=(120, 6)), 1)
    y = rng.integers(0, 3, size=120).astype(np.intp)
    rows = rng.choice(120, size=90, replace=True).astype(np.intp)
    feats = np.array([0, 2, 3, 5], dtype=np.intp)
    for min_leaf in (1, 2, 5):
        assert compiled.best_split(X, y, rows, feats, 3, min_leaf) == _fallback.best_split(X, y, rows, feats, 3, min_leaf)


@needs_compiled
@pytest.mark.parametrize("max_features,max_depth,min_leaf", [(3, -1, 1), (8, 4, 2), (1, -1, 3)])
def test_grow_tree_equivalent(rng, max_features, max_depth, min_leaf):
    X = np.round(rng.normal(size=(150, 8)), 2)
    y = (X[:, 0] + rng.normal(size=150) > 0).astype(np.intp)
    sample = rng.integers(0, 150, size=150).astype(np.intp)
    a = compiled.grow_tree(X, y, sample, 2, max_features, max_depth, min_leaf, 99)
    b = _fallback.grow_tree(X, y, sample, 2, max_features, max_depth, min_leaf, 99)
    assert len(a) == len(b)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(np.asarray(u), np.asarray(v))
