"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wldreg import _backend, _fallback

from .conftest import spd_matrix

compiled = _backend.compiled
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not available")


def test_backend_name():
    assert _backend.BACKEND in ("compiled", "python")
    assert (_backend.kernels is _fallback) == (_backend.BACKEND == "python")


@needs_compiled
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_matmul_bit_identical(n, p, q, seed):
    g = np.random.default_rng(seed)
    a, b = g.normal(size=(n, p)), g.normal(size=(p, q))
    assert np.array_equal(compiled.matmul(a, b), _fallback.matmul(a, b))


@needs_compiled
@pytest.mark.parametrize("smooth", [False, True])
@given(st.integers(1, 12), st.integers(2, 40), st.floats(0.05, 30.0), st.floats(0.1, 50.0),
       st.integers(0, 2**32 - 1))
def test_similarity_agrees(smooth, m, c, gamma, spread, seed):
    g = np.random.default_rng(seed)
    acts = spread * g.normal(size=(m, c))
    gsym = g.normal(size=(c, c))
    gsym = gsym + gsym.T
    s1 = compiled.rbf_similarity(acts, gamma, smooth)
    s2 = _fallback.rbf_similarity(acts, gamma, smooth)
    assert np.allclose(s1, s2, rtol=1e-12, atol=1e-300)
    assert np.array_equal(s1, s1.T) and np.all(np.diag(s1) == 1.0)
    g1 = compiled.rbf_similarity_grad(acts, gsym, gamma, smooth)
    g2 = _fallback.rbf_similarity_grad(acts, gsym, gamma, smooth)
    scale = max(np.abs(g2).max(), 1e-300)
    assert np.abs(g1 - g2).max() <= 1e-12 * scale + 1e-300


@needs_compiled
def test_wide_range_sample_mixes_both_paths():
    acts = np.array([[0.0, 1.0, 5000.0, 2.0], [0.5, 0.1, 0.2, 0.3]])
    gsym = np.ones((4, 4)) - np.eye(4)
    for smooth in (False, True):
        assert np.allclose(compiled.rbf_similarity(acts, 1.0, smooth),
                           _fallback.rbf_similarity(acts, 1.0, smooth), rtol=1e-13, atol=0)
        assert np.allclose(compiled.rbf_similarity_grad(acts, gsym, 1.0, smooth),
                           _fallback.rbf_similarity_grad(acts, gsym, 1.0, smooth),
                           rtol=1e-12, atol=1e-300)


@needs_compiled
@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_cholesky_and_inverse_agree(c, seed):
    s = spd_matrix(np.random.default_rng(seed), c)
    l1, f1 = compiled.cholesky(s, 0.0)
    l2, f2 = _fallback.cholesky(s, 0.0)
    assert f1 == f2 == -1
    assert np.allclose(l1, l2, rtol=1e-12, atol=1e-14)
    assert np.allclose(compiled.cholesky_inverse(l1), _fallback.cholesky_inverse(l2),
                       rtol=1e-10, atol=1e-12)


@needs_compiled
def test_cholesky_failure_pivot_agrees():
    s = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    assert compiled.cholesky(s, 0.0)[1] == _fallback.cholesky(s, 0.0)[1] == 2
