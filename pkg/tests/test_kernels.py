"""Backend parity and correctness of the hot kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from actseg.kernels import numba_impl, numpy_impl

BACKENDS = [numpy_impl, numba_impl]


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(42)


def test_bilinear_resize_constant():
    img = np.full((7, 11, 3), 0.25)
    for impl in BACKENDS:
        out = impl.bilinear_resize(img, 16, 16)
        assert out.shape == (16, 16, 3)
        np.testing.assert_allclose(out, 0.25)


def test_bilinear_resize_identity_and_parity(rng):
    img = rng.random((9, 13, 6))
    np.testing.assert_allclose(numpy_impl.bilinear_resize(img, 9, 13), img)
    a = numpy_impl.bilinear_resize(img, 32, 24)
    b = numba_impl.bilinear_resize(img, 32, 24)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_im2col_col2im_parity_and_adjoint(rng):
    x = rng.random((2, 3, 8, 10))
    cols_np = numpy_impl.im2col3x3(x)
    cols_nb = numba_impl.im2col3x3(x)
    np.testing.assert_array_equal(cols_np, cols_nb)
    # col2im is the adjoint of im2col: <im2col(x), c> == <x, col2im(c)>
    c = rng.random(cols_np.shape)
    lhs = float((cols_np * c).sum())
    rhs = float((x * numpy_impl.col2im3x3(c, 8, 10)).sum())
    assert abs(lhs - rhs) < 1e-9
    np.testing.assert_allclose(
        numpy_impl.col2im3x3(c, 8, 10), numba_impl.col2im3x3(c, 8, 10), atol=1e-12
    )


def test_maxpool_parity_and_backward(rng):
    x = rng.random((2, 4, 6, 8))
    out_np, arg_np = numpy_impl.maxpool2x2(x)
    out_nb, arg_nb = numba_impl.maxpool2x2(x)
    np.testing.assert_array_equal(out_np, out_nb)
    np.testing.assert_array_equal(arg_np, arg_nb)
    assert out_np.shape == (2, 4, 3, 4)
    grad = rng.random(out_np.shape)
    g_np = numpy_impl.maxpool2x2_backward(grad, arg_np, 6, 8)
    g_nb = numba_impl.maxpool2x2_backward(grad, arg_nb, 6, 8)
    np.testing.assert_array_equal(g_np, g_nb)
    # every pooled gradient lands on exactly one input cell
    assert g_np.sum() == pytest.approx(grad.sum())


def test_gaussian_logpdf_matches_scipy(rng):
    d = 5
    a = rng.random((d, d))
    cov = a @ a.T + 0.5 * np.eye(d)
    mean = rng.random(d)
    z = rng.random((40, d))
    chol = np.linalg.cholesky(cov)
    expected = multivariate_normal(mean=mean, cov=cov).logpdf(z)
    for impl in BACKENDS:
        got = impl.gaussian_logpdf(np.ascontiguousarray(z), mean, chol)
        np.testing.assert_allclose(got, expected, atol=1e-10)


def _vote_args(rng, n_patches, height, width):
    x0s = rng.integers(0, width - 4, size=n_patches)
    y0s = rng.integers(0, height - 4, size=n_patches)
    ws = rng.integers(3, 5, size=n_patches)
    hs = rng.integers(3, 5, size=n_patches)
    cxs = x0s + ws / 2.0
    cys = y0s + hs / 2.0
    labels = rng.integers(0, 3, size=n_patches)
    risks = rng.random(n_patches)
    return (x0s.astype(np.int64), y0s.astype(np.int64), ws.astype(np.int64),
            hs.astype(np.int64), cxs, cys, labels.astype(np.int64), risks)


@pytest.mark.parametrize("mode", [0, 1, 2])
def test_accumulate_votes_parity(rng, mode):
    args = _vote_args(rng, 12, 16, 16)
    res_np = numpy_impl.accumulate_votes(*args, 3, 16, 16, mode)
    res_nb = numba_impl.accumulate_votes(*args, 3, 16, 16, mode)
    for a, b in zip(res_np, res_nb):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_env_flag_selects_backend():
    code = "from actseg import kernels; print(kernels.backend_name())"
    for flag, expect in [("numpy", "numpy"), ("numba", "numba")]:
        env = dict(os.environ, ACTSEG_KERNELS=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == expect
