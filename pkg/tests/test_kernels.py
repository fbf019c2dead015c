import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from madapt import _accel, kernels
from madapt.errors import NumericError

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def out_size(n, k, stride):
    return (n - k) // stride + 1


@pytest.fixture
def numpy_backend():
    prev = kernels.set_backend("numpy")
    yield
    kernels.set_backend(prev)


class TestIm2col:
    def test_layout(self):
        xp = np.arange(16.0).reshape(1, 1, 4, 4)
        cols = kernels.im2col_numpy(xp, 3, 1, 2, 2)
        assert cols.shape == (1, 9, 4)
        # row (i, j) holds xp[y + i, x + j] for output positions in raster order
        assert cols[0, 0].tolist() == [0.0, 1.0, 4.0, 5.0]
        assert cols[0, 8].tolist() == [10.0, 11.0, 14.0, 15.0]

    @needs_numba
    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 2), st.integers(1, 3), st.integers(3, 9), st.integers(3, 9),
           st.sampled_from([1, 3]), st.sampled_from([1, 2]))
    def test_backends_bit_identical(self, b, c, h, w, k, stride):
        rng = np.random.default_rng(h * 31 + w)
        xp = rng.normal(size=(b, c, h, w))
        ho, wo = out_size(h, k, stride), out_size(w, k, stride)
        cols = kernels.im2col_numpy(xp, k, stride, ho, wo)
        assert np.array_equal(kernels.im2col_numba(xp, k, stride, ho, wo), cols)
        g = rng.normal(size=cols.shape)
        assert np.array_equal(kernels.col2im_numba(g, b, c, h, w, k, stride, ho, wo),
                              kernels.col2im_numpy(g, b, c, h, w, k, stride, ho, wo))

    @pytest.mark.parametrize("stride", [1, 2])
    def test_col2im_is_adjoint(self, stride):
        rng = np.random.default_rng(stride)
        b, c, h, w, k = 2, 3, 7, 6, 3
        ho, wo = out_size(h, k, stride), out_size(w, k, stride)
        x = rng.normal(size=(b, c, h, w))
        y = rng.normal(size=(b, c * k * k, ho * wo))
        for impl in ((kernels.im2col_numpy, kernels.col2im_numpy),
                     (kernels.im2col_numba, kernels.col2im_numba)):
            lhs = np.sum(impl[0](x, k, stride, ho, wo) * y)
            rhs = np.sum(x * impl[1](y, b, c, h, w, k, stride, ho, wo))
            assert abs(lhs - rhs) < 1e-10


class TestJacobi:
    @pytest.mark.parametrize("impl", [kernels.jacobi_eigh_numpy, kernels.jacobi_eigh_numba])
    def test_matches_lapack(self, impl):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(7, 7))
        a = m + m.T
        w, v = impl(a)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-12)
        np.testing.assert_allclose(v.T @ v, np.eye(7), atol=1e-12)
        np.testing.assert_allclose((v * w) @ v.T, a, atol=1e-12)

    @pytest.mark.parametrize("impl", [kernels.jacobi_eigh_numpy, kernels.jacobi_eigh_numba])
    def test_degenerate_and_trivial(self, impl):
        w, v = impl(np.eye(3))
        assert np.array_equal(w, np.ones(3)) and np.array_equal(v, np.eye(3))
        w, _ = impl(np.zeros((2, 2)))
        assert np.array_equal(w, np.zeros(2))
        w, _ = impl(np.array([[5.0]]))
        assert w.tolist() == [5.0]

    @needs_numba
    def test_backends_agree(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(9, 9))
        a = m @ m.T
        w1, v1 = kernels.jacobi_eigh_numpy(a)
        w2, v2 = kernels.jacobi_eigh_numba(a)
        np.testing.assert_allclose(w1, w2, atol=1e-12)
        np.testing.assert_allclose(np.abs(v1.T @ v2), np.eye(9), atol=1e-8)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            kernels.jacobi_eigh_numpy(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    def test_sweep_cap(self):
        m = np.random.default_rng(2).normal(size=(6, 6))
        with pytest.raises(NumericError, match="converge"):
            kernels.jacobi_eigh_numpy(m + m.T, max_sweeps=1)


class TestBackendSelection:
    def test_set_backend_round_trip(self, numpy_backend):
        assert kernels.backend() == "numpy"
        assert kernels.im2col is kernels.im2col_numpy

    def test_unknown(self):
        with pytest.raises(ValueError):
            kernels.set_backend("cuda")

    def test_conv_same_under_both(self):
        from madapt.tensor import Tensor, conv2d
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
        w = rng.normal(size=(3, 2, 3, 3))
        results = []
        for name in ("numpy", "numba") if _accel.HAVE_NUMBA else ("numpy",):
            prev = kernels.set_backend(name)
            try:
                x.grad = None
                out = conv2d(x, w, stride=2, padding=1)
                (out * out).sum().backward()
                results.append((out.data.copy(), x.grad.copy()))
            finally:
                kernels.set_backend(prev)
        for out, grad in results[1:]:
            assert np.array_equal(out, results[0][0]) and np.array_equal(grad, results[0][1])

    @pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("true", "numpy"), ("0", None)])
    def test_env_flag(self, flag, expected):
        env = dict(os.environ, MADAPT_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", "import madapt.kernels as k; print(k.backend())"],
                             env=env, capture_output=True, text=True, check=True).stdout.strip()
        if expected is None:
            expected = "numba" if _accel.HAVE_NUMBA else "numpy"
        assert out == expected
