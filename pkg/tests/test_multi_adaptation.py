import numpy as np
import pytest

from madapt.errors import ConfigError, ContractError, DimensionError
from madapt.gradcheck import finite_diff_check
from madapt.multi_adaptation import (
    AdaptationWeights, CAWeights, SAWeights, alpha_blend, co_adaptation_forward,
    content_sa_forward, interpolate_styles, multi_adapt_forward, style_sa_forward,
)
from madapt.tensor import Tensor


def sa(rng, c, k=1):
    return SAWeights(*(Tensor(rng.normal(0, 0.3, (c, c, k, k))) for _ in range(3)))


def ca(rng, c, k=1):
    return CAWeights(*(Tensor(rng.normal(0, 0.3, (c, c, k, k))) for _ in range(3)))


def weights(rng, c, k=1):
    return AdaptationWeights(sa(rng, c), sa(rng, c), ca(rng, c, k))


def softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TestWeights:
    def test_channel_changing_kernel_rejected(self):
        with pytest.raises(ConfigError):
            SAWeights(Tensor(np.zeros((4, 3, 1, 1))), Tensor(np.zeros((4, 3, 1, 1))), Tensor(np.zeros((4, 3, 1, 1))))

    def test_mixed_kernel_sizes_rejected(self):
        with pytest.raises(ConfigError):
            SAWeights(Tensor(np.zeros((2, 2, 1, 1))), Tensor(np.zeros((2, 2, 3, 3))), Tensor(np.zeros((2, 2, 1, 1))))

    def test_ca_kernel_five_rejected(self):
        with pytest.raises(ConfigError):
            CAWeights(*(Tensor(np.zeros((2, 2, 5, 5))) for _ in range(3)))


class TestResidualIdentity:
    def test_content_sa(self):
        rng = np.random.default_rng(0)
        w = sa(rng, 4)
        w.conv3.data[:] = 0
        f = rng.normal(size=(2, 4, 3, 5))
        assert np.array_equal(content_sa_forward(f, w).data, f)

    def test_style_sa(self):
        rng = np.random.default_rng(1)
        w = sa(rng, 4)
        w.conv3.data[:] = 0
        f = rng.normal(size=(1, 4, 6, 6))
        assert np.array_equal(style_sa_forward(f, w).data, f)

    @pytest.mark.parametrize("k", [1, 3])
    def test_co_adaptation(self, k):
        rng = np.random.default_rng(2)
        w = ca(rng, 4, k)
        w.conv_v.data[:] = 0
        fc, fs = rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 4, 8, 8))
        assert np.array_equal(co_adaptation_forward(fc, fs, w).data, fc)

    def test_composed(self):
        rng = np.random.default_rng(3)
        w = weights(rng, 4)
        for k in (w.content_sa.conv3, w.style_sa.conv3, w.ca.conv_v):
            k.data[:] = 0
        fc, fs = rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 4, 4, 4))
        assert np.array_equal(multi_adapt_forward(fc, fs, w).data, fc)


class TestAttention:
    def test_style_sa_is_channel_attention(self):
        rng = np.random.default_rng(4)
        w = sa(rng, 5)
        for hw in ((2, 2), (7, 3)):
            _, a = style_sa_forward(rng.normal(size=(1, 5, *hw)), w, return_attention=True)
            assert a.shape == (1, 5, 5)

    def test_style_attention_permutation_invariant(self):
        rng = np.random.default_rng(5)
        w = sa(rng, 3)
        f = rng.normal(size=(1, 3, 4, 4))
        perm = rng.permutation(16)
        fp = f.reshape(1, 3, 16)[:, :, perm].reshape(1, 3, 4, 4)
        _, a = style_sa_forward(f, w, return_attention=True)
        _, ap = style_sa_forward(fp, w, return_attention=True)
        assert np.max(np.abs(a.data - ap.data)) < 1e-10

    def test_rectangular_co_attention(self):
        rng = np.random.default_rng(6)
        out, a = co_adaptation_forward(rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 4, 8, 8)),
                                       ca(rng, 4), return_attention=True)
        assert out.shape == (1, 4, 4, 4)
        assert a.shape == (1, 16, 64)

    def test_content_sa_against_direct_formula(self):
        rng = np.random.default_rng(7)
        w = sa(rng, 3)
        f = rng.normal(size=(1, 3, 3, 4))
        from madapt.whitening import zca_whiten
        fw = zca_whiten(f).data[0].reshape(3, 12)
        fr = f[0].reshape(3, 12)
        m = [w_.data[:, :, 0, 0] for w_ in (w.conv1, w.conv2, w.conv3)]
        a = softmax((m[0] @ fw).T @ (m[1] @ fw))
        expected = (m[2] @ fr) @ a.T + fr
        np.testing.assert_allclose(content_sa_forward(f, w).data[0].reshape(3, 12), expected, atol=1e-12)

    def test_style_sa_against_direct_formula(self):
        rng = np.random.default_rng(8)
        w = sa(rng, 3)
        f = rng.normal(size=(1, 3, 4, 4))
        fr = f[0].reshape(3, 16)
        m = [w_.data[:, :, 0, 0] for w_ in (w.conv1, w.conv2, w.conv3)]
        a = softmax((m[0] @ fr) @ (m[1] @ fr).T)
        expected = a.T @ (m[2] @ fr) + fr
        np.testing.assert_allclose(style_sa_forward(f, w).data[0].reshape(3, 16), expected, atol=1e-12)

    def test_rows_stochastic(self):
        rng = np.random.default_rng(9)
        w = weights(rng, 4, 3)
        for _ in range(10):
            fc, fs = rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 4, 6, 6))
            _, a1 = content_sa_forward(fc, w.content_sa, return_attention=True)
            _, a2 = style_sa_forward(fs, w.style_sa, return_attention=True)
            _, a3 = co_adaptation_forward(fc, fs, w.ca, return_attention=True)
            for a in (a1, a2, a3):
                assert np.max(np.abs(a.data.sum(axis=-1) - 1)) < 1e-9


class TestShapes:
    def test_channel_mismatch(self):
        rng = np.random.default_rng(10)
        with pytest.raises(DimensionError):
            content_sa_forward(rng.normal(size=(1, 3, 4, 4)), sa(rng, 4))
        with pytest.raises(DimensionError):
            co_adaptation_forward(rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 3, 4, 4)), ca(rng, 4))

    def test_output_matches_content_shape(self):
        rng = np.random.default_rng(11)
        out = multi_adapt_forward(rng.normal(size=(2, 4, 3, 5)), rng.normal(size=(2, 4, 6, 2)), weights(rng, 4))
        assert out.shape == (2, 4, 3, 5)

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        w = weights(rng, 4)
        fc, fs = rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 4, 4, 4))
        assert np.array_equal(multi_adapt_forward(fc, fs, w).data, multi_adapt_forward(fc, fs, w).data)


class TestBlend:
    def setup_method(self):
        rng = np.random.default_rng(13)
        self.a, self.b = Tensor(rng.normal(size=(1, 2, 3, 3))), Tensor(rng.normal(size=(1, 2, 3, 3)))

    def test_endpoints_exact(self):
        assert alpha_blend(self.a, self.b, 0.0) is self.b
        assert alpha_blend(self.a, self.b, 1.0) is self.a

    def test_midpoint(self):
        np.testing.assert_allclose(alpha_blend(self.a, self.b, 0.5).data, (self.a.data + self.b.data) / 2, atol=1e-15)

    @pytest.mark.parametrize("alpha", [-0.1, 1.5, float("nan")])
    def test_out_of_range(self, alpha):
        with pytest.raises(ContractError):
            alpha_blend(self.a, self.b, alpha)


class TestInterpolate:
    def setup_method(self):
        rng = np.random.default_rng(14)
        self.w = weights(rng, 4)
        self.fc = rng.normal(size=(1, 4, 4, 4))
        self.s1, self.s2 = rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 4, 4, 4))

    def test_single(self):
        np.testing.assert_array_equal(interpolate_styles(self.fc, [(self.s1, 1.0)], self.w).data,
                                      multi_adapt_forward(self.fc, self.s1, self.w).data)

    def test_duplicate_halves(self):
        np.testing.assert_allclose(interpolate_styles(self.fc, [(self.s1, 0.5), (self.s1, 0.5)], self.w).data,
                                   multi_adapt_forward(self.fc, self.s1, self.w).data, atol=1e-12)

    def test_weights_distinguish(self):
        a = interpolate_styles(self.fc, [(self.s1, 0.3), (self.s2, 0.7)], self.w).data
        b = interpolate_styles(self.fc, [(self.s1, 0.7), (self.s2, 0.3)], self.w).data
        assert not np.allclose(a, b)

    @pytest.mark.parametrize("ws", [(0.5, 0.6), (1.2, -0.2), ()])
    def test_bad_weights(self, ws):
        with pytest.raises(ContractError):
            interpolate_styles(self.fc, [(self.s1, w) for w in ws], self.w)


def test_end_to_end_gradient():
    rng = np.random.default_rng(15)
    w = weights(rng, 3)
    fs = Tensor(rng.normal(size=(1, 3, 4, 4)))
    target = rng.normal(size=(1, 3, 4, 4))
    f = lambda t: ((multi_adapt_forward(t, fs, w) - target) ** 2).sum()
    assert finite_diff_check(f, rng.normal(size=(1, 3, 4, 4))) < 1e-4

    def through_kernel(k):
        w.ca.conv_c.data = k.data
        saved = w.ca.conv_c
        w.ca.conv_c = k
        try:
            return ((multi_adapt_forward(fs.data * 0.5, fs, w) - target) ** 2).sum()
        finally:
            w.ca.conv_c = saved
    assert finite_diff_check(through_kernel, w.ca.conv_c.data.copy()) < 1e-4
