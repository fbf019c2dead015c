"""Content/style self-adaptation and co-adaptation attention blocks.

All three blocks project with bias-free convolutions that keep the channel
count, flatten spatial positions to N = H*W, build a row-softmax attention
map and add the attended values back onto a residual input:

* content SA (position-wise):  A_c  = softmax(q^T k),  N x N,  out = v A_c^T + f_c
* style SA (channel-wise):     A_s  = softmax(q k^T),  C x C,  out = A_s^T v + f_s
* co-adaptation:               A_cs = softmax(q^T k),  Nc x Ns, out = v A_cs^T + f_cc

Queries/keys of the content SA and of the co-adaptation block are computed
from whitened features; value paths always see the raw features.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, as_tensor, conv2d, softmax_rows
from .whitening import WhitenConfig, zca_whiten


def _kernel_size(kernels):
    sizes = {k.shape[-1] for k in kernels}
    channels = {(k.shape[0], k.shape[1]) for k in kernels}
    if len(sizes) != 1 or len(channels) != 1:
        raise ConfigError(f"projection kernels disagree: {[k.shape for k in kernels]}")
    (o, c), = channels
    if o != c:
        raise ConfigError(f"projections must preserve channels, got {o}x{c}")
    return sizes.pop()


@dataclass
class SAWeights:
    conv1: Tensor
    conv2: Tensor
    conv3: Tensor

    def __post_init__(self):
        _ = self.kernel_size  # validates the kernel shapes

    @property
    def kernel_size(self):
        return _kernel_size((self.conv1, self.conv2, self.conv3))


@dataclass
class CAWeights:
    conv_c: Tensor
    conv_s: Tensor
    conv_v: Tensor

    def __post_init__(self):
        _ = self.kernel_size  # validates the kernel shapes

    @property
    def kernel_size(self):
        k = _kernel_size((self.conv_c, self.conv_s, self.conv_v))
        if k not in (1, 3):
            raise ConfigError(f"co-adaptation kernel size must be 1 or 3, got {k}")
        return k


@dataclass
class AdaptationWeights:
    content_sa: SAWeights
    style_sa: SAWeights
    ca: CAWeights


def _project(x, kernel):
    k = kernel.shape[-1]
    return conv2d(x, kernel, stride=1, padding=(k - 1) // 2)


def _check_features(f, kernel, what):
    if f.ndim != 4:
        raise DimensionError(f"{what} features must be (B, C, H, W), got {f.shape}")
    if f.shape[1] != kernel.shape[1]:
        raise DimensionError(
            f"{what} features have {f.shape[1]} channels but weights expect {kernel.shape[1]}"
        )


def content_sa_forward(f_c, w, wh=WhitenConfig(), return_attention=False):
    f_c = as_tensor(f_c)
    _check_features(f_c, w.conv1, "content")
    B, C, H, W = f_c.shape
    n = H * W
    fw = zca_whiten(f_c, wh)
    q = _project(fw, w.conv1).reshape(B, C, n)
    k = _project(fw, w.conv2).reshape(B, C, n)
    v = _project(f_c, w.conv3).reshape(B, C, n)
    attn = softmax_rows(q.mT @ k)
    out = (v @ attn.mT).reshape(B, C, H, W) + f_c
    return (out, attn) if return_attention else out


def style_sa_forward(f_s, w, return_attention=False):
    f_s = as_tensor(f_s)
    _check_features(f_s, w.conv1, "style")
    B, C, H, W = f_s.shape
    n = H * W
    q = _project(f_s, w.conv1).reshape(B, C, n)
    k = _project(f_s, w.conv2).reshape(B, C, n)
    v = _project(f_s, w.conv3).reshape(B, C, n)
    attn = softmax_rows(q @ k.mT)
    out = (attn.mT @ v).reshape(B, C, H, W) + f_s
    return (out, attn) if return_attention else out


def co_adaptation_forward(f_cc, f_ss, w, wh=WhitenConfig(), return_attention=False):
    f_cc, f_ss = as_tensor(f_cc), as_tensor(f_ss)
    _check_features(f_cc, w.conv_c, "content")
    _check_features(f_ss, w.conv_s, "style")
    if f_cc.shape[0] != f_ss.shape[0]:
        raise DimensionError(f"batch sizes differ: {f_cc.shape[0]} vs {f_ss.shape[0]}")
    B, C, Hc, Wc = f_cc.shape
    _, _, Hs, Ws = f_ss.shape
    q = _project(zca_whiten(f_cc, wh), w.conv_c).reshape(B, C, Hc * Wc)
    k = _project(zca_whiten(f_ss, wh), w.conv_s).reshape(B, C, Hs * Ws)
    v = _project(f_ss, w.conv_v).reshape(B, C, Hs * Ws)
    attn = softmax_rows(q.mT @ k)
    f_rs = (v @ attn.mT).reshape(B, C, Hc, Wc)
    out = f_rs + f_cc
    return (out, attn) if return_attention else out


def multi_adapt_forward(f_c, f_s, w, wh=WhitenConfig()):
    """Stylized features with the content input's shape."""
    f_cc = content_sa_forward(f_c, w.content_sa, wh)
    f_ss = style_sa_forward(f_s, w.style_sa)
    return co_adaptation_forward(f_cc, f_ss, w.ca, wh)


def alpha_blend(f_cs, f_c, alpha):
    """Content/style trade-off: alpha * f_cs + (1 - alpha) * f_c."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    f_cs, f_c = as_tensor(f_cs), as_tensor(f_c)
    if f_cs.shape != f_c.shape:
        raise DimensionError(f"alpha_blend shapes differ: {f_cs.shape} vs {f_c.shape}")
    if alpha == 0.0:
        return f_c
    if alpha == 1.0:
        return f_cs
    return f_cs * alpha + f_c * (1.0 - alpha)


def interpolate_styles(f_c, styles, w, wh=WhitenConfig()):
    """Convex combination of stylized features over ``[(f_s, weight), ...]``."""
    if not styles:
        raise ContractError("interpolate_styles needs at least one style")
    weights = np.array([float(wt) for _, wt in styles])
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ContractError(f"style weights must be non-negative and sum to 1, got {weights.tolist()}")
    out = None
    for f_s, wt in styles:
        term = multi_adapt_forward(f_c, f_s, w, wh) * float(wt)
        out = term if out is None else out + term
    return out
