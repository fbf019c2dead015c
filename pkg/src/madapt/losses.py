"""Perceptual, identity and disentanglement losses.

Every term is a Euclidean norm (not squared) computed per sample and then
averaged over the batch, so loss weights do not depend on batch size.
"""

from dataclasses import dataclass

from .errors import ConfigError, DimensionError
from .tensor import as_tensor, channel_stats, l2norm


@dataclass(frozen=True)
class LossConfig:
    lambda_c: float = 1.0
    lambda_s: float = 5.0
    lambda_id: float = 50.0
    lambda_dis_c: float = 1.0
    lambda_dis_s: float = 1.0
    enable_disentanglement: bool = True
    content_layer: int = 4
    style_layers: tuple = (1, 2, 3, 4)

    def __post_init__(self):
        for name in ("lambda_c", "lambda_s", "lambda_id", "lambda_dis_c", "lambda_dis_s"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.content_layer not in range(1, 5) or not self.style_layers:
            raise ConfigError(f"content_layer {self.content_layer} outside taps 1..4")
        if any(i not in range(1, 5) for i in self.style_layers):
            raise ConfigError(f"style_layers {self.style_layers} outside taps 1..4")


@dataclass
class LossTerms:
    content: object
    style: object
    identity: object
    dis_content: object
    dis_style: object

    def as_dict(self):
        return {k: float(getattr(self, k).data if hasattr(getattr(self, k), "data") else getattr(self, k))
                for k in ("content", "style", "identity", "dis_content", "dis_style")}


def _batch_norm_mean(diff):
    """Mean over the batch of per-sample L2 norms."""
    b = diff.shape[0]
    return l2norm(diff.reshape(b, -1), axis=1).mean()


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes differ {a.shape} vs {b.shape}")


def content_loss(taps_cs, taps_c, layer=4):
    a, b = taps_cs.layer(layer), taps_c.layer(layer)
    _same_shape(a, b, "content_loss")
    return _batch_norm_mean(a - b)


def _stat_distance(a, b, what):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 4 or b.ndim != 4 or a.shape[:2] != b.shape[:2]:
        raise DimensionError(f"{what}: channel/batch mismatch {a.shape} vs {b.shape}")
    mu_a, var_a = channel_stats(a)
    mu_b, var_b = channel_stats(b)
    return (l2norm(mu_a - mu_b, axis=1) + l2norm(var_a - var_b, axis=1)).mean()


def style_loss(taps_cs, taps_s, layers=(1, 2, 3, 4)):
    """Sum over layers of mean and variance distances."""
    total = None
    for i in layers:
        term = _stat_distance(taps_cs.layer(i), taps_s.layer(i), "style_loss")
        total = term if total is None else total + term
    return total


def identity_loss(i_cc, i_c, i_ss, i_s):
    i_cc, i_c, i_ss, i_s = map(as_tensor, (i_cc, i_c, i_ss, i_s))
    _same_shape(i_cc, i_c, "identity_loss (content)")
    _same_shape(i_ss, i_s, "identity_loss (style)")
    return _batch_norm_mean(i_cc - i_c) + _batch_norm_mean(i_ss - i_s)


def disentanglement_losses(taps_c_s1, taps_c_s2, taps_s_c1, taps_s_c2, cfg=LossConfig()):
    """(content term at the content layer, style-statistics term over style layers)."""
    a, b = taps_c_s1.layer(cfg.content_layer), taps_c_s2.layer(cfg.content_layer)
    _same_shape(a, b, "dis_content")
    dis_content = _batch_norm_mean(a - b)
    dis_style = None
    for i in cfg.style_layers:
        term = _stat_distance(taps_s_c1.layer(i), taps_s_c2.layer(i), "dis_style")
        dis_style = term if dis_style is None else dis_style + term
    return dis_content, dis_style


def total_loss(terms, cfg=LossConfig()):
    total = (cfg.lambda_c * terms.content + cfg.lambda_id * terms.identity
             + cfg.lambda_s * terms.style)
    if cfg.enable_disentanglement:
        total = total + cfg.lambda_dis_c * terms.dis_content + cfg.lambda_dis_s * terms.dis_style
    return total
