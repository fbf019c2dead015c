"""The full stylization network: encoder, multi-adaptation module, decoder."""

import re
import warnings

import numpy as np

from .codec import EncoderSpec, decode, encode, init_codec
from .errors import ConfigError
from .multi_adaptation import (
    AdaptationWeights, CAWeights, SAWeights, alpha_blend, interpolate_styles,
    multi_adapt_forward,
)
from .tensor import Tensor
from .whitening import WhitenConfig

SA_NAMES = ("conv1", "conv2", "conv3")
CA_NAMES = ("conv_c", "conv_s", "conv_v")
VALUE_PATHS = ("adapt.content_sa.conv3.kernel", "adapt.style_sa.conv3.kernel", "adapt.ca.conv_v.kernel")


def adaptation_shapes(channels, sa_kernel=1, ca_kernel=1):
    shapes = {}
    for block in ("content_sa", "style_sa"):
        for n in SA_NAMES:
            shapes[f"adapt.{block}.{n}.kernel"] = (channels, channels, sa_kernel, sa_kernel)
    for n in CA_NAMES:
        shapes[f"adapt.ca.{n}.kernel"] = (channels, channels, ca_kernel, ca_kernel)
    return shapes


class Model:
    """Named parameters plus the architecture they describe.

    ``params`` maps names to Tensors; the adaptation weights are views onto
    the same Tensors, so optimizer updates are seen everywhere.
    """

    def __init__(self, params, spec=EncoderSpec(), sa_kernel=1, ca_kernel=1):
        if ca_kernel not in (1, 3):
            raise ConfigError(f"ca_kernel must be 1 or 3, got {ca_kernel}")
        self.spec = spec
        self.sa_kernel = sa_kernel
        self.ca_kernel = ca_kernel
        self.params = {}
        self.load_state(params)

    @classmethod
    def initialize(cls, rng, spec=EncoderSpec(), sa_kernel=1, ca_kernel=1):
        params = init_codec(spec, rng)
        c = spec.stage_channels[3]
        for name, shape in adaptation_shapes(c, sa_kernel, ca_kernel).items():
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = rng.standard_normal(shape) * np.sqrt(1.0 / fan_in)
        return cls(params, spec, sa_kernel, ca_kernel)

    def zero_value_paths(self):
        """Zero the value projections so every adaptation block starts as the identity."""
        for name in VALUE_PATHS:
            self.params[name].data[:] = 0.0
        return self

    @classmethod
    def from_weights(cls, weights):
        """Rebuild a model, inferring the architecture from parameter shapes."""
        try:
            chans = tuple(int(weights[f"encoder.stage{i}.conv1.kernel"].shape[0]) for i in range(1, 5))
            convs = sum(1 for n in weights if re.fullmatch(r"encoder\.stage1\.conv\d+\.kernel", n))
            sa_kernel = int(weights["adapt.content_sa.conv1.kernel"].shape[-1])
            ca_kernel = int(weights["adapt.ca.conv_c.kernel"].shape[-1])
        except (KeyError, IndexError) as exc:
            raise ConfigError(f"weights are missing architecture parameter {exc}") from None
        return cls(weights, EncoderSpec(chans, convs), sa_kernel, ca_kernel)

    def expected_shapes(self):
        return {
            **self.spec.encoder_shapes(),
            **self.spec.decoder_shapes(),
            **adaptation_shapes(self.spec.stage_channels[3], self.sa_kernel, self.ca_kernel),
        }

    def load_state(self, weights):
        """Attach ``name -> array`` weights after validating every shape."""
        expected = self.expected_shapes()
        missing = sorted(set(expected) - set(weights))
        wrong = sorted(
            f"{n} (got {tuple(np.shape(_data(weights[n])))}, want {expected[n]})"
            for n in expected if n in weights and tuple(np.shape(_data(weights[n]))) != expected[n]
        )
        if missing or wrong:
            raise ConfigError(
                "weights do not match the architecture: "
                + "; ".join([f"missing {n}" for n in missing] + [f"shape {w}" for w in wrong])
            )
        extra = sorted(set(weights) - set(expected))
        if extra:
            warnings.warn(f"ignoring unknown parameters: {', '.join(extra)}", stacklevel=2)
        self.params = {
            n: Tensor(np.array(_data(weights[n]), dtype=np.float64), requires_grad=True)
            for n in expected
        }

    def state_dict(self):
        return {n: t.data for n, t in self.params.items()}

    @property
    def adaptation(self):
        p = self.params
        return AdaptationWeights(
            SAWeights(*(p[f"adapt.content_sa.{n}.kernel"] for n in SA_NAMES)),
            SAWeights(*(p[f"adapt.style_sa.{n}.kernel"] for n in SA_NAMES)),
            CAWeights(*(p[f"adapt.ca.{n}.kernel"] for n in CA_NAMES)),
        )

    def group_of(self, name):
        if name.startswith("adapt."):
            return name.split(".")[1]
        return name.split(".")[0]

    def encode(self, image, params=None):
        return encode(image, params or self.params, self.spec)

    def decode(self, f):
        return decode(f, self.params, self.spec)

    def stylize(self, content, style, alpha=1.0, wh=WhitenConfig()):
        f_c = self.encode(content).tap4
        f_s = self.encode(style).tap4
        f_cs = multi_adapt_forward(f_c, f_s, self.adaptation, wh)
        return self.decode(alpha_blend(f_cs, f_c, alpha))

    def interpolate(self, content, styles, wh=WhitenConfig()):
        """``styles`` is a list of (style image, weight)."""
        f_c = self.encode(content).tap4
        feats = [(self.encode(img).tap4, wt) for img, wt in styles]
        return self.decode(interpolate_styles(f_c, feats, self.adaptation, wh))


def _data(v):
    return v.data if isinstance(v, Tensor) else v
