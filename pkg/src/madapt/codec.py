"""Four-tap convolutional encoder, mirrored decoder and weight files.

Parameter names follow ``encoder.stage{i}.conv{j}.{kernel,bias}``,
``decoder.stage{i}.conv{j}.{kernel,bias}`` and ``decoder.out.{kernel,bias}``.

Weight file layout (all little-endian)::

    b"MADAPTW\\0"  u32 version=1  u32 count
    count x { u16 name_len, utf-8 name, u8 rank, rank x u64 dims, f32 values }

In-memory float64 values are narrowed to float32 on disk.
"""

import os
import struct
import tempfile
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DimensionError, FormatError
from .tensor import Tensor, as_tensor, conv2d, relu, upsample2x

MAGIC = b"MADAPTW\0"
VERSION = 1
MAX_RANK = 8


@dataclass(frozen=True)
class EncoderSpec:
    stage_channels: tuple = (8, 16, 32, 64)
    convs_per_stage: int = 1

    def __post_init__(self):
        if len(self.stage_channels) != 4 or min(self.stage_channels) < 1:
            raise ConfigError(f"need 4 positive stage channel counts, got {self.stage_channels}")
        if self.convs_per_stage < 1:
            raise ConfigError("convs_per_stage must be >= 1")

    def _convs(self, stage):
        # the encoder ends at the first conv of stage 4
        return 1 if stage == 4 else self.convs_per_stage

    def encoder_shapes(self):
        shapes = {}
        c_in = 3
        for i, c in enumerate(self.stage_channels, start=1):
            for j in range(1, self._convs(i) + 1):
                shapes[f"encoder.stage{i}.conv{j}.kernel"] = (c, c_in, 3, 3)
                shapes[f"encoder.stage{i}.conv{j}.bias"] = (c,)
                c_in = c
        return shapes

    def decoder_shapes(self):
        shapes = {}
        ch = self.stage_channels
        for i in (4, 3, 2, 1):
            c_in = ch[i - 1]
            c_out = ch[i - 2] if i > 1 else ch[0]
            for j in range(1, self.convs_per_stage + 1):
                last = j == self.convs_per_stage
                out = c_out if last else c_in
                shapes[f"decoder.stage{i}.conv{j}.kernel"] = (out, c_in, 3, 3)
                shapes[f"decoder.stage{i}.conv{j}.bias"] = (out,)
                c_in = out
        shapes["decoder.out.kernel"] = (3, ch[0], 3, 3)
        shapes["decoder.out.bias"] = (3,)
        return shapes


class FeatureTaps(NamedTuple):
    tap1: Tensor
    tap2: Tensor
    tap3: Tensor
    tap4: Tensor

    def layer(self, i):
        """Tap by 1-based layer index."""
        return self[i - 1]

    def select(self, index):
        return FeatureTaps(*(t[index] for t in self))


def init_codec(spec, rng):
    """He-normal kernels and zero biases for encoder and decoder."""
    params = {}
    for name, shape in {**spec.encoder_shapes(), **spec.decoder_shapes()}.items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    params["decoder.out.kernel"] *= 0.5
    params["decoder.out.bias"][:] = 0.5
    return params


def _conv(x, params, prefix, stride=1):
    k = params[prefix + ".kernel"]
    b = params[prefix + ".bias"]
    return conv2d(x, k, stride=stride, padding=1) + b.reshape(1, -1, 1, 1)


def encode(image, params, spec=EncoderSpec()):
    """Four rectified feature taps; stages 2-4 downsample by stride-2 convs."""
    image = as_tensor(image)
    if image.ndim != 4 or image.shape[1] != 3:
        raise DimensionError(f"encode expects (B, 3, H, W), got {image.shape}")
    H, W = image.shape[2:]
    if H % 8 or W % 8:
        raise DimensionError(
            f"image size {H}x{W} is not divisible by 8; pad or crop the image to a multiple of 8"
        )
    taps = []
    x = image
    for i in range(1, 5):
        for j in range(1, spec._convs(i) + 1):
            stride = 2 if (i > 1 and j == 1) else 1
            x = relu(_conv(x, params, f"encoder.stage{i}.conv{j}", stride))
            if j == 1:
                taps.append(x)
    return FeatureTaps(*taps)


def decode(f, params, spec=EncoderSpec()):
    """Mirror of ``encode``: conv+ReLU stages with three x2 upsamplings."""
    f = as_tensor(f)
    if f.ndim != 4 or f.shape[1] != spec.stage_channels[3]:
        raise DimensionError(
            f"decode expects (B, {spec.stage_channels[3]}, h, w), got {f.shape}"
        )
    x = f
    for i in (4, 3, 2, 1):
        for j in range(1, spec.convs_per_stage + 1):
            x = relu(_conv(x, params, f"decoder.stage{i}.conv{j}"))
        if i > 1:
            x = upsample2x(x)
    return _conv(x, params, "decoder.out")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_weights(weights, path):
    """Write ``name -> array`` to ``path`` atomically (temp file + rename)."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(weights))]
    for name, value in weights.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > MAX_RANK:
            raise ConfigError(f"cannot serialize parameter {name!r}")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(b"".join(chunks))
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"could not write weights to {path}: {exc}") from exc


def parse_weights(blob):
    """Decode a weight file image into ``name -> float64 array``."""
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if n < 0 or pos + n > len(view):
            raise FormatError(f"weight file truncated at byte {pos} (needed {n} more)")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(8)) != MAGIC:
        raise FormatError("bad magic: not a madapt weight file")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    weights = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = bytes(take(name_len)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"parameter name is not valid UTF-8: {exc}") from None
        (rank,) = struct.unpack("<B", take(1))
        if rank > MAX_RANK:
            raise FormatError(f"parameter {name!r} has rank {rank} > {MAX_RANK}")
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        n = 1
        for d in dims:
            n *= d
        if n * 4 > len(view) - pos:
            raise FormatError(f"weight file truncated inside parameter {name!r}")
        values = np.frombuffer(take(4 * n), dtype="<f4").astype(np.float64)
        if name in weights:
            raise FormatError(f"duplicate parameter name {name!r}")
        weights[name] = values.reshape(dims)
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last parameter")
    return weights


def load_weights(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"could not read weights from {path}: {exc}") from exc
    return parse_weights(blob)
