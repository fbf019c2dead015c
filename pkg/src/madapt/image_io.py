"""8-bit RGB image files (binary PPM and PNG) and tensor conversion."""

import io
import os
import re
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError
from .tensor import Tensor

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_MAX_PIXELS = 1 << 26  # 8192 x 8192


@dataclass
class ImageBuffer:
    """Row-major interleaved RGB pixels, ``data.shape == (height, width, 3)``."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise DimensionError(f"image buffer must be (H, W, 3), got {self.data.shape}")

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    def __eq__(self, other):
        return isinstance(other, ImageBuffer) and np.array_equal(self.data, other.data)


def _detect(blob):
    if blob.startswith(PNG_SIGNATURE):
        return "png"
    if blob[:2] == b"P6":
        return "ppm"
    if blob[:2] in (b"P1", b"P2", b"P3", b"P4", b"P5"):
        return f"netpbm {blob[:2].decode()}"
    if blob[:3] == b"\xff\xd8\xff":
        return "jpeg"
    if blob[:4] in (b"GIF8",):
        return "gif"
    if blob[:2] == b"BM":
        return "bmp"
    return "unknown"


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\d+)")


def decode_ppm(blob):
    """Parse a binary P6 file with maxval 255."""
    if blob[:2] != b"P6":
        raise FormatError("not a binary PPM (P6) file")
    pos = 2
    values = []
    for field in ("width", "height", "maxval"):
        m = _TOKEN.match(blob, pos)
        if m is None:
            raise FormatError(f"PPM header: could not read {field}")
        if m.start(1) == pos:
            raise FormatError(f"PPM header: missing whitespace before {field}")
        if len(m.group(1)) > 9:
            raise FormatError(f"PPM header: {field} value too large")
        values.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = values
    if maxval != 255:
        raise FormatError(f"PPM maxval {maxval} unsupported (only 255)")
    if width < 1 or height < 1 or width * height > _MAX_PIXELS:
        raise FormatError(f"PPM dimensions {width}x{height} invalid")
    if pos >= len(blob) or blob[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r", b"\v", b"\f"):
        raise FormatError("PPM header: expected single whitespace before pixel data")
    pos += 1
    need = width * height * 3
    if len(blob) - pos < need:
        raise FormatError(f"PPM pixel data truncated: {len(blob) - pos} of {need} bytes")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=need, offset=pos)
    return ImageBuffer(pixels.reshape(height, width, 3).copy())


def encode_ppm(buf):
    header = f"P6\n{buf.width} {buf.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(buf.data).tobytes()


def _decode_png(blob):
    from PIL import Image

    try:
        with warnings.catch_warnings():
            # oversized headers become errors instead of warnings
            warnings.simplefilter("error", Image.DecompressionBombWarning)
            im = Image.open(io.BytesIO(blob))
        with im:
            if im.width * im.height > _MAX_PIXELS:
                raise FormatError(f"PNG dimensions {im.width}x{im.height} too large")
            im.load()
            if im.mode in ("I", "I;16", "I;16B", "F"):
                raise FormatError(f"PNG mode {im.mode} (high bit depth) unsupported")
            arr = np.asarray(im.convert("RGB"))
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"PNG decode failed: {exc}") from None
    return ImageBuffer(arr)


def decode_image(blob):
    kind = _detect(blob)
    if kind == "ppm":
        return decode_ppm(blob)
    if kind == "png":
        return _decode_png(blob)
    raise FormatError(f"unsupported image format: {kind}")


def load_image(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_image(blob)


def _atomic_write(path, payload):
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_image(buf, path):
    """Write PPM (``.ppm``) or PNG (``.png``) chosen by extension."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext in (".ppm", ".pnm"):
        payload = encode_ppm(buf)
    elif ext == ".png":
        from PIL import Image

        out = io.BytesIO()
        Image.fromarray(buf.data).save(out, format="PNG")
        payload = out.getvalue()
    else:
        raise FormatError(f"cannot infer image format from extension {ext!r} (use .ppm or .png)")
    _atomic_write(path, payload)


def to_tensor(buf):
    """(1, 3, H, W) float64 in [0, 1]."""
    return Tensor(buf.data.transpose(2, 0, 1)[None].astype(np.float64) / 255.0)


def from_tensor(t):
    x = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise DimensionError(f"from_tensor converts one image, got batch of {x.shape[0]}")
        x = x[0]
    if x.ndim != 3 or x.shape[0] != 3:
        raise DimensionError(f"from_tensor needs 3 channels, got shape {x.shape}")
    scaled = np.clip(np.nan_to_num(x), 0.0, 1.0) * 255.0
    # values are non-negative, so floor(v + 0.5) rounds half away from zero
    return ImageBuffer(np.floor(scaled + 0.5).astype(np.uint8).transpose(1, 2, 0))


def resize_shorter(buf, shorter):
    """Bilinear resize so that the shorter side equals ``shorter`` pixels."""
    from PIL import Image

    h, w = buf.height, buf.width
    if h <= w:
        size = (max(1, round(w * shorter / h)), shorter)
    else:
        size = (shorter, max(1, round(h * shorter / w)))
    if size == (w, h):
        return buf
    im = Image.fromarray(buf.data).resize(size, Image.BILINEAR)
    return ImageBuffer(np.asarray(im))
