import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from madapt.errors import DimensionError, FormatError
from madapt.image_io import (
    ImageBuffer, decode_image, decode_ppm, encode_ppm, from_tensor, load_image,
    resize_shorter, save_image, to_tensor,
)
from madapt.tensor import Tensor


def png_bytes(arr, mode=None):
    out = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(out, format="PNG")
    return out.getvalue()


class TestPPM:
    def test_one_white_pixel(self, tmp_path):
        p = tmp_path / "w.ppm"
        p.write_bytes(b"P6\n1 1\n255\n\xff\xff\xff")
        assert load_image(p).data.tolist() == [[[255, 255, 255]]]

    def test_header_and_payload(self):
        buf = ImageBuffer(np.arange(12).reshape(2, 2, 3))
        blob = encode_ppm(buf)
        assert blob.startswith(b"P6\n2 2\n255\n")
        assert len(blob) - len(b"P6\n2 2\n255\n") == 12
        assert blob.endswith(bytes(range(12)))

    def test_round_trip_file(self, tmp_path):
        buf = ImageBuffer(np.random.default_rng(0).integers(0, 256, (5, 7, 3)))
        p = tmp_path / "x.ppm"
        save_image(buf, p)
        assert load_image(p) == buf
        save_image(load_image(p), tmp_path / "y.ppm")
        assert (tmp_path / "y.ppm").read_bytes() == p.read_bytes()

    def test_comments_and_whitespace(self):
        blob = b"P6 # a comment\n 2\t# w\n1\r\n255\n" + bytes(6)
        assert decode_ppm(blob).data.shape == (1, 2, 3)

    def test_truncated_payload(self):
        with pytest.raises(FormatError, match="truncated"):
            decode_ppm(b"P6\n2 2\n255\n" + bytes(11))

    @pytest.mark.parametrize("blob", [
        b"P6\n2 2\n65535\n" + bytes(24), b"P6\n0 2\n255\n", b"P6\n2\n", b"P62 2 255\n" + bytes(12),
        b"P6\n99999999999 1\n255\n", b"P6\n2 2\n255", b"P6\n-2 2\n255\n",
    ])
    def test_bad_headers(self, blob):
        with pytest.raises(FormatError):
            decode_ppm(blob)

    def test_trailing_bytes_ignored(self):
        assert decode_ppm(b"P6\n1 1\n255\n" + bytes(3) + b"junk").data.shape == (1, 1, 3)


class TestDetect:
    @pytest.mark.parametrize("blob,kind", [
        (b"P3\n1 1\n255\n0 0 0", "netpbm P3"), (b"\xff\xd8\xff\xe0", "jpeg"), (b"GIF89a", "gif"),
        (b"BM....", "bmp"), (b"hello", "unknown"), (b"", "unknown"),
    ])
    def test_unsupported_names_type(self, blob, kind):
        with pytest.raises(FormatError, match=kind):
            decode_image(blob)


class TestPNG:
    def test_rgb(self):
        arr = np.random.default_rng(1).integers(0, 256, (4, 3, 3), dtype=np.uint8)
        assert np.array_equal(decode_image(png_bytes(arr)).data, arr)

    def test_rgba_drops_alpha(self):
        arr = np.random.default_rng(2).integers(0, 256, (2, 2, 4), dtype=np.uint8)
        assert np.array_equal(decode_image(png_bytes(arr)).data, arr[..., :3])

    def test_grayscale_replicated(self):
        arr = np.array([[0, 128], [200, 255]], dtype=np.uint8)
        out = decode_image(png_bytes(arr)).data
        assert np.array_equal(out, np.repeat(arr[..., None], 3, axis=2))

    def test_sixteen_bit_rejected(self):
        arr = np.array([[0, 60000]], dtype=np.uint16)
        with pytest.raises(FormatError):
            decode_image(png_bytes(arr))

    def test_corrupt(self):
        blob = png_bytes(np.zeros((4, 4, 3), dtype=np.uint8))
        with pytest.raises(FormatError):
            decode_image(blob[:30])

    def test_save_round_trip(self, tmp_path):
        buf = ImageBuffer(np.random.default_rng(3).integers(0, 256, (6, 5, 3)))
        save_image(buf, tmp_path / "x.png")
        assert load_image(tmp_path / "x.png") == buf


class TestSave:
    def test_unknown_extension(self, tmp_path):
        with pytest.raises(FormatError, match="extension"):
            save_image(ImageBuffer(np.zeros((1, 1, 3))), tmp_path / "x.jpg")
        assert list(tmp_path.iterdir()) == []

    def test_missing_directory(self, tmp_path):
        with pytest.raises(OSError):
            save_image(ImageBuffer(np.zeros((1, 1, 3))), tmp_path / "nope" / "x.ppm")

    def test_bad_buffer_shape(self):
        with pytest.raises(DimensionError):
            ImageBuffer(np.zeros((2, 2)))


class TestTensorConversion:
    def test_endpoints(self):
        t = to_tensor(ImageBuffer(np.array([[[0, 255, 0]]])))
        assert t.shape == (1, 3, 1, 1)
        assert t.data[0, :, 0, 0].tolist() == [0.0, 1.0, 0.0]

    def test_all_values_round_trip(self):
        v = np.arange(256, dtype=np.uint8)
        buf = ImageBuffer(np.stack([v, v[::-1], np.roll(v, 7)], axis=-1)[None])
        assert from_tensor(to_tensor(buf)) == buf

    def test_clamp_and_nan(self):
        t = Tensor(np.array([1.7, -0.3, np.nan]).reshape(1, 3, 1, 1))
        assert from_tensor(t).data[0, 0].tolist() == [255, 0, 0]

    def test_half_rounds_up(self):
        t = Tensor(np.full((1, 3, 1, 1), 0.5 / 255))
        assert from_tensor(t).data[0, 0, 0] == 1

    def test_wrong_channels(self):
        with pytest.raises(DimensionError):
            from_tensor(np.zeros((1, 4, 2, 2)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_random_round_trip(self, h, w, seed):
        buf = ImageBuffer(np.random.default_rng(seed).integers(0, 256, (h, w, 3)))
        assert from_tensor(to_tensor(buf)) == buf
        assert decode_ppm(encode_ppm(buf)) == buf


class TestResize:
    def test_shorter_side(self):
        buf = ImageBuffer(np.zeros((96, 128, 3)))
        out = resize_shorter(buf, 90)
        assert (out.height, out.width) == (90, 120)

    def test_portrait(self):
        out = resize_shorter(ImageBuffer(np.zeros((100, 50, 3))), 20)
        assert (out.height, out.width) == (40, 20)

    def test_noop(self):
        buf = ImageBuffer(np.zeros((8, 9, 3)))
        assert resize_shorter(buf, 8) is buf
