import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pda.codecs import (
    MalformedHeader,
    TruncatedData,
    UnsupportedMode,
    decode_image,
    decode_png,
    decode_ppm,
    encode_image,
    encode_png,
    encode_ppm,
    load_image,
    save_image,
    sniff_format,
)
from pda.image import Image


def png_bytes(width, height, depth, color_type, raw_rows, interlace=0):
    """Hand-rolled PNG writer, independent of the codec under test."""

    def chunk(ctype, payload):
        return (
            struct.pack(">I", len(payload))
            + ctype
            + payload
            + struct.pack(">I", zlib.crc32(ctype + payload) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", width, height, depth, color_type, 0, 0, interlace)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw_rows))
        + chunk(b"IEND", b"")
    )


class TestPpmDecode:
    def test_p3_all_max_maps_to_one(self):
        data = b"P3\n2 2\n255\n" + b" ".join([b"255"] * 12)
        img = decode_ppm(data)
        assert (img.width, img.height, img.channels) == (2, 2, 3)
        assert np.all(img.pixels == 1.0)

    def test_p2_zero_sample(self):
        img = decode_ppm(b"P2\n1 1\n255\n0\n")
        assert img.channels == 1
        assert img.pixels[0, 0, 0] == 0.0

    def test_p3_two_pixels_hand_decoded(self):
        data = b"P3\n2 1\n255\n255 0 0 0 255 0\n"
        img = decode_ppm(data)
        assert np.array_equal(img.pixels[0, 0], [1.0, 0.0, 0.0])
        assert np.array_equal(img.pixels[0, 1], [0.0, 1.0, 0.0])

    def test_p5_p6_binary_payloads(self):
        img = decode_ppm(b"P5\n2 1\n255\n" + bytes([0, 255]))
        assert np.array_equal(img.pixels.reshape(-1), [0.0, 1.0])
        img = decode_ppm(b"P6\n1 1\n255\n" + bytes([255, 0, 128]))
        assert np.allclose(img.pixels.reshape(-1), [1.0, 0.0, 128 / 255])

    def test_sixteen_bit_maxval(self):
        data = b"P5\n1 1\n65535\n" + struct.pack(">H", 32768)
        assert decode_ppm(data).pixels[0, 0, 0] == 32768 / 65535

    def test_comments_in_header(self):
        img = decode_ppm(b"P2\n# a comment\n1 1\n# another\n255\n7\n")
        assert img.pixels[0, 0, 0] == 7 / 255

    def test_malformed_header(self):
        with pytest.raises(MalformedHeader):
            decode_ppm(b"P9\n1 1\n255\n0")
        with pytest.raises(MalformedHeader):
            decode_ppm(b"P2\n1 x\n255\n0")

    def test_truncated_payload(self):
        with pytest.raises(TruncatedData):
            decode_ppm(b"P6\n2 2\n255\n\x00\x00\x00")
        with pytest.raises(TruncatedData):
            decode_ppm(b"P3\n2 2\n255\n1 2 3")


class TestPpmEncode:
    def test_half_gray_rounds_up_to_128(self):
        data = encode_ppm(Image(np.array([[0.5]])))
        assert data == b"P5\n1 1\n255\n" + bytes([128])

    def test_deterministic_bytes(self, rng):
        img = Image(rng.random((5, 4, 3)))
        assert encode_ppm(img) == encode_ppm(img)

    @given(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3]), st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_roundtrip_quantization_bound(self, w, h, c, seed):
        img = Image(np.random.default_rng(seed).random((h, w, c)))
        back = decode_ppm(encode_ppm(img))
        assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255


class TestPngRoundtrip:
    def test_roundtrip_gray_and_rgb(self, rng):
        for c in (1, 3):
            img = Image(rng.random((6, 5, c)))
            back = decode_png(encode_png(img))
            assert back.channels == c
            assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255

    def test_deterministic_bytes(self, rng):
        img = Image(rng.random((3, 3, 3)))
        assert encode_png(img) == encode_png(img)

    def test_sixteen_bit_gray_decode(self):
        rows = b"\x00" + struct.pack(">HH", 0, 65535)
        img = decode_png(png_bytes(2, 1, 16, 0, rows))
        assert np.array_equal(img.pixels.reshape(-1), [0.0, 1.0])


class TestPngFilters:
    def test_all_filter_types_reconstruct(self):
        # One 3-pixel gray row per filter type; expected values hand-computed
        # from the filter definitions.
        raw = bytes(
            [0, 10, 20, 30]  # none
            + [1, 10, 10, 10]  # sub -> 10 20 30
            + [2, 1, 2, 3]  # up -> 11 22 33
            + [3, 4, 5, 6]  # average -> 9 20 32
            + [4, 7, 8, 9]  # paeth -> 16 28 41
        )
        img = decode_png(png_bytes(3, 5, 8, 0, raw))
        expected = np.array(
            [
                [10, 20, 30],
                [11, 22, 33],
                [9, 20, 32],
                [16, 28, 41],
            ]
        )
        assert np.array_equal((img.pixels[1:, :, 0] * 255).round(), expected)
        assert np.array_equal((img.pixels[0, :, 0] * 255).round(), [10, 20, 30])

    def test_sub_filter_rgb_uses_channel_lanes(self):
        raw = bytes([1, 100, 2, 3, 50, 1, 1])
        img = decode_png(png_bytes(2, 1, 8, 2, raw))
        assert np.array_equal((img.pixels[0] * 255).round(), [[100, 2, 3], [150, 3, 4]])


class TestPngErrors:
    def test_bad_signature(self):
        with pytest.raises(MalformedHeader):
            decode_png(b"NOPE" + b"\x00" * 20)

    def test_crc_mismatch(self):
        data = bytearray(encode_png(Image(np.zeros((2, 2, 1)))))
        data[-5] ^= 0xFF  # corrupt IEND CRC
        with pytest.raises(MalformedHeader):
            decode_png(bytes(data))

    def test_truncated_idat(self):
        good = encode_png(Image(np.zeros((4, 4, 1))))
        with pytest.raises(TruncatedData):
            decode_png(good[:40])

    def test_unsupported_color_modes(self):
        with pytest.raises(UnsupportedMode):
            decode_png(png_bytes(1, 1, 8, 6, b"\x00\x00\x00\x00\x00"))  # RGBA
        with pytest.raises(UnsupportedMode):
            decode_png(png_bytes(1, 1, 8, 3, b"\x00\x00"))  # palette
        with pytest.raises(UnsupportedMode):
            decode_png(png_bytes(1, 1, 8, 0, b"\x00\x00", interlace=1))

    def test_unsupported_bit_depth(self):
        with pytest.raises(UnsupportedMode):
            decode_png(png_bytes(8, 1, 1, 0, b"\x00\x00"))


class TestDispatchAndFiles:
    def test_decode_encode_named_formats(self, rng):
        img = Image(rng.random((2, 2, 3)))
        for fmt in ("ppm", "png"):
            back = decode_image(encode_image(img, fmt), fmt)
            assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255

    def test_unknown_format_rejected(self, rng):
        img = Image(rng.random((1, 1, 1)))
        with pytest.raises(UnsupportedMode):
            encode_image(img, "jpeg")

    def test_sniffing(self, rng):
        img = Image(rng.random((2, 2, 1)))
        assert sniff_format(encode_png(img)) == "png"
        assert sniff_format(encode_ppm(img)) == "ppm"
        with pytest.raises(UnsupportedMode):
            sniff_format(b"garbage")

    def test_load_save_by_extension(self, rng, tmp_path):
        img = Image(rng.random((3, 5, 3)))
        for name in ("x.png", "x.ppm"):
            save_image(img, tmp_path / name)
            back = load_image(tmp_path / name)
            assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255
