"""Minimal PPM/PGM (P2/P3/P5/P6) and PNG (8/16-bit gray, RGB) codecs.

Decoders scale integer samples to [0, 1] by the format's max sample value.
Encoders quantize with round-half-up and always emit 8-bit output; PPM
encoding is bit-exact deterministic so it serves as the golden format for
tests. Decode failures are reported through a small exception taxonomy so
callers can tell a bad header from a truncated payload from a mode this
codec deliberately does not handle.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .image import Image

__all__ = [
    "CodecError",
    "MalformedHeader",
    "TruncatedData",
    "UnsupportedMode",
    "decode_image",
    "encode_image",
    "decode_ppm",
    "encode_ppm",
    "decode_png",
    "encode_png",
    "load_image",
    "save_image",
]


class CodecError(ValueError):
    """Base class for image decode/encode failures."""


class MalformedHeader(CodecError):
    """The file's header or structure is not well-formed."""


class TruncatedData(CodecError):
    """The file ends before the declared payload is complete."""


class UnsupportedMode(CodecError):
    """Well-formed file, but a color mode / feature this codec skips."""


def _quantize(values: np.ndarray, maxval: int) -> np.ndarray:
    # Round half up: 0.5 maps to 128 at maxval 255.
    return np.floor(values * maxval + 0.5).astype(np.uint16 if maxval > 255 else np.uint8)


# ---------------------------------------------------------------------------
# PPM / PGM family (P2, P3 ASCII; P5, P6 binary)
# ---------------------------------------------------------------------------

_PNM_CHANNELS = {b"P2": 1, b"P3": 3, b"P5": 1, b"P6": 3}
_PNM_BINARY = {b"P5", b"P6"}


def _pnm_header_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integer tokens, honoring # comments.

    Returns the tokens and the offset one whitespace byte past the last one.
    """
    tokens: list[int] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise MalformedHeader("unexpected end of file inside PNM header")
        tok = data[start:i]
        if not tok.isdigit():
            raise MalformedHeader(f"non-numeric PNM header token {tok!r}")
        tokens.append(int(tok))
    if i >= n:
        raise TruncatedData("no pixel data after PNM header")
    return tokens, i + 1  # skip the single whitespace byte after maxval


def decode_ppm(data: bytes) -> Image:
    magic = data[:2]
    if magic not in _PNM_CHANNELS:
        raise MalformedHeader(f"not a supported PNM file (magic {magic!r})")
    channels = _PNM_CHANNELS[magic]
    (width, height, maxval), offset = _pnm_header_tokens(data[2:], 3)
    offset += 2
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid PNM dimensions {width}x{height}")
    if maxval < 1 or maxval > 65535:
        raise MalformedHeader(f"invalid PNM maxval {maxval}")
    count = width * height * channels
    if magic in _PNM_BINARY:
        sample_bytes = 2 if maxval > 255 else 1
        payload = data[offset : offset + count * sample_bytes]
        if len(payload) < count * sample_bytes:
            raise TruncatedData(
                f"PNM payload has {len(payload)} bytes, expected {count * sample_bytes}"
            )
        dtype = ">u2" if sample_bytes == 2 else np.uint8
        samples = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        fields = data[offset:].split()
        if len(fields) < count:
            raise TruncatedData(f"PNM has {len(fields)} samples, expected {count}")
        try:
            samples = np.array([int(f) for f in fields[:count]], dtype=np.float64)
        except ValueError as exc:
            raise MalformedHeader(f"non-numeric PNM sample: {exc}") from exc
    if samples.max(initial=0) > maxval:
        raise MalformedHeader("PNM sample exceeds declared maxval")
    pixels = (samples / maxval).reshape(height, width, channels)
    return Image(pixels, validate=False)


def encode_ppm(image: Image) -> bytes:
    """Encode as binary P5 (gray) or P6 (RGB) with maxval 255."""
    q = _quantize(image.pixels, 255)
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + q.tobytes()


# ---------------------------------------------------------------------------
# PNG (non-interlaced, color types 0 and 2, bit depth 8 or 16)
# ---------------------------------------------------------------------------

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _png_chunks(data: bytes):
    pos = 8
    while pos < len(data):
        if pos + 8 > len(data):
            raise TruncatedData("PNG chunk header truncated")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        ctype = data[pos + 4 : pos + 8]
        end = pos + 8 + length
        if end + 4 > len(data):
            raise TruncatedData(f"PNG chunk {ctype!r} payload truncated")
        payload = data[pos + 8 : end]
        (crc,) = struct.unpack(">I", data[end : end + 4])
        if zlib.crc32(ctype + payload) & 0xFFFFFFFF != crc:
            raise MalformedHeader(f"PNG chunk {ctype!r} CRC mismatch")
        yield ctype, payload
        pos = end + 4


def _unfilter_scanlines(raw: bytes, width: int, height: int, channels: int, sample_bytes: int) -> np.ndarray:
    bpp = channels * sample_bytes
    stride = width * bpp
    if len(raw) < (stride + 1) * height:
        raise TruncatedData("PNG pixel data shorter than expected")
    out = np.empty((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.intp)
    for y in range(height):
        row_start = y * (stride + 1)
        ftype = raw[row_start]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=row_start + 1).astype(np.intp)
        if ftype == 0:
            recon = line
        elif ftype == 1:  # Sub: cumulative sum along each byte lane
            recon = line.copy()
            for j in range(bpp):
                recon[j::bpp] = np.cumsum(recon[j::bpp]) % 256
        elif ftype == 2:  # Up
            recon = (line + prev) % 256
        elif ftype == 3:  # Average
            recon = line.copy()
            for i in range(stride):
                left = recon[i - bpp] if i >= bpp else 0
                recon[i] = (recon[i] + (left + prev[i]) // 2) % 256
        elif ftype == 4:  # Paeth
            recon = line.copy()
            for i in range(stride):
                left = recon[i - bpp] if i >= bpp else 0
                up = prev[i]
                ul = prev[i - bpp] if i >= bpp else 0
                p = left + up - ul
                pa, pb, pc = abs(p - left), abs(p - up), abs(p - ul)
                if pa <= pb and pa <= pc:
                    pred = left
                elif pb <= pc:
                    pred = up
                else:
                    pred = ul
                recon[i] = (recon[i] + pred) % 256
        else:
            raise MalformedHeader(f"unknown PNG filter type {ftype}")
        out[y] = recon.astype(np.uint8)
        prev = recon
    return out


def decode_png(data: bytes) -> Image:
    if data[:8] != _PNG_SIGNATURE:
        raise MalformedHeader("not a PNG file (bad signature)")
    header = None
    idat = bytearray()
    seen_end = False
    for ctype, payload in _png_chunks(data):
        if ctype == b"IHDR":
            if len(payload) != 13:
                raise MalformedHeader("PNG IHDR has wrong length")
            header = struct.unpack(">IIBBBBB", payload)
        elif ctype == b"IDAT":
            idat.extend(payload)
        elif ctype == b"IEND":
            seen_end = True
            break
    if header is None:
        raise MalformedHeader("PNG has no IHDR chunk")
    if not seen_end:
        raise TruncatedData("PNG has no IEND chunk")
    width, height, depth, color_type, compression, filt, interlace = header
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid PNG dimensions {width}x{height}")
    if compression != 0 or filt != 0:
        raise MalformedHeader("PNG uses a nonstandard compression/filter method")
    if interlace != 0:
        raise UnsupportedMode("interlaced PNG is not supported")
    if color_type not in (0, 2):
        raise UnsupportedMode(f"PNG color type {color_type} is not supported")
    if depth not in (8, 16):
        raise UnsupportedMode(f"PNG bit depth {depth} is not supported")
    if not idat:
        raise TruncatedData("PNG has no IDAT data")
    channels = 1 if color_type == 0 else 3
    sample_bytes = depth // 8
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise TruncatedData(f"PNG IDAT stream is corrupt: {exc}") from exc
    rows = _unfilter_scanlines(raw, width, height, channels, sample_bytes)
    if depth == 8:
        samples = rows.reshape(height, width, channels).astype(np.float64)
        maxval = 255
    else:
        hi = rows[:, 0::2].astype(np.float64)
        lo = rows[:, 1::2].astype(np.float64)
        samples = (hi * 256 + lo).reshape(height, width, channels)
        maxval = 65535
    return Image(samples / maxval, validate=False)


def _png_chunk(ctype: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + ctype
        + payload
        + struct.pack(">I", zlib.crc32(ctype + payload) & 0xFFFFFFFF)
    )


def encode_png(image: Image) -> bytes:
    """Encode as 8-bit grayscale (color type 0) or RGB (color type 2)."""
    q = _quantize(image.pixels, 255)
    color_type = 0 if image.channels == 1 else 2
    ihdr = struct.pack(">IIBBBBB", image.width, image.height, 8, color_type, 0, 0, 0)
    stride = image.width * image.channels
    body = bytearray()
    flat = q.reshape(image.height, stride)
    for y in range(image.height):
        body.append(0)  # filter: none
        body.extend(flat[y].tobytes())
    return (
        _PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(bytes(body), 9))
        + _png_chunk(b"IEND", b"")
    )


# ---------------------------------------------------------------------------
# Format dispatch
# ---------------------------------------------------------------------------

_DECODERS = {"ppm": decode_ppm, "png": decode_png}
_ENCODERS = {"ppm": encode_ppm, "png": encode_png}


def decode_image(data: bytes, fmt: str) -> Image:
    try:
        decoder = _DECODERS[fmt.lower()]
    except KeyError:
        raise UnsupportedMode(f"unknown image format {fmt!r}") from None
    return decoder(data)


def encode_image(image: Image, fmt: str) -> bytes:
    try:
        encoder = _ENCODERS[fmt.lower()]
    except KeyError:
        raise UnsupportedMode(f"unknown image format {fmt!r}") from None
    return encoder(image)


def sniff_format(data: bytes) -> str:
    if data[:8] == _PNG_SIGNATURE:
        return "png"
    if data[:2] in _PNM_CHANNELS:
        return "ppm"
    raise UnsupportedMode("unrecognized image data (not PNM or PNG)")


def load_image(path: str | Path) -> Image:
    data = Path(path).read_bytes()
    return decode_image(data, sniff_format(data))


def save_image(image: Image, path: str | Path) -> None:
    path = Path(path)
    fmt = "png" if path.suffix.lower() == ".png" else "ppm"
    path.write_bytes(encode_image(image, fmt))
