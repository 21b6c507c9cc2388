"""Core image representation and geometric transforms.

Pixels are kept as float64 in [0, 1] throughout; quantization to integer
samples happens only inside the codecs. Arrays are (height, width, channels)
C-order, which is row-major and channel-interleaved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image",
    "Rect",
    "Patch",
    "AugmentSpec",
    "resize_bilinear",
    "rotate",
    "hflip",
    "vflip",
    "zoom_crop",
    "apply_augmentation",
    "extract_patch",
    "replace_region",
]


class Image:
    """A dense pixel grid with 1 or 3 channels and values in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray, *, validate: bool = True):
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if validate:
            if arr.ndim != 3:
                raise ValueError(f"expected 2-D or 3-D pixel array, got {arr.ndim}-D")
            if arr.shape[2] not in (1, 3):
                raise ValueError(f"expected 1 or 3 channels, got {arr.shape[2]}")
            if arr.shape[0] < 1 or arr.shape[1] < 1:
                raise ValueError("image must have at least one pixel")
            if not np.all(np.isfinite(arr)):
                raise ValueError("pixel values must be finite")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError("pixel values must lie in [0, 1]")
        self.pixels = np.ascontiguousarray(arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def flat(self) -> np.ndarray:
        """Row-major, channel-interleaved copy of the pixel values."""
        return self.pixels.reshape(-1).copy()

    def to_rgb(self) -> "Image":
        if self.channels == 3:
            return self
        return Image(np.repeat(self.pixels, 3, axis=2), validate=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"Image({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle with top-left corner (x, y)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect extents must be positive, got {self.w}x{self.h}")

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True)
class Patch:
    """A square pixel region flattened row-major, channel-interleaved."""

    edge: int
    channels: int
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.edge * self.edge * self.channels:
            raise ValueError(
                f"patch values length {len(self.values)} != edge^2*channels = "
                f"{self.edge * self.edge * self.channels}"
            )

    def to_image(self) -> Image:
        return Image(self.values.reshape(self.edge, self.edge, self.channels))


def _axis_coords(n_out: int, n_in: int) -> np.ndarray:
    # Corner-aligned sampling: output corners map onto input corners. A
    # single-sample axis degenerates to the input midpoint.
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def _bilinear_gather(pixels: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample `pixels` at fractional coordinate grids sx, sy (same shape)."""
    h, w = pixels.shape[:2]
    sx = np.clip(sx, 0.0, w - 1)
    sy = np.clip(sy, 0.0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    top = pixels[y0, x0] * (1.0 - fx) + pixels[y0, x1] * fx
    bot = pixels[y1, x0] * (1.0 - fx) + pixels[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(image: Image, out_w: int, out_h: int) -> Image:
    """Resize with corner-aligned bilinear interpolation."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    xs = _axis_coords(out_w, image.width)
    ys = _axis_coords(out_h, image.height)
    sx, sy = np.meshgrid(xs, ys)
    return Image(_bilinear_gather(image.pixels, sx, sy), validate=False)


def rotate(image: Image, degrees: float) -> Image:
    """Rotate about the image center with bilinear resampling.

    Out-of-bounds source coordinates are clamped, so the border is filled
    with the nearest edge value. rotate(image, 0) is exactly the identity.
    """
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    cx = (image.width - 1) / 2.0
    cy = (image.height - 1) / 2.0
    xs = np.arange(image.width, dtype=np.float64) - cx
    ys = np.arange(image.height, dtype=np.float64) - cy
    dx, dy = np.meshgrid(xs, ys)
    sx = c * dx + s * dy + cx
    sy = -s * dx + c * dy + cy
    return Image(_bilinear_gather(image.pixels, sx, sy), validate=False)


def hflip(image: Image) -> Image:
    """Mirror left-right."""
    return Image(image.pixels[:, ::-1], validate=False)


def vflip(image: Image) -> Image:
    """Mirror top-bottom."""
    return Image(image.pixels[::-1, :], validate=False)


def zoom_crop(image: Image, ratio: float, offset: tuple[int, int] | None = None) -> Image:
    """Crop a ratio-scaled sub-rectangle and resize back to the input size.

    The crop is centered unless `offset` gives the top-left corner.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"zoom ratio must be in (0, 1], got {ratio}")
    cw = max(1, round(image.width * ratio))
    ch = max(1, round(image.height * ratio))
    if offset is None:
        ox = (image.width - cw) // 2
        oy = (image.height - ch) // 2
    else:
        ox, oy = offset
    if ox < 0 or oy < 0 or ox + cw > image.width or oy + ch > image.height:
        raise ValueError("zoom crop escapes image bounds")
    cropped = Image(image.pixels[oy : oy + ch, ox : ox + cw], validate=False)
    return resize_bilinear(cropped, image.width, image.height)


@dataclass(frozen=True)
class AugmentSpec:
    """Selects which randomized transforms apply_augmentation may use."""

    rotate: bool = False
    max_rotate_deg: float = 25.0
    hflip: bool = False
    vflip: bool = False
    zoom_ratio: float | None = None
    random_zoom_offset: bool = False

    def __post_init__(self):
        if self.zoom_ratio is not None and not 0.0 < self.zoom_ratio <= 1.0:
            raise ValueError(f"zoom ratio must be in (0, 1], got {self.zoom_ratio}")

    @classmethod
    def full(cls) -> "AugmentSpec":
        """All transforms enabled with the default zoom ratio 0.8."""
        return cls(rotate=True, hflip=True, vflip=True, zoom_ratio=0.8, random_zoom_offset=True)


def apply_augmentation(image: Image, spec: AugmentSpec, seed: int) -> Image:
    """Apply the seeded random transforms selected by `spec`.

    The draw order is fixed (rotation angle, hflip coin, vflip coin, zoom
    offset) so a given (spec, seed) pair always yields the same output.
    Enabled flips are applied with probability 1/2 each.
    """
    rng = np.random.default_rng(seed)
    out = image
    if spec.rotate:
        theta = rng.uniform(-spec.max_rotate_deg, spec.max_rotate_deg)
        out = rotate(out, theta)
    if spec.hflip and rng.random() < 0.5:
        out = hflip(out)
    if spec.vflip and rng.random() < 0.5:
        out = vflip(out)
    if spec.zoom_ratio is not None:
        offset = None
        if spec.random_zoom_offset:
            cw = max(1, round(out.width * spec.zoom_ratio))
            ch = max(1, round(out.height * spec.zoom_ratio))
            offset = (
                int(rng.integers(0, out.width - cw + 1)),
                int(rng.integers(0, out.height - ch + 1)),
            )
        out = zoom_crop(out, spec.zoom_ratio, offset)
    return out


def extract_patch(image: Image, rect: Rect) -> Patch:
    """Copy a square region out of the image as a flattened Patch."""
    if rect.w != rect.h:
        raise ValueError(f"patch rect must be square, got {rect.w}x{rect.h}")
    if not rect.inside(image.width, image.height):
        raise ValueError(
            f"rect {rect} escapes image bounds {image.width}x{image.height}"
        )
    block = image.pixels[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w]
    return Patch(edge=rect.w, channels=image.channels, values=block.reshape(-1).copy())


def replace_region(image: Image, rect: Rect, values: np.ndarray) -> Image:
    """Return a copy of the image with `rect` overwritten by flattened values."""
    if not rect.inside(image.width, image.height):
        raise ValueError(
            f"rect {rect} escapes image bounds {image.width}x{image.height}"
        )
    out = image.pixels.copy()
    out[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] = np.asarray(
        values, dtype=np.float64
    ).reshape(rect.h, rect.w, image.channels)
    return Image(out, validate=False)
