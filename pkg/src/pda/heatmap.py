"""Render saliency maps as diverging red/blue images.

Positive evidence renders red, negative renders blue, zero is white; the
palette is fixed so golden-image tests stay bit-exact. Normalization brings
accumulated evidence into [-1, 1] either by the absolute maximum or by a
percentile of |values| (robust to a single outlier washing out the map).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import SaliencyMap
from .image import Image

__all__ = ["RenderSpec", "normalize_saliency", "render_heatmap", "overlay"]


@dataclass(frozen=True)
class RenderSpec:
    mode: str = "symmetric_max"  # or "percentile"
    percentile_q: float = 99.0
    alpha: float = 0.5
    background: str = "white"  # or "original"

    def __post_init__(self):
        if self.mode not in ("symmetric_max", "percentile"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        if self.mode == "percentile" and not 50.0 < self.percentile_q <= 100.0:
            raise ValueError(f"percentile q must be in (50, 100], got {self.percentile_q}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.background not in ("white", "original"):
            raise ValueError(f"unknown background {self.background!r}")


def normalize_saliency(smap: SaliencyMap, spec: RenderSpec) -> np.ndarray:
    """Scale accumulated evidence into [-1, 1]; an all-zero map stays zero."""
    values = smap.we_sum
    if spec.mode == "symmetric_max":
        scale = float(np.abs(values).max())
    else:
        scale = float(np.percentile(np.abs(values), spec.percentile_q))
    if scale == 0.0:
        return np.zeros_like(values)
    return np.clip(values / scale, -1.0, 1.0)


def normalization_scale(smap: SaliencyMap, spec: RenderSpec) -> float:
    """The divisor normalize_saliency uses (0 for an all-zero map)."""
    values = smap.we_sum
    if spec.mode == "symmetric_max":
        return float(np.abs(values).max())
    return float(np.percentile(np.abs(values), spec.percentile_q))


def render_heatmap(normalized: np.ndarray, spec: RenderSpec | None = None) -> Image:
    """Map values in [-1, 1] onto white-backed diverging red/blue.

    v > 0 -> (1, 1-v, 1-v); v < 0 -> (1+v, 1+v, 1); v = 0 -> white.
    """
    del spec  # palette is fixed; parameter kept for interface symmetry
    v = np.asarray(normalized, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("normalized values must be a 2-D grid")
    if np.abs(v).max(initial=0.0) > 1.0:
        raise ValueError("normalized values must lie in [-1, 1]")
    pos = np.clip(v, 0.0, 1.0)
    neg = np.clip(-v, 0.0, 1.0)
    rgb = np.stack([1.0 - neg, 1.0 - pos - neg, 1.0 - pos], axis=2)
    return Image(rgb, validate=False)


def overlay(original: Image, heat: Image, alpha: float) -> Image:
    """Convex per-pixel blend alpha*heat + (1-alpha)*original."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    base = original.to_rgb()
    top = heat.to_rgb()
    if (base.width, base.height) != (top.width, top.height):
        raise ValueError(
            f"dimension mismatch: original {base.width}x{base.height}, "
            f"heatmap {top.width}x{top.height}"
        )
    return Image(alpha * top.pixels + (1.0 - alpha) * base.pixels, validate=False)
