"""Sliding-window evidence engine.

For every window position the classifier is re-run on copies of the image
whose window pixels were replaced by sampled values; the resulting marginal
class probability is compared against the original prediction on the
log2-odds scale (with Laplace correction), and that evidence value is added
to every pixel the window covers. Overlapping positions visit each pixel
many times; the per-pixel sums and visit counts form the saliency map.

Per-ROI randomness comes from counter-based Philox substreams keyed by
(seed, roi_index), and accumulation runs in canonical ROI order, so results
are bitwise independent of worker count and evaluation order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .classifier import Classifier
from .image import Image, Rect
from .patch_stats import DiscreteSampler, GaussianConditionalSampler

__all__ = [
    "EngineError",
    "WindowConfig",
    "SaliencyMap",
    "RoiRecord",
    "AnalysisReport",
    "laplace_correct",
    "weight_of_evidence",
    "roi_rng",
    "window_origins",
    "visit_count_grid",
    "marginal_class_probability",
    "analyze",
    "save_saliency_map",
    "load_saliency_map",
]


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    """Geometry and sampling parameters for one analysis run."""

    win_size: int
    pad_size: int = 2
    stride: int = 1
    samples_per_roi: int = 10
    laplace_n: int = 1
    laplace_k: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.win_size < 1:
            raise EngineError("win_size must be >= 1")
        if self.pad_size < 0:
            raise EngineError("pad_size must be >= 0")
        if self.stride < 1:
            raise EngineError("stride must be >= 1")
        if self.samples_per_roi < 1:
            raise EngineError("samples_per_roi must be >= 1")
        if self.laplace_n < 1:
            raise EngineError("laplace_n must be >= 1")
        if self.laplace_k < 2:
            raise EngineError("laplace_k must be >= 2")

    @property
    def patch_edge(self) -> int:
        return self.win_size + 2 * self.pad_size


@dataclass
class SaliencyMap:
    """Per-pixel accumulated evidence and visit counts for one class."""

    we_sum: np.ndarray
    visit_count: np.ndarray
    class_index: int
    config: WindowConfig

    def __post_init__(self):
        if self.we_sum.shape != self.visit_count.shape or self.we_sum.ndim != 2:
            raise EngineError("we_sum and visit_count must be equal 2-D grids")

    @property
    def height(self) -> int:
        return self.we_sum.shape[0]

    @property
    def width(self) -> int:
        return self.we_sum.shape[1]


@dataclass(frozen=True)
class RoiRecord:
    rect: Rect
    marginal_prob: float
    weight_of_evidence: float


@dataclass
class AnalysisReport:
    saliency: SaliencyMap
    original_probs: np.ndarray
    rois: list[RoiRecord]
    classifier_calls: int
    wall_time_s: float


def laplace_correct(p: float, n: int, k: int) -> float:
    """(p*N + 1) / (N + K); keeps probabilities strictly inside (0, 1)."""
    return (p * n + 1.0) / (n + k)


def weight_of_evidence(p_orig: float, p_marg: float, n: int, k: int) -> float:
    """log2-odds difference between the original and marginal probability.

    Both inputs are raw probabilities; Laplace correction is applied to each
    before the odds transform. Positive values mean the corrupted region was
    evidence for the class.
    """
    a = laplace_correct(p_orig, n, k)
    b = laplace_correct(p_marg, n, k)
    return math.log2(a / (1.0 - a)) - math.log2(b / (1.0 - b))


def roi_rng(seed: int, roi_index: int) -> np.random.Generator:
    """Counter-based substream for one ROI: identical regardless of which
    worker evaluates it or in what order."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, roi_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _axis_origins(length: int, win: int, stride: int) -> list[int]:
    last = length - win
    origins = list(range(0, last + 1, stride))
    if origins[-1] != last:
        origins.append(last)
    return origins


def window_origins(width: int, height: int, config: WindowConfig) -> list[tuple[int, int]]:
    """Window top-left corners, row-major. Origins step by the stride and the
    maximal origin is always included so the final row/column of positions
    touches the image edge."""
    if config.win_size > min(width, height):
        raise EngineError(
            f"win_size {config.win_size} exceeds image extent {width}x{height}"
        )
    xs = _axis_origins(width, config.win_size, config.stride)
    ys = _axis_origins(height, config.win_size, config.stride)
    return [(x, y) for y in ys for x in xs]


def visit_count_grid(width: int, height: int, config: WindowConfig) -> np.ndarray:
    """How many window positions cover each pixel. Coverage is separable, so
    the grid is the outer product of per-axis counts."""

    def axis_counts(length: int) -> np.ndarray:
        counts = np.zeros(length, dtype=np.int64)
        for o in _axis_origins(length, config.win_size, config.stride):
            counts[o : o + config.win_size] += 1
        return counts

    if config.win_size > min(width, height):
        raise EngineError(
            f"win_size {config.win_size} exceeds image extent {width}x{height}"
        )
    return np.outer(axis_counts(height), axis_counts(width))


def _window_context(image: Image, roi: Rect, pad: int):
    """Index bookkeeping for the conceptual (win + 2*pad)^2 patch around a
    window. Returns (inner, border, border_values): flat indices into the
    patch model for the window pixels and the in-bounds padding pixels, plus
    the image values observed on that padding ring. Indices ascend in
    row-major, channel-interleaved patch order, matching the window's own
    row-major order."""
    patch_edge = roi.w + 2 * pad
    channels = image.channels
    ox, oy = roi.x - pad, roi.y - pad
    rr, cc = np.meshgrid(np.arange(patch_edge), np.arange(patch_edge), indexing="ij")
    iy, ix = oy + rr, ox + cc
    inner_mask = (rr >= pad) & (rr < pad + roi.h) & (cc >= pad) & (cc < pad + roi.w)
    inbounds = (iy >= 0) & (iy < image.height) & (ix >= 0) & (ix < image.width)
    base = (rr * patch_edge + cc) * channels
    ch = np.arange(channels)
    inner = (base[inner_mask][:, None] + ch).reshape(-1)
    border_mask = inbounds & ~inner_mask
    border = (base[border_mask][:, None] + ch).reshape(-1)
    border_values = image.pixels[iy[border_mask], ix[border_mask], :].reshape(-1)
    return inner, border, border_values


def _corrupted_stack(image: Image, roi: Rect, replacements: np.ndarray) -> list[Image]:
    """One image copy per replacement row, with only the ROI pixels swapped."""
    out = []
    for row in replacements:
        pixels = image.pixels.copy()
        pixels[roi.y : roi.y + roi.h, roi.x : roi.x + roi.w, :] = row.reshape(
            roi.h, roi.w, image.channels
        )
        out.append(Image(pixels, validate=False))
    return out


def _roi_replacements(
    image: Image,
    roi: Rect,
    sampler,
    config: WindowConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray | None]:
    """(replacement rows, weights) for one ROI; weights is None in
    Monte-Carlo mode (plain average)."""
    m = roi.w * roi.h * image.channels
    if isinstance(sampler, DiscreteSampler):
        if sampler.exhaustive:
            values, weights = sampler.enumerate(m)
            return values, weights
        return sampler.draw(m, config.samples_per_roi, rng), None
    if isinstance(sampler, GaussianConditionalSampler):
        if sampler.model.patch_edge != roi.w + 2 * config.pad_size:
            raise EngineError(
                f"patch model edge {sampler.model.patch_edge} does not match "
                f"win {roi.w} + 2*pad {config.pad_size}"
            )
        if sampler.model.channels != image.channels:
            raise EngineError("patch model channel count does not match the image")
        inner, border, border_values = _window_context(image, roi, config.pad_size)
        return sampler.draw(inner, border, border_values, config.samples_per_roi, rng), None
    raise EngineError(f"unsupported sampler type {type(sampler).__name__}")


def marginal_class_probability(
    classifier: Classifier,
    image: Image,
    roi: Rect,
    sampler,
    samples: int | None = None,
    rng: np.random.Generator | None = None,
    config: WindowConfig | None = None,
) -> np.ndarray:
    """Classifier output marginalized over window replacements.

    Monte-Carlo mode averages over seeded draws; a discrete sampler in
    exhaustive mode produces the exact weighted expectation instead.
    """
    if not roi.inside(image.width, image.height):
        raise EngineError(f"roi {roi} escapes image bounds")
    if config is None:
        config = WindowConfig(
            win_size=roi.w,
            samples_per_roi=samples or 10,
            laplace_k=max(2, classifier.n_classes),
        )
    rng = rng or roi_rng(config.seed, 0)
    replacements, weights = _roi_replacements(image, roi, sampler, config, rng)
    probs = classifier.classify_batch(_corrupted_stack(image, roi, replacements))
    if weights is None:
        return probs.mean(axis=0)
    return weights @ probs


def analyze(
    classifier: Classifier,
    image: Image,
    class_index: int,
    config: WindowConfig,
    sampler,
    workers: int = 1,
    roi_chunk: int = 16,
    progress: Callable[[int, int], None] | None = None,
) -> AnalysisReport:
    """Slide a window across the image and accumulate per-pixel evidence.

    ROIs are processed in fixed chunks whose composition does not depend on
    the worker count; each ROI owns a Philox substream keyed by its index,
    and per-pixel accumulation happens afterwards in ROI order. Output is
    therefore bitwise identical for any `workers` value.
    """
    start = time.monotonic()
    if not 0 <= class_index < classifier.n_classes:
        raise EngineError(
            f"class index {class_index} outside catalog of size {classifier.n_classes}"
        )
    classifier._check_image(image)
    origins = window_origins(image.width, image.height, config)
    rects = [Rect(x, y, config.win_size, config.win_size) for x, y in origins]

    original = classifier.classify(image)
    calls = 1

    if not classifier.concurrent:
        workers = 1  # serial handles get a single dispatcher in batch order

    chunks = [
        list(range(i, min(i + roi_chunk, len(rects))))
        for i in range(0, len(rects), roi_chunk)
    ]

    def process_chunk(chunk: list[int]) -> list[tuple[int, np.ndarray, int]]:
        batch_images: list[Image] = []
        spans: list[tuple[int, int, np.ndarray | None]] = []
        for t in chunk:
            try:
                replacements, weights = _roi_replacements(
                    image, rects[t], sampler, config, roi_rng(config.seed, t)
                )
                batch_images.extend(_corrupted_stack(image, rects[t], replacements))
            except Exception as exc:
                raise EngineError(f"ROI {t} at {rects[t]}: {exc}") from exc
            spans.append((t, len(replacements), weights))
        try:
            probs = classifier.classify_batch(batch_images)
        except Exception as exc:
            raise EngineError(f"classifier failed on ROIs {chunk[0]}..{chunk[-1]}: {exc}") from exc
        out = []
        row = 0
        for t, n_rows, weights in spans:
            block = probs[row : row + n_rows]
            row += n_rows
            marginal = block.mean(axis=0) if weights is None else weights @ block
            out.append((t, marginal, n_rows))
        return out

    results: list[tuple[int, np.ndarray, int]] = []
    done = 0
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for chunk_result in pool.map(process_chunk, chunks):
                results.extend(chunk_result)
                done += len(chunk_result)
                if progress:
                    progress(done, len(rects))
    else:
        for chunk in chunks:
            chunk_result = process_chunk(chunk)
            results.extend(chunk_result)
            done += len(chunk_result)
            if progress:
                progress(done, len(rects))

    results.sort(key=lambda item: item[0])
    we_sum = np.zeros((image.height, image.width))
    visits = np.zeros((image.height, image.width), dtype=np.int64)
    rois: list[RoiRecord] = []
    p_orig = float(original[class_index])
    for t, marginal, n_rows in results:
        calls += n_rows
        p_marg = float(marginal[class_index])
        we = weight_of_evidence(p_orig, p_marg, config.laplace_n, config.laplace_k)
        rect = rects[t]
        we_sum[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] += we
        visits[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] += 1
        rois.append(RoiRecord(rect=rect, marginal_prob=p_marg, weight_of_evidence=we))

    saliency = SaliencyMap(
        we_sum=we_sum, visit_count=visits, class_index=class_index, config=config
    )
    return AnalysisReport(
        saliency=saliency,
        original_probs=original,
        rois=rois,
        classifier_calls=calls,
        wall_time_s=time.monotonic() - start,
    )


# ---------------------------------------------------------------------------
# WEM1 persistence: header `WEM1 width height class_index win_size pad_size
# stride S N K seed`, then width*height evidence sums, then visit counts.
# ---------------------------------------------------------------------------


def save_saliency_map(smap: SaliencyMap, path: str | Path) -> None:
    cfg = smap.config
    header = (
        f"WEM1 {smap.width} {smap.height} {smap.class_index} {cfg.win_size} "
        f"{cfg.pad_size} {cfg.stride} {cfg.samples_per_roi} {cfg.laplace_n} "
        f"{cfg.laplace_k} {cfg.seed}"
    )
    lines = [header]
    lines.append(" ".join(f"{v:.17g}" for v in smap.we_sum.reshape(-1)))
    lines.append(" ".join(str(int(v)) for v in smap.visit_count.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_saliency_map(path: str | Path) -> SaliencyMap:
    tokens = Path(path).read_text().split()
    if len(tokens) < 11 or tokens[0] != "WEM1":
        raise EngineError(f"{path}: not a WEM1 saliency map file")
    width, height, class_index, win, pad, stride, s, n, k, seed = (
        int(t) for t in tokens[1:11]
    )
    body = tokens[11:]
    if len(body) != 2 * width * height:
        raise EngineError(
            f"{path}: expected {2 * width * height} grid values, got {len(body)}"
        )
    we = np.array([float(t) for t in body[: width * height]]).reshape(height, width)
    visits = np.array([int(t) for t in body[width * height :]], dtype=np.int64).reshape(
        height, width
    )
    config = WindowConfig(
        win_size=win,
        pad_size=pad,
        stride=stride,
        samples_per_roi=s,
        laplace_n=n,
        laplace_k=k,
        seed=seed,
    )
    return SaliencyMap(we_sum=we, visit_count=visits, class_index=class_index, config=config)
