"""Labeled image collections: ingestion, stratified splits, augmentation
balancing, and the synthetic planted-feature generator used for quantitative
localization checks.

Datasets are immutable after construction. Images resolve lazily: a record
may hold inline pixels, a file path, or a base record plus an augmentation
descriptor that is materialized on access.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .codecs import load_image
from .image import AugmentSpec, Image, Rect, apply_augmentation

__all__ = [
    "ClassCatalog",
    "Record",
    "LabeledDataset",
    "DatasetError",
    "load_metadata",
    "SplitSpec",
    "stratified_split",
    "balance_with_augmentation",
    "synth_planted_dataset",
    "write_manifest",
]

DEFAULT_CLASS_NAMES = ("AKIEC", "BCC", "DF", "MEL", "NV", "BKL", "VASC")


class DatasetError(ValueError):
    """Raised for malformed metadata or inconsistent dataset operations."""


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered, unique class names; K = len(names)."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) < 2:
            raise DatasetError("catalog needs at least 2 classes")
        if len(set(self.names)) != len(self.names):
            raise DatasetError("catalog class names must be unique")

    @classmethod
    def default(cls) -> "ClassCatalog":
        return cls(DEFAULT_CLASS_NAMES)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DatasetError(f"unknown class label {name!r}") from None


@dataclass(frozen=True)
class Record:
    """One labeled example. Exactly one of (image, path) provides pixels."""

    source_id: str
    class_index: int
    image: Image | None = None
    path: str | None = None
    augment: AugmentSpec | None = None
    augment_seed: int = 0
    base_id: str | None = None
    planted_rect: Rect | None = None


class LabeledDataset:
    def __init__(self, records: list[Record] | tuple[Record, ...], catalog: ClassCatalog):
        records = tuple(records)
        ids = [r.source_id for r in records]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise DatasetError(f"duplicate source id {dup!r}")
        for r in records:
            if not 0 <= r.class_index < len(catalog):
                raise DatasetError(
                    f"record {r.source_id!r} has class index {r.class_index} "
                    f"outside catalog of size {len(catalog)}"
                )
        self.records = records
        self.catalog = catalog

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in self.catalog.names}
        for r in self.records:
            counts[self.catalog.names[r.class_index]] += 1
        return counts

    def indices_of_class(self, class_index: int) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.class_index == class_index]

    def image(self, i: int) -> Image:
        """Materialize the pixels of record i (loads files, applies augments)."""
        r = self.records[i]
        if r.image is not None:
            img = r.image
        elif r.path is not None:
            img = _load_with_extension(r.path)
        else:
            raise DatasetError(f"record {r.source_id!r} has no pixel source")
        if r.augment is not None:
            img = apply_augmentation(img, r.augment, r.augment_seed)
        return img

    def images(self) -> list[Image]:
        return [self.image(i) for i in range(len(self))]

    def labels(self) -> np.ndarray:
        return np.array([r.class_index for r in self.records], dtype=np.intp)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset([self.records[i] for i in indices], self.catalog)


def _load_with_extension(path: str) -> Image:
    p = Path(path)
    candidates = [p] if p.suffix else [p.with_suffix(s) for s in (".png", ".ppm", ".pgm", ".pnm")]
    for cand in candidates:
        if cand.exists():
            return load_image(cand)
    raise DatasetError(f"image file not found for {path!r}")


def load_metadata(
    csv_data: bytes | str,
    image_dir: str | Path,
    catalog: ClassCatalog | None = None,
) -> LabeledDataset:
    """Parse `image_id,label` metadata rows into a lazy dataset.

    Extra CSV columns are ignored. Image files resolve at access time under
    `image_dir` (the id may carry its own extension).
    """
    catalog = catalog or ClassCatalog.default()
    if isinstance(csv_data, bytes):
        csv_data = csv_data.decode("utf-8")
    reader = csv.DictReader(io.StringIO(csv_data))
    if reader.fieldnames is None or not {"image_id", "label"} <= set(reader.fieldnames):
        raise DatasetError("metadata CSV must have an `image_id,label` header")
    records = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        image_id = (row["image_id"] or "").strip()
        label = (row["label"] or "").strip()
        if not image_id:
            raise DatasetError(f"row {lineno}: empty image_id")
        if image_id in seen:
            raise DatasetError(f"row {lineno}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        if label not in catalog.names:
            raise DatasetError(f"row {lineno}: unknown label {label!r}")
        records.append(
            Record(
                source_id=image_id,
                class_index=catalog.index(label),
                path=str(Path(image_dir) / image_id),
            )
        )
    return LabeledDataset(records, catalog)


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions plus the shuffle seed."""

    train: float = 0.7
    validation: float = 0.1
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train, self.validation, self.test)
        if any(f < 0 for f in fracs):
            raise DatasetError("split fractions must be nonnegative")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise DatasetError(f"split fractions must sum to 1, got {sum(fracs)}")


def _largest_remainder(n: int, fractions: tuple[float, ...]) -> list[int]:
    quotas = [f * n for f in fractions]
    base = [int(np.floor(q)) for q in quotas]
    leftover = n - sum(base)
    # Largest remainders win the leftover items; ties resolve to the earlier
    # split so results are deterministic.
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def stratified_split(
    ds: LabeledDataset, spec: SplitSpec
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Seeded per-class shuffle, then largest-remainder apportionment."""
    rng = np.random.default_rng(spec.seed)
    fractions = (spec.train, spec.validation, spec.test)
    parts: list[list[int]] = [[], [], []]
    for ci in range(len(ds.catalog)):
        members = ds.indices_of_class(ci)
        if not members:
            continue
        order = rng.permutation(len(members))
        shuffled = [members[j] for j in order]
        sizes = _largest_remainder(len(members), fractions)
        start = 0
        for part, size in zip(parts, sizes):
            part.extend(shuffled[start : start + size])
            start += size
    return tuple(ds.subset(sorted(p)) for p in parts)  # type: ignore[return-value]


def balance_with_augmentation(
    ds: LabeledDataset,
    target_per_class: int,
    seed: int,
    policy: str = "pad",
) -> LabeledDataset:
    """Pad minority classes with lazily materialized augmented copies.

    Original records are never altered or dropped. With policy="pad" the
    target must be at least the largest class count; policy="cap" leaves
    larger classes as they are and only pads the smaller ones.
    """
    if policy not in ("pad", "cap"):
        raise DatasetError(f"unknown balance policy {policy!r}")
    counts = ds.class_counts()
    if policy == "pad" and target_per_class < max(counts.values()):
        raise DatasetError(
            f"target {target_per_class} is below the largest class count "
            f"{max(counts.values())}; use policy='cap' to allow this"
        )
    rng = np.random.default_rng(seed)
    new_records = list(ds.records)
    for ci, name in enumerate(ds.catalog.names):
        members = ds.indices_of_class(ci)
        have = len(members)
        if have == 0:
            raise DatasetError(f"class {name!r} is empty; nothing to augment")
        need = max(0, target_per_class - have)
        for k in range(need):
            base = ds.records[members[int(rng.integers(0, have))]]
            new_records.append(
                replace(
                    base,
                    source_id=f"{base.source_id}-aug{k:05d}",
                    augment=AugmentSpec.full(),
                    augment_seed=int(rng.integers(0, 2**32)),
                    base_id=base.source_id,
                )
            )
    return LabeledDataset(new_records, ds.catalog)


_QUADRANTS = ("tl", "tr", "bl", "br")


def synth_planted_dataset(
    n_per_class: int,
    image_edge: int,
    patch_edge: int,
    quadrant: str = "tl",
    noise_level: float = 0.05,
    seed: int = 0,
) -> LabeledDataset:
    """Two-class grayscale dataset with a known discriminative patch.

    Class 0 images are noisy dark background (0.2 +/- noise). Class 1 images
    additionally carry a bright patch (0.9 +/- noise) of side `patch_edge`
    at a seeded position fully inside the chosen image quadrant; its
    ground-truth Rect is stored on each record.
    """
    if quadrant not in _QUADRANTS:
        raise DatasetError(f"quadrant must be one of {_QUADRANTS}, got {quadrant!r}")
    half = image_edge // 2
    if patch_edge > half:
        raise DatasetError(
            f"patch edge {patch_edge} does not fit in a {half}x{half} quadrant"
        )
    rng = np.random.default_rng(seed)
    qx = half if quadrant in ("tr", "br") else 0
    qy = half if quadrant in ("bl", "br") else 0

    def noisy(shape, level_center):
        base = np.full(shape, level_center)
        if noise_level > 0:
            base = base + rng.uniform(-noise_level, noise_level, size=shape)
        return np.clip(base, 0.0, 1.0)

    records = []
    catalog = ClassCatalog(("background", "planted"))
    for i in range(n_per_class):
        pixels = noisy((image_edge, image_edge, 1), 0.2)
        records.append(
            Record(source_id=f"background_{i:04d}", class_index=0, image=Image(pixels))
        )
    for i in range(n_per_class):
        pixels = noisy((image_edge, image_edge, 1), 0.2)
        px = qx + int(rng.integers(0, half - patch_edge + 1))
        py = qy + int(rng.integers(0, half - patch_edge + 1))
        pixels[py : py + patch_edge, px : px + patch_edge, :] = noisy(
            (patch_edge, patch_edge, 1), 0.9
        )
        records.append(
            Record(
                source_id=f"planted_{i:04d}",
                class_index=1,
                image=Image(pixels),
                planted_rect=Rect(px, py, patch_edge, patch_edge),
            )
        )
    return LabeledDataset(records, catalog)


def write_manifest(ds: LabeledDataset, path: str | Path, splits: dict[str, str] | None = None) -> None:
    """Write `image_id,label,split[,x,y,w,h]` rows; rect columns are blank
    for records without a planted rectangle."""
    has_rects = any(r.planted_rect is not None for r in ds.records)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["image_id", "label", "split"]
        if has_rects:
            header += ["x", "y", "w", "h"]
        writer.writerow(header)
        for r in ds.records:
            row = [r.source_id, ds.catalog.names[r.class_index]]
            row.append(splits.get(r.source_id, "") if splits else "")
            if has_rects:
                if r.planted_rect is not None:
                    rect = r.planted_rect
                    row += [rect.x, rect.y, rect.w, rect.h]
                else:
                    row += ["", "", "", ""]
            writer.writerow(row)
