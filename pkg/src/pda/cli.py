"""Batch command-line surface.

Every subcommand runs non-interactively, emits files, and writes the fully
resolved key=value run configuration next to its outputs so runs are
diffable and reproducible. A `--config FILE` of key=value lines can seed any
analyze/sweep run; explicit flags override file values. All randomness flows
from --seed. Errors exit nonzero with one machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import (
    Classifier,
    ConstantClassifier,
    LinearSoftmaxClassifier,
    dataset_accuracy,
    load_weights,
    save_weights,
    train_linear_softmax,
)
from .codecs import load_image, save_image
from .dataset import (
    ClassCatalog,
    DEFAULT_CLASS_NAMES,
    SplitSpec,
    load_metadata,
    stratified_split,
    synth_planted_dataset,
    write_manifest,
)
from .engine import (
    WindowConfig,
    analyze,
    load_saliency_map,
    save_saliency_map,
)
from .external import ExternalClassifier, run_conformance_check
from .heatmap import (
    RenderSpec,
    normalization_scale,
    normalize_saliency,
    overlay,
    render_heatmap,
)
from .image import Image
from .patch_stats import (
    DiscreteSampler,
    GaussianConditionalSampler,
    fit_patch_gaussian,
    load_patch_gaussian,
    save_patch_gaussian,
)

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# key=value run configuration
# ---------------------------------------------------------------------------


def read_kv_config(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv_config(path: str | Path, values: dict) -> None:
    lines = [f"{k}={values[k]}" for k in sorted(values)]
    Path(path).write_text("\n".join(lines) + "\n")


class _Resolver:
    """Merge CLI flags over config-file values over defaults, and remember
    the fully resolved mapping for the side-car config file."""

    def __init__(self, args: argparse.Namespace, allowed: set[str]):
        self.args = args
        self.file_cfg: dict[str, str] = {}
        if getattr(args, "config", None):
            self.file_cfg = read_kv_config(args.config)
            unknown = set(self.file_cfg) - allowed
            if unknown:
                raise CliError(
                    f"unknown config key(s): {', '.join(sorted(unknown))}"
                )
        self.resolved: dict[str, str] = {}

    def get(self, key: str, conv, default=None, required: bool = False):
        flag = getattr(self.args, key.replace("-", "_"))
        if flag is not None:
            value = flag
        elif key in self.file_cfg:
            raw = self.file_cfg[key]
            value = (raw.lower() in ("1", "true", "yes")) if conv is bool else conv(raw)
        else:
            value = default
        if value is None and required:
            raise CliError(f"missing required option --{key}")
        if value is not None:
            self.resolved[key] = value
        return value


# ---------------------------------------------------------------------------
# spec-string parsing helpers
# ---------------------------------------------------------------------------


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError as exc:
        raise CliError(f"bad number list {text!r}: {exc}") from None


def _catalog_for(k: int, classes_arg: str | None) -> ClassCatalog:
    if classes_arg:
        names = tuple(n.strip() for n in classes_arg.split(","))
        if len(names) != k:
            raise CliError(f"--classes names {len(names)} classes, classifier has {k}")
        return ClassCatalog(names)
    if k == len(DEFAULT_CLASS_NAMES):
        return ClassCatalog.default()
    return ClassCatalog(tuple(f"class{i}" for i in range(k)))


def build_classifier(spec: str, image: Image, classes_arg: str | None) -> Classifier:
    """constant:<p1,p2,...> | uniform:<K> | lsw:<weights file> | external:<command>"""
    kind, _, rest = spec.partition(":")
    w, h, c = image.width, image.height, image.channels
    if kind == "constant":
        probs = _parse_floats(rest)
        return ConstantClassifier(probs, _catalog_for(len(probs), classes_arg), w, h, c)
    if kind == "uniform":
        k = int(rest) if rest else len(DEFAULT_CLASS_NAMES)
        return ConstantClassifier.uniform(_catalog_for(k, classes_arg), w, h, c)
    if kind == "lsw":
        weights = load_weights(rest)
        catalog = _catalog_for(weights.n_classes, classes_arg)
        return LinearSoftmaxClassifier(weights, catalog, w, h, c)
    if kind == "external":
        if not rest:
            raise CliError("external classifier needs a launch command")
        catalog = None
        if classes_arg:
            catalog = ClassCatalog(tuple(n.strip() for n in classes_arg.split(",")))
        return ExternalClassifier(rest, catalog=catalog, width=w, height=h, channels=c)
    raise CliError(f"unknown classifier spec {spec!r}")


def resolve_class(catalog: ClassCatalog, name: str) -> int:
    if name in catalog.names:
        return catalog.index(name)
    try:
        idx = int(name)
    except ValueError:
        raise CliError(
            f"unknown class {name!r}; catalog is {', '.join(catalog.names)}"
        ) from None
    if not 0 <= idx < len(catalog):
        raise CliError(f"class index {idx} outside catalog of size {len(catalog)}")
    return idx


def build_sampler(res: _Resolver, channels: int, *, stats_path: str | None):
    sampler_kind = res.get("sampler", str, "gaussian")
    if sampler_kind == "gaussian":
        if not stats_path:
            raise CliError("gaussian sampler needs --stats FILE (see fit-stats)")
        return GaussianConditionalSampler(load_patch_gaussian(stats_path))
    if sampler_kind == "const":
        value = res.get("value", float, 0.5)
        return DiscreteSampler([value], exhaustive=True)
    if sampler_kind == "discrete":
        support = _parse_floats(res.get("support", str, required=True))
        weights_arg = res.get("weights", str)
        weights = _parse_floats(weights_arg) if weights_arg else None
        mc = res.get("mc", bool, False)
        return DiscreteSampler(support, weights, exhaustive=not mc)
    raise CliError(f"unknown sampler {sampler_kind!r} (gaussian, const, discrete)")


def _progress_printer(total: int):
    if not sys.stderr.isatty():
        return None

    def update(done: int, total_rois: int) -> None:
        print(f"\r{done}/{total_rois}", end="", file=sys.stderr)
        if done == total_rois:
            print(file=sys.stderr)

    del total
    return update


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PDA_WORKERS", "1")))
    except ValueError:
        return 1


def _write_report(path: Path, report, catalog: ClassCatalog) -> None:
    lines = [
        f"class_index={report.saliency.class_index}",
        f"class_name={catalog.names[report.saliency.class_index]}",
        "original_probs=" + " ".join(f"{p:.6f}" for p in report.original_probs),
        f"roi_count={len(report.rois)}",
        f"classifier_calls={report.classifier_calls}",
        f"wall_time_s={report.wall_time_s:.3f}",
        f"we_sum_min={report.saliency.we_sum.min():.6g}",
        f"we_sum_max={report.saliency.we_sum.max():.6g}",
    ]
    top = sorted(report.rois, key=lambda r: -r.weight_of_evidence)[:5]
    for i, roi in enumerate(top):
        lines.append(
            f"top{i}=x:{roi.rect.x} y:{roi.rect.y} we:{roi.weight_of_evidence:.6g} "
            f"marginal:{roi.marginal_prob:.6g}"
        )
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

ANALYZE_KEYS = {
    "image", "classifier", "class", "classes", "stats", "sampler", "value",
    "support", "weights", "mc", "win", "pad", "stride", "samples", "seed",
    "laplace-n", "workers", "out", "report",
}


def cmd_analyze(args: argparse.Namespace) -> int:
    res = _Resolver(args, ANALYZE_KEYS)
    image_path = res.get("image", str, required=True)
    out_path = Path(res.get("out", str, required=True))
    image = load_image(image_path)
    classifier = build_classifier(
        res.get("classifier", str, required=True), image, res.get("classes", str)
    )
    class_index = resolve_class(classifier.catalog, res.get("class", str, required=True))
    stats_path = res.get("stats", str)
    sampler = build_sampler(res, image.channels, stats_path=stats_path)
    config = WindowConfig(
        win_size=res.get("win", int, 15),
        pad_size=res.get("pad", int, 2),
        stride=res.get("stride", int, 1),
        samples_per_roi=res.get("samples", int, 10),
        laplace_n=res.get("laplace-n", int, 1000),
        laplace_k=classifier.n_classes,
        seed=res.get("seed", int, 0),
    )
    workers = res.get("workers", int, _default_workers())
    report_path = Path(res.get("report", str, str(out_path) + ".report.txt"))
    try:
        report = analyze(
            classifier, image, class_index, config, sampler,
            workers=workers, progress=_progress_printer(0),
        )
    finally:
        classifier.close()
    save_saliency_map(report.saliency, out_path)
    _write_report(report_path, report, classifier.catalog)
    write_kv_config(str(out_path) + ".cfg", res.resolved)
    print(f"wrote {out_path}")
    return 0


SWEEP_KEYS = {
    "image", "classifier", "class", "classes", "wins", "pad", "stride",
    "samples", "seed", "laplace-n", "workers", "out-dir", "sampler", "value",
    "support", "weights", "mc", "fit-images", "max-patches", "epsilon",
}


def cmd_sweep(args: argparse.Namespace) -> int:
    res = _Resolver(args, SWEEP_KEYS)
    image_path = res.get("image", str, required=True)
    out_dir = Path(res.get("out-dir", str, required=True))
    out_dir.mkdir(parents=True, exist_ok=True)
    wins = [int(v) for v in res.get("wins", str, "5,10,15,20").split(",")]
    image = load_image(image_path)
    classifier = build_classifier(
        res.get("classifier", str, required=True), image, res.get("classes", str)
    )
    class_index = resolve_class(classifier.catalog, res.get("class", str, required=True))
    sampler_kind = res.get("sampler", str, "gaussian")
    fit_dir = res.get("fit-images", str)
    seed = res.get("seed", int, 0)
    pad = res.get("pad", int, 2)
    workers = res.get("workers", int, _default_workers())
    try:
        for win in wins:
            if sampler_kind == "gaussian":
                if not fit_dir:
                    raise CliError("sweep with the gaussian sampler needs --fit-images DIR")
                corpus = _load_image_dir(fit_dir)
                model = fit_patch_gaussian(
                    corpus,
                    patch_edge=win + 2 * pad,
                    max_patches=res.get("max-patches", int, 2000),
                    epsilon=res.get("epsilon", float, 1e-4),
                    seed=seed,
                )
                sampler = GaussianConditionalSampler(model)
            else:
                sampler = build_sampler(res, image.channels, stats_path=None)
            config = WindowConfig(
                win_size=win,
                pad_size=pad,
                stride=res.get("stride", int, 1),
                samples_per_roi=res.get("samples", int, 10),
                laplace_n=res.get("laplace-n", int, 1000),
                laplace_k=classifier.n_classes,
                seed=seed,
            )
            report = analyze(
                classifier, image, class_index, config, sampler,
                workers=workers, progress=_progress_printer(0),
            )
            map_path = out_dir / f"map_w{win}.wem"
            save_saliency_map(report.saliency, map_path)
            print(f"wrote {map_path}")
    finally:
        classifier.close()
    res.resolved["wins"] = ",".join(str(w) for w in wins)
    write_kv_config(out_dir / "sweep.cfg", res.resolved)
    return 0


def _load_image_dir(directory: str | Path) -> list[Image]:
    paths = sorted(
        p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise CliError(f"no images ({', '.join(IMAGE_SUFFIXES)}) in {directory}")
    return [load_image(p) for p in paths]


def cmd_fit_stats(args: argparse.Namespace) -> int:
    corpus = _load_image_dir(args.images)
    model = fit_patch_gaussian(
        corpus,
        patch_edge=args.patch_edge,
        max_patches=args.max_patches,
        epsilon=args.epsilon,
        seed=args.seed,
    )
    save_patch_gaussian(model, args.out)
    write_kv_config(
        args.out + ".cfg",
        {
            "images": args.images,
            "patch-edge": args.patch_edge,
            "max-patches": args.max_patches,
            "epsilon": args.epsilon,
            "seed": args.seed,
            "out": args.out,
        },
    )
    print(f"wrote {args.out} (M={model.dim}, samples={model.sample_count})")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    smap = load_saliency_map(args.map)
    if args.normalize == "symmetric_max":
        spec = RenderSpec(mode="symmetric_max", alpha=args.alpha)
    elif args.normalize.startswith("percentile:"):
        spec = RenderSpec(
            mode="percentile",
            percentile_q=float(args.normalize.split(":", 1)[1]),
            alpha=args.alpha,
        )
    elif args.normalize.startswith("p") and args.normalize[1:].replace(".", "", 1).isdigit():
        spec = RenderSpec(mode="percentile", percentile_q=float(args.normalize[1:]), alpha=args.alpha)
    else:
        raise CliError(f"unknown normalization {args.normalize!r}")
    values = normalize_saliency(smap, spec)
    heat = render_heatmap(values, spec)
    if args.overlay:
        heat = overlay(load_image(args.overlay), heat, args.alpha)
    save_image(heat, args.out)
    if args.sidecar:
        Path(args.sidecar).write_text(
            f"normalize={args.normalize}\nscale={normalization_scale(smap, spec):.17g}\n"
        )
    write_kv_config(
        args.out + ".cfg",
        {
            "map": args.map,
            "normalize": args.normalize,
            "alpha": args.alpha,
            "overlay": args.overlay or "",
            "out": args.out,
        },
    )
    print(f"wrote {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = synth_planted_dataset(
        n_per_class=args.n,
        image_edge=args.edge,
        patch_edge=args.patch,
        quadrant=args.quadrant,
        noise_level=args.noise,
        seed=args.seed,
    )
    for i, record in enumerate(ds.records):
        save_image(ds.image(i), out_dir / f"{record.source_id}.png")
    write_manifest(ds, out_dir / "manifest.csv")
    write_kv_config(
        out_dir / "synth.cfg",
        {
            "n": args.n,
            "edge": args.edge,
            "patch": args.patch,
            "quadrant": args.quadrant,
            "noise": args.noise,
            "seed": args.seed,
            "out": args.out,
        },
    )
    print(f"wrote {len(ds)} images + manifest to {out_dir}")
    return 0


def _catalog_from_labels(labels: list[str], classes_arg: str | None) -> ClassCatalog:
    if classes_arg:
        return ClassCatalog(tuple(n.strip() for n in classes_arg.split(",")))
    unique = set(labels)
    if unique <= set(DEFAULT_CLASS_NAMES):
        return ClassCatalog.default()
    return ClassCatalog(tuple(sorted(unique)))


def cmd_train_baseline(args: argparse.Namespace) -> int:
    data_dir = Path(args.data)
    manifest = Path(args.manifest) if args.manifest else data_dir / "manifest.csv"
    text = manifest.read_text()
    labels = [row["label"] for row in csv.DictReader(text.splitlines())]
    catalog = _catalog_from_labels(labels, args.classes)
    ds = load_metadata(text, data_dir, catalog)
    fracs = _parse_floats(args.split)
    if len(fracs) != 3:
        raise CliError("--split needs three comma-separated fractions")
    train, val, test = stratified_split(
        ds, SplitSpec(train=fracs[0], validation=fracs[1], test=fracs[2], seed=args.seed)
    )
    result = train_linear_softmax(
        train, epochs=args.epochs, learning_rate=args.lr, l2=args.l2, seed=args.seed
    )
    save_weights(result.weights, args.out)
    first = train.image(0)
    clf = LinearSoftmaxClassifier(
        result.weights, catalog, first.width, first.height, first.channels
    )
    log_lines = [f"epoch {i} loss {v:.17g}" for i, v in enumerate(result.losses)]
    for name, part in (("train", train), ("validation", val), ("test", test)):
        if len(part):
            log_lines.append(f"{name}_accuracy {dataset_accuracy(clf, part):.6f}")
    Path(args.out + ".log").write_text("\n".join(log_lines) + "\n")
    splits = {}
    for name, part in (("train", train), ("validation", val), ("test", test)):
        splits.update({r.source_id: name for r in part})
    write_manifest(ds, args.out + ".splits.csv", splits)
    write_kv_config(
        args.out + ".cfg",
        {
            "data": args.data,
            "manifest": str(manifest),
            "epochs": args.epochs,
            "lr": args.lr,
            "l2": args.l2,
            "seed": args.seed,
            "split": args.split,
            "out": args.out,
        },
    )
    print(f"wrote {args.out}; final loss {result.losses[-1]:.6g}")
    return 0


def _quadrant_bounds(x: int, y: int, w: int, h: int, width: int, height: int):
    cx, cy = x + w / 2.0, y + h / 2.0
    half_w, half_h = width // 2, height // 2
    x0 = 0 if cx < half_w else half_w
    y0 = 0 if cy < half_h else half_h
    return x0, y0, half_w, half_h


def cmd_eval_localization(args: argparse.Namespace) -> int:
    maps_dir = Path(args.maps)
    rows = list(csv.DictReader(Path(args.manifest).read_text().splitlines()))
    table = []
    for row in rows:
        rect_fields = (row.get("x"), row.get("y"), row.get("w"), row.get("h"))
        if any(v is None or v == "" for v in rect_fields):
            continue
        map_path = maps_dir / f"{row['image_id']}.wem"
        if not map_path.exists():
            continue
        smap = load_saliency_map(map_path)
        x, y, w, h = (int(v) for v in rect_fields)
        positive = np.maximum(smap.we_sum, 0.0)
        total = positive.sum()
        qx, qy, qw, qh = _quadrant_bounds(x, y, w, h, smap.width, smap.height)
        in_quadrant = positive[qy : qy + qh, qx : qx + qw].sum()
        in_rect = positive[y : y + h, x : x + w].sum()
        frac_q = in_quadrant / total if total > 0 else 0.0
        frac_r = in_rect / total if total > 0 else 0.0
        table.append((row["image_id"], frac_q, frac_r, frac_q > args.threshold))
    if not table:
        raise CliError(f"no (map, planted rect) pairs found under {maps_dir}")
    out_lines = ["image_id,quadrant_fraction,rect_fraction,above_threshold"]
    for image_id, fq, fr, ok in table:
        out_lines.append(f"{image_id},{fq:.6f},{fr:.6f},{int(ok)}")
    passed = sum(1 for *_, ok in table if ok)
    summary = f"passed {passed}/{len(table)} (threshold {args.threshold})"
    print("\n".join(out_lines))
    print(summary)
    if args.out:
        Path(args.out).write_text("\n".join(out_lines) + "\n# " + summary + "\n")
    return 0


def cmd_serve_check(args: argparse.Namespace) -> int:
    ok = run_conformance_check(
        args.command,
        rounds=args.rounds,
        seed=args.seed,
        timeout=args.timeout,
        log=lambda line: print(line),
    )
    print("conformant" if ok else "NOT conformant")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pda",
        description="Occlusion saliency for image classifiers: corrupt sliding "
        "windows with conditionally sampled replacements and accumulate the "
        "per-pixel change in prediction evidence.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("fit-stats", help="fit the Gaussian patch model from an image directory",
                       formatter_class=fmt)
    p.add_argument("--images", required=True, help="directory of corpus images")
    p.add_argument("--patch-edge", type=int, required=True, help="patch side = win + 2*pad")
    p.add_argument("--max-patches", type=int, default=2000, help="patches to sample")
    p.add_argument("--epsilon", type=float, default=1e-4, help="covariance ridge")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", required=True, help="output PGS1 file")
    p.set_defaults(func=cmd_fit_stats)

    p = sub.add_parser("analyze", help="compute the evidence map for one image and class",
                       formatter_class=fmt)
    for flag, kwargs in _ANALYZE_FLAGS:
        p.add_argument(flag, **kwargs)
    p.add_argument("--out", default=None, help="output WEM1 map file (required)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("render", help="render a WEM1 map as a red/blue heatmap image",
                       formatter_class=fmt)
    p.add_argument("--map", required=True, help="WEM1 input file")
    p.add_argument("--normalize", default="symmetric_max",
                   help="symmetric_max | pQ (e.g. p99) | percentile:Q")
    p.add_argument("--overlay", default=None, help="blend over this original image")
    p.add_argument("--alpha", type=float, default=0.5, help="overlay blend weight")
    p.add_argument("--sidecar", default=None, help="write normalization constants here")
    p.add_argument("--out", required=True, help="output image (.png or .ppm)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="generate the planted-feature dataset",
                       formatter_class=fmt)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=50, help="images per class")
    p.add_argument("--edge", type=int, default=32, help="image side length")
    p.add_argument("--patch", type=int, default=8, help="planted patch side length")
    p.add_argument("--quadrant", default="tl", choices=("tl", "tr", "bl", "br"),
                   help="quadrant holding the planted patch")
    p.add_argument("--noise", type=float, default=0.05, help="uniform noise amplitude")
    p.add_argument("--seed", type=int, default=0, help="generation seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-baseline", help="train the linear-softmax baseline",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="dataset directory (images + manifest)")
    p.add_argument("--manifest", default=None, help="metadata CSV (default DATA/manifest.csv)")
    p.add_argument("--classes", default=None, help="comma-separated catalog override")
    p.add_argument("--epochs", type=int, default=300, help="gradient descent epochs")
    p.add_argument("--lr", type=float, default=0.5, help="learning rate")
    p.add_argument("--l2", type=float, default=0.0, help="l2 penalty on weights")
    p.add_argument("--split", default="0.7,0.1,0.2", help="train,val,test fractions")
    p.add_argument("--seed", type=int, default=0, help="split shuffle seed")
    p.add_argument("--out", required=True, help="output LSW1 weights file")
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("eval-localization",
                       help="score how much positive evidence falls in planted quadrants",
                       formatter_class=fmt)
    p.add_argument("--maps", required=True, help="directory of <image_id>.wem maps")
    p.add_argument("--manifest", required=True, help="manifest CSV with rect columns")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="per-image pass threshold on the quadrant fraction")
    p.add_argument("--out", default=None, help="also write the table as CSV here")
    p.set_defaults(func=cmd_eval_localization)

    p = sub.add_parser("sweep", help="run analyze across several window sizes",
                       formatter_class=fmt)
    for flag, kwargs in _ANALYZE_FLAGS:
        if flag in ("--win", "--stats"):
            continue
        p.add_argument(flag, **kwargs)
    p.add_argument("--wins", default=None, help="comma-separated window sizes (default 5,10,15,20)")
    p.add_argument("--fit-images", default=None,
                   help="fit a per-window Gaussian patch model from this directory")
    p.add_argument("--max-patches", type=int, default=None, help="patches per fit (default 2000)")
    p.add_argument("--epsilon", type=float, default=None, help="covariance ridge (default 1e-4)")
    p.add_argument("--out-dir", default=None, help="directory for map_w<N>.wem files (required)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve-check", help="check an external adapter for protocol conformance",
                       formatter_class=fmt)
    p.add_argument("--command", required=True, help="adapter launch command")
    p.add_argument("--rounds", type=int, default=100, help="random classify round-trips")
    p.add_argument("--seed", type=int, default=0, help="random image seed")
    p.add_argument("--timeout", type=float, default=30.0, help="per-reply timeout (s)")
    p.set_defaults(func=cmd_serve_check)

    return parser


# Shared analyze/sweep flags. Defaults live in the resolver so that config
# files can supply values underneath explicit flags; the help text documents
# the effective default.
_ANALYZE_FLAGS = [
    ("--image", dict(default=None, help="input image (required)")),
    ("--classifier", dict(default=None,
     help="constant:<p,..> | uniform:<K> | lsw:<file> | external:<cmd> (required)")),
    ("--class", dict(default=None, dest="class", metavar="NAME",
     help="target class name or index (required)")),
    ("--classes", dict(default=None, help="comma-separated catalog names")),
    ("--stats", dict(default=None, help="PGS1 patch model (gaussian sampler)")),
    ("--sampler", dict(default=None, help="gaussian | const | discrete (default gaussian)")),
    ("--value", dict(type=float, default=None, help="const sampler fill value (default 0.5)")),
    ("--support", dict(default=None, help="discrete sampler support values a,b,c")),
    ("--weights", dict(default=None, help="discrete sampler weights (default uniform)")),
    ("--mc", dict(action=argparse.BooleanOptionalAction, default=None,
     help="force Monte-Carlo mode for the discrete sampler")),
    ("--win", dict(type=int, default=None, help="window size (default 15)")),
    ("--pad", dict(type=int, default=None, help="padding ring width (default 2)")),
    ("--stride", dict(type=int, default=None, help="window stride (default 1)")),
    ("--samples", dict(type=int, default=None, help="Monte-Carlo samples per ROI (default 10)")),
    ("--seed", dict(type=int, default=None, help="master seed (default 0)")),
    ("--laplace-n", dict(type=int, default=None,
     help="training-instance count for the Laplace correction (default 1000)")),
    ("--workers", dict(type=int, default=None,
     help="parallel workers (default $PDA_WORKERS or 1); output bytes are identical for any value")),
    ("--report", dict(default=None, help="report path (default <out>.report.txt)")),
    ("--config", dict(default=None, help="key=value file supplying defaults for these flags")),
]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
