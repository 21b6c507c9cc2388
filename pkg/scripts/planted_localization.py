#!/usr/bin/env python3
"""End-to-end localization experiment on the planted-feature dataset.

Generates the two-class synthetic dataset, trains the linear-softmax
baseline, fits the Gaussian patch model on background training images, runs
the evidence analysis on held-out planted images, and reports how much
positive evidence lands inside the planted quadrant. Also renders a heatmap
for the first few images.

    python3 scripts/planted_localization.py --out-dir runs/planted
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from pda import (
    LinearSoftmaxClassifier,
    RenderSpec,
    SplitSpec,
    WindowConfig,
    analyze,
    dataset_accuracy,
    fit_patch_gaussian,
    normalize_saliency,
    overlay,
    render_heatmap,
    save_image,
    save_saliency_map,
    stratified_split,
    synth_planted_dataset,
    train_linear_softmax,
)
from pda.patch_stats import GaussianConditionalSampler


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/planted")
    ap.add_argument("--n-per-class", type=int, default=200)
    ap.add_argument("--edge", type=int, default=32)
    ap.add_argument("--patch", type=int, default=8)
    ap.add_argument("--quadrant", default="tl")
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--win", type=int, default=5)
    ap.add_argument("--pad", type=int, default=2)
    ap.add_argument("--samples", type=int, default=10)
    ap.add_argument("--n-eval", type=int, default=20)
    ap.add_argument("--n-render", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--lr", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ds = synth_planted_dataset(args.n_per_class, args.edge, args.patch,
                               args.quadrant, args.noise, args.seed)
    train, _, test = stratified_split(ds, SplitSpec(0.7, 0.1, 0.2, seed=args.seed))
    print(f"dataset: {len(ds)} images, train {len(train)}, test {len(test)}")

    result = train_linear_softmax(train, epochs=args.epochs, learning_rate=args.lr)
    clf = LinearSoftmaxClassifier(result.weights, ds.catalog,
                                  args.edge, args.edge, 1)
    print(f"baseline held-out accuracy: {dataset_accuracy(clf, test):.3f}")

    background = [train.image(i) for i in train.indices_of_class(0)]
    model = fit_patch_gaussian(background, patch_edge=args.win + 2 * args.pad,
                               max_patches=2000, epsilon=1e-4, seed=args.seed)
    sampler = GaussianConditionalSampler(model)
    config = WindowConfig(win_size=args.win, pad_size=args.pad, stride=1,
                          samples_per_roi=args.samples, laplace_n=len(train),
                          laplace_k=2, seed=args.seed)

    half = args.edge // 2
    quadrant_slices = {
        "tl": (slice(0, half), slice(0, half)),
        "tr": (slice(0, half), slice(half, None)),
        "bl": (slice(half, None), slice(0, half)),
        "br": (slice(half, None), slice(half, None)),
    }[args.quadrant]

    eval_indices = test.indices_of_class(1)[: args.n_eval]
    fractions = []
    t0 = time.monotonic()
    for n, i in enumerate(eval_indices):
        image = test.image(i)
        rep = analyze(clf, image, 1, config, sampler)
        positive = np.maximum(rep.saliency.we_sum, 0.0)
        frac = positive[quadrant_slices].sum() / positive.sum() if positive.sum() else 0.0
        fractions.append(frac)
        record = test.records[i]
        print(f"{record.source_id}: quadrant fraction {frac:.3f} "
              f"(rect at {record.planted_rect.x},{record.planted_rect.y})")
        if n < args.n_render:
            save_saliency_map(rep.saliency, out_dir / f"{record.source_id}.wem")
            values = normalize_saliency(rep.saliency, RenderSpec(mode="percentile"))
            heat = overlay(image, render_heatmap(values), 0.6)
            save_image(heat, out_dir / f"{record.source_id}_heat.png")
    elapsed = time.monotonic() - t0

    fractions = np.array(fractions)
    area = 0.25
    print(f"\n{len(fractions)} images in {elapsed:.1f}s; quadrant area fraction {area}")
    print(f"median fraction {np.median(fractions):.3f}, min {fractions.min():.3f}")
    print(f"above 2x area ({2 * area}): {(fractions > 2 * area).sum()}/{len(fractions)}")
    print(f"outputs in {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
