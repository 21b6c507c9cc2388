#!/usr/bin/env python3
"""Window-size sweep: one evidence map per window size for one image.

Trains the baseline on a fresh planted dataset, then sweeps window sizes
(default 5, 10, 15, 20) over a single held-out planted image with the
Gaussian conditional sampler refitted per window geometry, rendering each
map beside the original.

    python3 scripts/window_sweep.py --out-dir runs/sweep --wins 5,10,15,20
"""

import argparse
import sys
import time
from pathlib import Path

from pda import (
    LinearSoftmaxClassifier,
    RenderSpec,
    SplitSpec,
    WindowConfig,
    analyze,
    fit_patch_gaussian,
    normalize_saliency,
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
    ap.add_argument("--out-dir", default="runs/sweep")
    ap.add_argument("--wins", default="5,10,15,20")
    ap.add_argument("--pad", type=int, default=2)
    ap.add_argument("--edge", type=int, default=48)
    ap.add_argument("--patch", type=int, default=12)
    ap.add_argument("--samples", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wins = [int(w) for w in args.wins.split(",")]

    ds = synth_planted_dataset(120, args.edge, args.patch, "tl", 0.05, args.seed)
    train, _, test = stratified_split(ds, SplitSpec(0.7, 0.1, 0.2, seed=args.seed))
    result = train_linear_softmax(train, epochs=300, learning_rate=0.5)
    clf = LinearSoftmaxClassifier(result.weights, ds.catalog, args.edge, args.edge, 1)

    target = test.indices_of_class(1)[0]
    image = test.image(target)
    save_image(image, out_dir / "original.png")
    background = [train.image(i) for i in train.indices_of_class(0)]

    for win in wins:
        model = fit_patch_gaussian(background, patch_edge=win + 2 * args.pad,
                                   max_patches=2000, epsilon=1e-4, seed=args.seed)
        config = WindowConfig(win_size=win, pad_size=args.pad, stride=1,
                              samples_per_roi=args.samples, laplace_n=len(train),
                              laplace_k=2, seed=args.seed)
        t0 = time.monotonic()
        rep = analyze(clf, image, 1, config, GaussianConditionalSampler(model))
        print(f"win {win:2d}: {len(rep.rois)} positions, "
              f"{rep.classifier_calls} classifier calls, {time.monotonic() - t0:.1f}s")
        save_saliency_map(rep.saliency, out_dir / f"map_w{win}.wem")
        values = normalize_saliency(rep.saliency, RenderSpec(mode="percentile"))
        save_image(render_heatmap(values), out_dir / f"heat_w{win}.png")

    print(f"outputs in {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
