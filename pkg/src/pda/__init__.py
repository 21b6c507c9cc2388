"""Occlusion saliency for image classifiers.

Slide a window over an image, replace its pixels with conditionally sampled
values, and accumulate the per-pixel change in prediction evidence
(log2-odds, Laplace-corrected) into a red/blue saliency map.
"""

__version__ = "0.1.0"

from .classifier import (
    Classifier,
    ConstantClassifier,
    LinearSoftmaxClassifier,
    LinearSoftmaxWeights,
    TrainResult,
    dataset_accuracy,
    load_weights,
    save_weights,
    train_linear_softmax,
)
from .codecs import decode_image, encode_image, load_image, save_image
from .dataset import (
    ClassCatalog,
    LabeledDataset,
    SplitSpec,
    balance_with_augmentation,
    load_metadata,
    stratified_split,
    synth_planted_dataset,
)
from .engine import (
    AnalysisReport,
    SaliencyMap,
    WindowConfig,
    analyze,
    laplace_correct,
    load_saliency_map,
    marginal_class_probability,
    save_saliency_map,
    visit_count_grid,
    weight_of_evidence,
    window_origins,
)
from .external import ExternalClassifier, open_external_classifier, run_conformance_check
from .heatmap import RenderSpec, normalize_saliency, overlay, render_heatmap
from .image import (
    AugmentSpec,
    Image,
    Patch,
    Rect,
    apply_augmentation,
    extract_patch,
    resize_bilinear,
)
from .patch_stats import (
    ConditionalGaussian,
    DiscreteSampler,
    GaussianConditionalSampler,
    PatchGaussian,
    condition_on_border,
    fit_patch_gaussian,
    load_patch_gaussian,
    make_discrete_sampler,
    sample_inner,
    save_patch_gaussian,
)
