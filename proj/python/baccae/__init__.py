"""Unsupervised bone-age clustering from hand radiographs.

Thin Python layer over the C++ core: image preprocessing, convolutional
autoencoders, k-means, dominant-label evaluation, t-SNE and the file-based
pipeline stages.
"""

from ._baccae import (
    CCAE,
    BaccaeError,
    adaptive_threshold,
    assign_interval_label,
    default_config,
    dominant_label_report,
    gaussian_blur,
    gaussian_kernel,
    histogram_equalize,
    kmeans,
    load_config,
    load_grayscale,
    perplexity_affinities,
    preprocess,
    report_from_counts,
    resize_bilinear,
    run_stage,
    save_png,
    synthesize,
    tsne,
)

__all__ = [
    "CCAE",
    "BaccaeError",
    "adaptive_threshold",
    "assign_interval_label",
    "default_config",
    "dominant_label_report",
    "gaussian_blur",
    "gaussian_kernel",
    "histogram_equalize",
    "kmeans",
    "load_config",
    "load_grayscale",
    "perplexity_affinities",
    "preprocess",
    "report_from_counts",
    "resize_bilinear",
    "run_stage",
    "save_png",
    "synthesize",
    "tsne",
]
__version__ = "0.1.0"
