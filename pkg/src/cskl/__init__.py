"""Compressive statistical learning with random generalized moments.

A dataset is summarized once into a fixed-size sketch (averaged random
features); k-means, k-medians, Gaussian mixtures with known covariance, and PCA
are then learned from the sketch alone.
"""
from ._accel import backend
from .core import (
    CsklError,
    Dataset,
    DiracMixture,
    DimensionMismatch,
    EmptyDataset,
    FeatureKind,
    FeatureScheme,
    FingerprintMismatch,
    FrequencyMatrix,
    GaussianMixture,
    InvalidParameter,
    KernelProfile,
    NumericalFailure,
    RngId,
    Sketch,
    Subspace,
    fingerprint,
)
from .decoders import DecodeResult, DecoderOptions, decode_diracs, decode_gmm, decode_pca
from .evaluation import (
    baseline_em,
    baseline_exact_pca,
    baseline_lloyd,
    clustering_risk,
    gmm_negative_log_likelihood,
    match_components,
    pca_risk,
)
from .frequencies import (
    compute_norm_const,
    draw_frequencies,
    quadratic_scheme,
    sample_plain_fourier,
    sample_quadratic_projectors,
    sample_weighted_fourier,
)
from .kernels import (
    gaussian_kernel_profile,
    gmm_mean_kernel,
    kernel_class_condition,
    lambda_for_separation,
    mixture_kernel,
    mmd,
    separation_gmm,
    separation_kmeans,
    sigma_k,
)
from .sketching import feature_map, merge, merge_all, model_sketch, sketch_dataset

__version__ = "0.1.0"
