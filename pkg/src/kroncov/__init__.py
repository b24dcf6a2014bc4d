"""Regularized spatiotemporal covariance estimation.

Structured estimators (Kronecker factorizations with block Toeplitz
temporal structure, diagonal correction, identity-target shrinkage, and
robust Tyler variants), synthetic benchmarks, and a sliding-window
Mahalanobis anomaly-detection pipeline.
"""

from .kron_ops import (
    DenseCovariance,
    EntryMask,
    RearrangedMatrix,
    SpaceTimeDims,
    ToeplitzCompressed,
    block,
    derearrange,
    diag_mask,
    kron_assemble,
    rearrange,
    toeplitz_embed,
    toeplitz_project,
)
from .synth import (
    GroundTruth,
    SampleSet,
    ar1_cov,
    inject_anomalies,
    ar1_kron_truth,
    sample_gaussian,
    sample_student_t,
)
from .estimators import (
    EstimatorConfig,
    KronModel,
    ShrinkageIntensity,
    chen_tyler,
    dc_kronpca,
    dc_kronpca_lw,
    fit_by_name,
    flipflop_S,
    kron_spectrum,
    kronpca,
    kronpca_T,
    lw_intensity,
    robust_kronpca,
    scm,
    set_diag_correction,
    shrink,
    soft_impute,
    svt,
)
from .anomaly import (
    ANOMALOUS,
    EXCLUDED,
    NOMINAL,
    FrameSeries,
    RocCurve,
    WindowSet,
    detrend,
    mahalanobis_scores,
    make_windows,
    roc,
)

__version__ = "0.1.0"

__all__ = [
    "ANOMALOUS",
    "DenseCovariance",
    "EXCLUDED",
    "EntryMask",
    "EstimatorConfig",
    "FrameSeries",
    "GroundTruth",
    "KronModel",
    "NOMINAL",
    "RearrangedMatrix",
    "RocCurve",
    "SampleSet",
    "ShrinkageIntensity",
    "SpaceTimeDims",
    "ToeplitzCompressed",
    "WindowSet",
    "ar1_cov",
    "block",
    "chen_tyler",
    "dc_kronpca",
    "dc_kronpca_lw",
    "derearrange",
    "detrend",
    "diag_mask",
    "fit_by_name",
    "flipflop_S",
    "inject_anomalies",
    "kron_assemble",
    "kron_spectrum",
    "kronpca",
    "kronpca_T",
    "lw_intensity",
    "mahalanobis_scores",
    "make_windows",
    "ar1_kron_truth",
    "rearrange",
    "robust_kronpca",
    "roc",
    "sample_gaussian",
    "sample_student_t",
    "scm",
    "set_diag_correction",
    "shrink",
    "soft_impute",
    "svt",
    "toeplitz_embed",
    "toeplitz_project",
]
