"""p300bench: single-trial P300 classification benchmark toolkit.

Preprocessing, windowed-means features, three from-scratch classifiers
(shrinkage LDA, SMO RBF-SVM, a small CNN) and a seeded Monte-Carlo
cross-validation / holdout / trial-averaging evaluation protocol.
"""

from .containers import ContainerFormatError, EpochSet, import_csv, read_epb, write_epb
from .cnn import CnnClassifier
from .features import EpochFlattener, FeatureMatrix, Standardizer, WindowedMeans
from .lda import ShrinkageLda, ledoit_wolf
from .linalg import covariance, sym_eig
from .metrics import MetricSet, compute_metrics
from .preprocess import (
    ContinuousRecording,
    PreprocessConfig,
    RejectionReport,
    baseline_correct,
    extract_epochs,
    reject_artifacts,
)
from .rng import SeededRng
from .svm import SmoSvc, rbf_kernel
from .synth import SynthConfig, synthesize

__version__ = "0.1.0"

__all__ = [
    "CnnClassifier",
    "ContainerFormatError",
    "ContinuousRecording",
    "EpochFlattener",
    "EpochSet",
    "FeatureMatrix",
    "MetricSet",
    "PreprocessConfig",
    "RejectionReport",
    "SeededRng",
    "ShrinkageLda",
    "SmoSvc",
    "Standardizer",
    "SynthConfig",
    "WindowedMeans",
    "baseline_correct",
    "compute_metrics",
    "covariance",
    "extract_epochs",
    "import_csv",
    "ledoit_wolf",
    "rbf_kernel",
    "read_epb",
    "reject_artifacts",
    "sym_eig",
    "synthesize",
    "write_epb",
]
