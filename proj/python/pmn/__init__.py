"""Partitioned Markov network structure learning."""

from ._core import (
    Dataset,
    FeatureMap,
    FitResult,
    Objective,
    Partition,
    PathResult,
    PmnError,
    __version__,
    cross_validate,
    fit,
    lambda_path,
    load_csv,
    sample_diamond,
    sample_gaussian,
    tpr_tnr,
    window_sequences,
    write_csv,
)

__all__ = [
    "Dataset",
    "FeatureMap",
    "FitResult",
    "Objective",
    "Partition",
    "PathResult",
    "PmnError",
    "__version__",
    "cross_validate",
    "fit",
    "lambda_path",
    "load_csv",
    "sample_diamond",
    "sample_gaussian",
    "tpr_tnr",
    "window_sequences",
    "write_csv",
]
