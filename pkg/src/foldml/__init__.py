"""Parallel in-core analytics built on transition/merge/final folds.

Datasets are immutable columnar tables; every algorithm is a FoldSpec run
by a generic executor (run_parallel), and multipass methods sit on top of
a small driver loop (iterate) that keeps per-iteration state tiny.
"""

from .errors import (
    DataError,
    DimensionError,
    DivergenceError,
    IterationError,
    NotPSDError,
    NumericError,
    PerfectSeparationError,
    SizingError,
)
from .foldcore import (
    Dataset,
    FoldSpec,
    IterationLedger,
    Partition,
    Row,
    count_spec,
    fold_partition,
    fold_source,
    iterate,
    merge_states,
    partition_ranges,
    run_parallel,
)
from .kmeans import KMeansResult, kmeans_fit, seed_centroids
from .linalg import (
    EigenDecomposition,
    SparseVectorRLE,
    SymMatrixLower,
    closest_column,
    rle_dot,
    spd_pseudo_inverse,
    symmetric_eigen,
)
from .regress import (
    LinRegrResult,
    LogRegrResult,
    linregr_final,
    linregr_spec,
    linregr_transition,
    logregr_fit,
    logregr_irls_step,
    student_t_two_sided_p,
)
from .sgd import Objective, SgdModel, objective_value, sgd_fit, sgd_step, term_gradient
from .sketch import CountMinSketch, FMSketch, cm_fold_spec, cm_merge, fm_fold_spec, fm_merge

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FoldSpec",
    "Partition",
    "Row",
    "IterationLedger",
    "run_parallel",
    "fold_partition",
    "fold_source",
    "merge_states",
    "partition_ranges",
    "iterate",
    "count_spec",
    "SymMatrixLower",
    "EigenDecomposition",
    "SparseVectorRLE",
    "closest_column",
    "rle_dot",
    "spd_pseudo_inverse",
    "symmetric_eigen",
    "LinRegrResult",
    "LogRegrResult",
    "linregr_spec",
    "linregr_transition",
    "linregr_final",
    "logregr_fit",
    "logregr_irls_step",
    "student_t_two_sided_p",
    "KMeansResult",
    "kmeans_fit",
    "seed_centroids",
    "Objective",
    "SgdModel",
    "term_gradient",
    "sgd_step",
    "sgd_fit",
    "objective_value",
    "CountMinSketch",
    "FMSketch",
    "cm_fold_spec",
    "cm_merge",
    "fm_fold_spec",
    "fm_merge",
    "DataError",
    "DimensionError",
    "DivergenceError",
    "IterationError",
    "NotPSDError",
    "NumericError",
    "PerfectSeparationError",
    "SizingError",
]
