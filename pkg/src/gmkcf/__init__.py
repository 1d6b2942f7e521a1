"""Globally fused multiple kernel concept factorization for clustering."""
from .kernel_bank import (
    PAPER12,
    KernelBank,
    KernelError,
    KernelSpec,
    build_bank,
    combine,
    mean_pairwise_distance,
)
from .factor_solvers import (
    Factorization,
    FitReport,
    SolverConfig,
    SolverError,
    gmkcf_fit,
    kcf_fit,
    nmf_fit,
    objective,
)
from .cluster_post import KMeansConfig, kmeans_fit
from .eval_metrics import MetricReport, accuracy, evaluate, nmi, purity
from .data_io import Dataset, SyntheticSpec, make_synthetic

__version__ = "0.1.0"
