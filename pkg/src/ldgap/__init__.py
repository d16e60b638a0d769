"""ldgap: statistical-computational gap laboratory for Gaussian latent
clustering models (clustering, sparse clustering, biclustering)."""

from .errors import (
    DegenerateError,
    LdgapError,
    NumericError,
    ParameterError,
    ResourceGuardError,
)
from .exact import ExactScalar, MultiIndex
from .models import (
    BICLUSTERING,
    CLUSTERING,
    SPARSE,
    LatentState,
    ModelSpec,
    ObservationPair,
    sample_prior,
    separation,
    signal,
)
from .partitions import Partition, PartitionPair, clustering_error, partnership_matrices

__version__ = "0.1.0"

__all__ = [
    "BICLUSTERING",
    "CLUSTERING",
    "SPARSE",
    "DegenerateError",
    "ExactScalar",
    "LatentState",
    "LdgapError",
    "ModelSpec",
    "MultiIndex",
    "NumericError",
    "ObservationPair",
    "ParameterError",
    "Partition",
    "PartitionPair",
    "ResourceGuardError",
    "clustering_error",
    "partnership_matrices",
    "sample_prior",
    "separation",
    "signal",
    "__version__",
]
