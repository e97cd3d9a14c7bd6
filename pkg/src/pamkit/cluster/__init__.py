"""Semi-supervised clustering of segment embeddings.

Exact kNN feeds a nonlinear reduction; a density-based clusterer labels the
reduced points; noise is re-clustered iteratively; reference segments seed
per-cluster label suggestions.
"""
from .density import DensityParams, hdbscan_labels
from .io import (
    Embedding,
    read_embeddings,
    read_embeddings_text,
    write_embeddings,
)
from .knn import knn_graph
from .pipeline import (
    ClusterAssignment,
    iterate_noise,
    run_clustering,
    seed_with_references,
    suggest_labels,
)
from .reduce import ReductionParams, reduce_embeddings, spectral_init

__all__ = [
    "ClusterAssignment",
    "DensityParams",
    "Embedding",
    "ReductionParams",
    "hdbscan_labels",
    "iterate_noise",
    "knn_graph",
    "read_embeddings",
    "read_embeddings_text",
    "reduce_embeddings",
    "run_clustering",
    "seed_with_references",
    "spectral_init",
    "suggest_labels",
    "write_embeddings",
]
