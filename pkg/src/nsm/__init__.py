"""Neighborhood stability measures for judging how searchable a vector dataset is by clustering-based ANN."""

from nsm.core import Clustering, Dataset, Metric, NeighborSource, NeighborTable, cluster_sizes, comparator_value
from nsm.neighbors import DistanceMatrixOracle, approximate_1nn, exact_knn, knn_from_matrix
from nsm.clustering import KMeansConfig, default_num_clusters, kmeans
from nsm.stability import (
    clustering_nsm,
    clusterability_tail_bound,
    enumerate_ball_covers,
    point_nsm,
    point_nsm_distribution,
    set_nsm,
    verify_theorem2,
)
from nsm.baselines import db_index, dunn_index

__version__ = "0.1.0"

__all__ = [
    "Clustering",
    "Dataset",
    "DistanceMatrixOracle",
    "KMeansConfig",
    "Metric",
    "NeighborSource",
    "NeighborTable",
    "approximate_1nn",
    "cluster_sizes",
    "clustering_nsm",
    "clusterability_tail_bound",
    "comparator_value",
    "db_index",
    "default_num_clusters",
    "dunn_index",
    "enumerate_ball_covers",
    "exact_knn",
    "kmeans",
    "knn_from_matrix",
    "point_nsm",
    "point_nsm_distribution",
    "set_nsm",
    "verify_theorem2",
]
