"""Graph coordinate system: embed a graph in hyperbolic space and answer
node-distance and path queries from the coordinates."""

__version__ = "0.1.0"

from .analytics import (BFSDistance, MetricsReport, SeparationReport, centrality_topk,
                        error_metrics, separation_metrics, social_search, topk_overlap)
from .embedder import (EmbedConfig, Embedding, ObjectiveKind, bootstrap_landmarks, embed_graph,
                       embed_node, load_embedding, save_embedding, select_landmarks)
from .generators import generate
from .geometry import Model, Space, distance
from .graph import (Graph, PairBFS, bfs_distances, load_csr, load_edge_list, read_graph,
                    save_csr, write_edge_list)
from .paths import PATH_NOT_FOUND, PathConfig, PathResult, find_path
from .query import (LikelihoodModel, QueryConfig, QueryEngine, QueryError, estimate_distance,
                    estimate_distance_hybrid, fit_likelihood_model, mle_estimate)
from .simplex import OptimizerConfig, OptimizeResult, minimize

__all__ = [
    "BFSDistance", "EmbedConfig", "Embedding", "Graph", "LikelihoodModel", "MetricsReport",
    "Model", "ObjectiveKind", "OptimizeResult", "OptimizerConfig", "PATH_NOT_FOUND", "PairBFS",
    "PathConfig", "PathResult", "QueryConfig", "QueryEngine", "QueryError", "SeparationReport",
    "Space", "bfs_distances", "bootstrap_landmarks", "centrality_topk", "distance",
    "embed_graph", "embed_node", "error_metrics", "estimate_distance", "estimate_distance_hybrid",
    "find_path", "fit_likelihood_model", "generate", "load_csr", "load_edge_list",
    "load_embedding", "minimize", "mle_estimate", "read_graph", "save_csr", "save_embedding",
    "select_landmarks", "separation_metrics", "social_search", "topk_overlap", "write_edge_list",
]
