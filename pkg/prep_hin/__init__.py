from .counting import PathCountTable, count_paths
from .graph import HeterogeneousGraph, MetaPath, load_graph, load_metapaths
from .inference import PrepInference, fit
from .model import PrepParameters
from .relevance import CompositeScoreTable, prep_score, prep_scores

Graph = HeterogeneousGraph

__version__ = "0.1.0"
__all__ = [
    "CompositeScoreTable",
    "Graph",
    "HeterogeneousGraph",
    "MetaPath",
    "PathCountTable",
    "PrepInference",
    "PrepParameters",
    "count_paths",
    "fit",
    "load_graph",
    "load_metapaths",
    "prep_score",
    "prep_scores",
]
