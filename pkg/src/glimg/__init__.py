"""Top-N recommendation with blended global and local item graphs."""

from .dataset import (
    DatasetSplit,
    RatingMatrix,
    RatingRecord,
    build_matrix,
    filter_min_ratings,
    load_ratings,
    split_dataset,
    to_implicit,
)
from .engine import (
    GlimgModel,
    HyperParams,
    fit,
    load_model,
    predict_all,
    predict_user,
    save_model,
    stationarity_residual,
)
from .errors import DataError, GlimgError, ModelFormatError, NumericalError, ParseError
from .evaluation import EvalReport, evaluate
from .itemgraph import ItemCorrelationMatrix, build_item_graph
from .clustering import ClusterAssignment, kmeans_cluster

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit", "RatingMatrix", "RatingRecord", "build_matrix",
    "filter_min_ratings", "load_ratings", "split_dataset", "to_implicit",
    "GlimgModel", "HyperParams", "fit", "load_model", "predict_all",
    "predict_user", "save_model", "stationarity_residual",
    "DataError", "GlimgError", "ModelFormatError", "NumericalError", "ParseError",
    "EvalReport", "evaluate", "ItemCorrelationMatrix", "build_item_graph",
    "ClusterAssignment", "kmeans_cluster",
]
