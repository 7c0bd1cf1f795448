"""Set-feature anomaly detection.

Samples are modelled as orderless sets of elements, described by
random-projection cumulative histograms, and scored by whitened
nearest-neighbour Mahalanobis distance.
"""

from .density import (
    AnomalyScore,
    GaussianModel,
    WhitenedKnnModel,
    fit_gaussian,
    fit_whitened_knn,
    load_model,
    mahalanobis,
    save_model,
    score_knn,
    score_per_variable,
)
from .evaluation import roc_auc
from .pipeline import FittedSetPipeline, SetPipelineConfig, fit_set_pipeline
from .sets import (
    BinEdges,
    ElementSet,
    ProjectionMatrix,
    SetDescriptor,
    describe_set,
    fit_bin_edges,
    make_projection,
    mean_pool,
    pca_projection,
    project_elements,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyScore",
    "BinEdges",
    "ElementSet",
    "FittedSetPipeline",
    "GaussianModel",
    "ProjectionMatrix",
    "SetDescriptor",
    "SetPipelineConfig",
    "WhitenedKnnModel",
    "describe_set",
    "fit_bin_edges",
    "fit_gaussian",
    "fit_set_pipeline",
    "fit_whitened_knn",
    "load_model",
    "mahalanobis",
    "make_projection",
    "mean_pool",
    "pca_projection",
    "project_elements",
    "roc_auc",
    "save_model",
    "score_knn",
    "score_per_variable",
]
