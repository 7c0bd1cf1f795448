"""Shared fit-and-score plumbing used by the time-series and image front ends.

A pipeline run is: project every element set through a shared matrix, fit bin
edges on the pooled projected training values, build descriptors, fit a
scorer on the training descriptors, score queries. Everything is a pure
function of (inputs, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import density, sets

WHITENED_KNN = "whitened_knn"
KNN = "knn"
MAHALANOBIS = "mahalanobis"
PER_VARIABLE = "per_variable"

MEAN = "mean"


@dataclass(frozen=True)
class SetPipelineConfig:
    """Hyperparameters of one projection-histogram-scoring run."""

    n_projections: int = 100
    projection: str = sets.GAUSSIAN  # gaussian | identity | pca
    n_bins: int = 20
    edge_mode: str = sets.QUANTILE
    descriptor: str = sets.CUMULATIVE  # cumulative | plain | mean
    scorer: str = WHITENED_KNN  # whitened_knn | knn | mahalanobis | per_variable
    k: int = 1
    shrinkage: float = 0.1

    def with_overrides(self, **kw) -> "SetPipelineConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class FittedSetPipeline:
    """Frozen state of a fitted run: projection, edges, scorer, train stats."""

    config: SetPipelineConfig
    projection: sets.ProjectionMatrix | None
    edges: sets.BinEdges | None
    knn_model: density.WhitenedKnnModel | None
    gaussian_model: density.GaussianModel | None
    train_descriptors: np.ndarray
    train_scores: np.ndarray  # leave-one-out for knn scorers, in-sample otherwise

    def describe(self, element_sets) -> np.ndarray:
        cfg = self.config
        if cfg.descriptor == MEAN:
            return np.stack([sets.mean_pool(s) for s in element_sets])
        projected = [sets.project_elements(s, self.projection) for s in element_sets]
        seed = self.projection.seed
        return sets.describe_sets(projected, self.edges, cfg.descriptor, seed)

    def score_descriptors(self, H: np.ndarray) -> np.ndarray:
        cfg = self.config
        if cfg.scorer == WHITENED_KNN:
            return density.score_knn_batch(self.knn_model, H)
        if cfg.scorer == KNN:
            return density.knn_mean_sq_distances(self.train_descriptors, H, cfg.k)
        if cfg.scorer == MAHALANOBIS:
            return density.mahalanobis_batch(self.gaussian_model, H)
        if cfg.scorer == PER_VARIABLE:
            return density.score_per_variable_batch(self.gaussian_model, H)
        raise ValueError(f"unknown scorer {cfg.scorer!r}")

    def score_sets(self, element_sets) -> np.ndarray:
        return self.score_descriptors(self.describe(element_sets))


def _loo_euclid_knn(train: np.ndarray, k: int) -> np.ndarray:
    from scipy.spatial.distance import cdist

    D = cdist(train, train, "sqeuclidean")
    np.fill_diagonal(D, np.inf)
    k = min(k, train.shape[0] - 1)
    if k == 1:
        return D.min(axis=1)
    return np.partition(D, k - 1, axis=1)[:, :k].mean(axis=1)


def fit_set_pipeline(train_sets, config: SetPipelineConfig, seed: int) -> FittedSetPipeline:
    """Fit projection, edges and scorer on training element sets."""
    if len(train_sets) < 2:
        raise ValueError(f"need at least 2 training sets, got {len(train_sets)}")
    cfg = config
    projection = None
    edges = None
    if cfg.descriptor == MEAN:
        H = np.stack([sets.mean_pool(s) for s in train_sets])
    else:
        n_dims = train_sets[0].n_dims
        if cfg.projection == sets.PCA:
            projection = sets.pca_projection(train_sets, cfg.n_projections)
        elif cfg.projection == sets.IDENTITY:
            projection = sets.make_projection(seed, n_dims, n_dims, sets.IDENTITY)
        else:
            projection = sets.make_projection(seed, n_dims, cfg.n_projections, sets.GAUSSIAN)
        projected = [sets.project_elements(s, projection) for s in train_sets]
        edges = sets.fit_bin_edges(projected, cfg.n_bins, cfg.edge_mode)
        H = sets.describe_sets(projected, edges, cfg.descriptor, projection.seed)

    knn_model = None
    gaussian_model = None
    if cfg.scorer == WHITENED_KNN:
        knn_model = density.fit_whitened_knn(H, cfg.shrinkage, cfg.k)
        gaussian_model = knn_model.gaussian
        train_scores = density.loo_knn_scores(knn_model)
    elif cfg.scorer == KNN:
        train_scores = _loo_euclid_knn(H, cfg.k)
    elif cfg.scorer in (MAHALANOBIS, PER_VARIABLE):
        gaussian_model = density.fit_gaussian(H, cfg.shrinkage)
        if cfg.scorer == MAHALANOBIS:
            train_scores = density.mahalanobis_batch(gaussian_model, H)
        else:
            train_scores = density.score_per_variable_batch(gaussian_model, H)
    else:
        raise ValueError(f"unknown scorer {cfg.scorer!r}")
    return FittedSetPipeline(cfg, projection, edges, knn_model, gaussian_model, H, train_scores)


def derive_seeds(master_seed: int, count: int) -> list[int]:
    """Derive independent child seeds from a master seed.

    Uses numpy's SeedSequence spawning, so the same master always yields the
    same children.
    """
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]
