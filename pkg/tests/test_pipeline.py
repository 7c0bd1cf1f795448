"""Shared pipeline plumbing and the synthetic benchmark generators."""

import numpy as np
import pytest

from sinbad.benchmark import (
    ANOMALOUS_COMPOSITION,
    NORMAL_COMPOSITION,
    cluster_benchmark,
    equal_mean_dataset,
    equal_mean_pair,
    three_level_benchmark,
)
from sinbad.pipeline import (
    SetPipelineConfig,
    derive_seeds,
    fit_set_pipeline,
)
from sinbad.sets import ElementSet


def small_sets(seed=0, n=8, elements=12, dims=3):
    rng = np.random.default_rng(seed)
    return [ElementSet(rng.standard_normal((elements, dims)), f"s{i}") for i in range(n)]


class TestFitSetPipeline:
    def test_train_duplicate_scores_zero(self):
        train = small_sets()
        fitted = fit_set_pipeline(train, SetPipelineConfig(n_projections=6, n_bins=4), seed=1)
        scores = fitted.score_sets([train[3]])
        assert scores[0] == 0.0

    def test_deterministic(self):
        train = small_sets(1)
        test = small_sets(2, n=3)
        cfg = SetPipelineConfig(n_projections=10, n_bins=5)
        a = fit_set_pipeline(train, cfg, seed=9).score_sets(test)
        b = fit_set_pipeline(train, cfg, seed=9).score_sets(test)
        assert np.array_equal(a, b)

    def test_needs_two_sets(self):
        with pytest.raises(ValueError, match="at least 2"):
            fit_set_pipeline(small_sets(n=1), SetPipelineConfig(), seed=0)

    def test_scorer_variants_produce_finite_scores(self):
        train = small_sets(3)
        test = small_sets(4, n=2)
        for scorer in ("whitened_knn", "knn", "mahalanobis", "per_variable"):
            cfg = SetPipelineConfig(n_projections=5, n_bins=4, scorer=scorer)
            scores = fit_set_pipeline(train, cfg, seed=2).score_sets(test)
            assert np.isfinite(scores).all()
            assert (scores >= 0).all()

    def test_mean_descriptor_skips_projection(self):
        train = small_sets(5)
        cfg = SetPipelineConfig(descriptor="mean")
        fitted = fit_set_pipeline(train, cfg, seed=0)
        assert fitted.projection is None
        assert fitted.train_descriptors.shape == (8, 3)

    def test_identity_projection_uses_raw_axes(self):
        train = small_sets(6)
        cfg = SetPipelineConfig(projection="identity", n_bins=4)
        fitted = fit_set_pipeline(train, cfg, seed=0)
        assert np.array_equal(fitted.projection.weights, np.eye(3))

    def test_train_scores_are_leave_one_out(self):
        train = small_sets(7)
        fitted = fit_set_pipeline(train, SetPipelineConfig(n_projections=6, n_bins=4), seed=3)
        # every training sample has a distinct nearest neighbour, so no zero
        assert (fitted.train_scores > 0).all()


class TestDeriveSeeds:
    def test_deterministic_and_distinct(self):
        a = derive_seeds(42, 8)
        b = derive_seeds(42, 8)
        assert a == b
        assert len(set(a)) == 8
        assert derive_seeds(43, 8) != a


class TestClusterBenchmark:
    def test_compositions(self):
        data = cluster_benchmark(0, n_train=5, n_test_normal=3, n_test_anomalous=4)
        assert len(data.train) == 5
        assert len(data.test) == 7
        assert data.labels.tolist() == [0, 0, 0, 1, 1, 1, 1]
        assert all(s.n_elements == sum(NORMAL_COMPOSITION) for s in data.train)
        assert all(s.n_elements == sum(ANOMALOUS_COMPOSITION) for s in data.test)

    def test_reproducible(self):
        a = cluster_benchmark(5, n_train=4, n_test_normal=2, n_test_anomalous=2)
        b = cluster_benchmark(5, n_train=4, n_test_normal=2, n_test_anomalous=2)
        for x, y in zip(a.train + a.test, b.train + b.test):
            assert np.array_equal(x.elements, y.elements)

    def test_three_level_views_share_labels(self):
        views, labels = three_level_benchmark(0, n_train=6, n_test_normal=3, n_test_anomalous=3)
        assert len(views) == 3
        for v in views:
            assert np.array_equal(v.labels, labels)
        # weak view differs from the base view
        assert not np.array_equal(views[2].train[0].elements, views[0].train[0].elements)


class TestEqualMeanConstruction:
    def test_pair_properties(self):
        a, b = equal_mean_pair()
        assert np.array_equal(a.elements.mean(0), b.elements.mean(0))
        for axis in range(2):
            assert np.array_equal(np.sort(a.elements[:, axis]), np.sort(b.elements[:, axis]))
        # identical marginals, different joint: the row sets differ
        rows_a = sorted(map(tuple, a.elements))
        rows_b = sorted(map(tuple, b.elements))
        assert rows_a != rows_b

    def test_dataset_shapes(self):
        data = equal_mean_dataset(1, n_train=6, n_test_each=4)
        assert len(data.train) == 6
        assert len(data.test) == 8
        assert data.labels.sum() == 4
