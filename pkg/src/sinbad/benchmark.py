"""Synthetic composition-anomaly benchmarks.

Desk-scale stand-ins for real logical-anomaly data: elements are drawn from
three Gaussian clusters, normal samples contain a (2, 2, 2) composition over
the clusters and anomalous samples a (3, 1, 2) composition. Per-sample
nuisance variation (a common offset along the cluster-separation axis, a few
shared latent factors, and plain per-element noise dimensions) makes the
mean-pooled descriptor and unwhitened distances unreliable while the
projection-histogram pipeline stays sensitive to the composition change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sets import ElementSet

NORMAL_COMPOSITION = (2, 2, 2)
ANOMALOUS_COMPOSITION = (3, 1, 2)


@dataclass(frozen=True)
class LabeledSets:
    """Training sets plus labelled test sets (0 normal, 1 anomalous)."""

    train: list
    test: list
    labels: np.ndarray


def cluster_benchmark(
    seed: int = 0,
    n_train: int = 200,
    n_test_normal: int = 100,
    n_test_anomalous: int = 100,
    separation: float = 10.0,
    element_noise: float = 0.2,
    offset_scale: float = 2.5,
    n_factor_dims: int = 4,
    factor_scale: float = 0.7,
    n_noise_dims: int = 4,
    noise_scale: float = 0.4,
) -> LabeledSets:
    """Three-cluster composition benchmark.

    Element layout: dims 0-1 carry the cluster structure (cluster centres at
    the origin, separation*e0 and separation*e1); the next n_factor_dims move
    jointly per sample; the last n_noise_dims are independent per element.
    Dim 0 additionally gets a per-sample common offset.
    """
    rng = np.random.default_rng(seed)
    dim = 2 + n_factor_dims + n_noise_dims
    centers = np.zeros((3, dim))
    centers[1, 0] = separation
    centers[2, 1] = separation

    def sample(composition, sample_id):
        parts = [
            center + element_noise * rng.standard_normal((count, dim))
            for count, center in zip(composition, centers)
        ]
        X = np.concatenate(parts)
        X[:, 0] += offset_scale * rng.standard_normal()
        if n_factor_dims:
            X[:, 2 : 2 + n_factor_dims] += factor_scale * rng.standard_normal(n_factor_dims)
        if n_noise_dims:
            X[:, 2 + n_factor_dims :] += noise_scale * rng.standard_normal((X.shape[0], n_noise_dims))
        rng.shuffle(X)
        return ElementSet(X, sample_id=sample_id)

    train = [sample(NORMAL_COMPOSITION, f"train_{i:04d}") for i in range(n_train)]
    test = [sample(NORMAL_COMPOSITION, f"test_norm_{i:04d}") for i in range(n_test_normal)]
    test += [sample(ANOMALOUS_COMPOSITION, f"test_anom_{i:04d}") for i in range(n_test_anomalous)]
    labels = np.array([0] * n_test_normal + [1] * n_test_anomalous)
    return LabeledSets(train, test, labels)


def three_level_benchmark(seed: int = 0, weak_noise: float = 2.5, **kw) -> tuple[list[LabeledSets], np.ndarray]:
    """Three feature views of the same benchmark samples for score fusion.

    Views 0 and 1 are the informative features (fused runs use different
    projection seeds per view); view 2 is a deliberately weak copy with heavy
    extra noise, mimicking a low-signal level that gets a small fusion weight.
    """
    base = cluster_benchmark(seed, **kw)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x3F)).generate_state(1)[0])

    def weaken(eset: ElementSet) -> ElementSet:
        noisy = eset.elements + weak_noise * rng.standard_normal(eset.elements.shape)
        return ElementSet(noisy, sample_id=eset.sample_id)

    weak = LabeledSets([weaken(s) for s in base.train], [weaken(s) for s in base.test], base.labels)
    return [base, base, weak], base.labels


# Two five-point sets with equal means and identical per-axis histograms whose
# joints differ: B pairs the same x and y values through a fixed non-trivial
# permutation. Axis-aligned histograms cannot tell them apart; a generic
# oblique projection almost always can.
_PAIR_PERMUTATION = (1, 3, 0, 4, 2)
EQUAL_MEAN_PAIR_BINS = 8


def equal_mean_pair() -> tuple[ElementSet, ElementSet]:
    xs = np.arange(5, dtype=np.float64)
    A = np.stack([xs, xs], axis=1)
    B = np.stack([xs, xs[list(_PAIR_PERMUTATION)]], axis=1)
    return ElementSet(A, sample_id="pair_a"), ElementSet(B, sample_id="pair_b")


def composition_series(
    seed: int = 0,
    n_train: int = 60,
    n_test_each: int = 30,
    segment_length: int = 20,
    noise: float = 0.3,
):
    """Series-level composition benchmark: regime segments instead of clusters.

    Each series concatenates six segments drawn from three level regimes on
    channel 0 (levels 0, +3, -3; channel 1 is noise); normal series use the
    (2, 2, 2) regime composition, anomalous ones (3, 1, 2), with segment
    order shuffled per series. Returns (train, test, labels) as Series lists.
    """
    from .timeseries import Series

    rng = np.random.default_rng(seed)
    levels = (0.0, 3.0, -3.0)

    def make(composition, sample_id, label):
        regimes = [r for r, count in enumerate(composition) for _ in range(count)]
        rng.shuffle(regimes)
        chan0 = np.concatenate([
            np.full(segment_length, levels[r]) + noise * rng.standard_normal(segment_length)
            for r in regimes
        ])
        chan1 = noise * rng.standard_normal(chan0.shape[0])
        return Series(np.stack([chan0, chan1], axis=1), sample_id=sample_id, label=label)

    train = [make(NORMAL_COMPOSITION, f"train_{i:04d}", 0) for i in range(n_train)]
    test = [make(NORMAL_COMPOSITION, f"test_norm_{i:04d}", 0) for i in range(n_test_each)]
    test += [make(ANOMALOUS_COMPOSITION, f"test_anom_{i:04d}", 1) for i in range(n_test_each)]
    labels = np.array([0] * n_test_each + [1] * n_test_each)
    return train, test, labels


def equal_mean_dataset(
    seed: int = 0,
    n_train: int = 40,
    n_test_each: int = 25,
    jitter: float = 0.05,
) -> LabeledSets:
    """Jittered copies of the equal-mean pair: A patterns normal, B anomalous.

    Axis-aligned (identity-projection) histograms are blind to the difference
    by construction; gaussian projections separate the classes.
    """
    a, b = equal_mean_pair()
    rng = np.random.default_rng(seed)

    def jittered(base, sample_id):
        return ElementSet(base.elements + jitter * rng.standard_normal(base.elements.shape), sample_id)

    train = [jittered(a, f"train_{i:04d}") for i in range(n_train)]
    test = [jittered(a, f"test_norm_{i:04d}") for i in range(n_test_each)]
    test += [jittered(b, f"test_anom_{i:04d}") for i in range(n_test_each)]
    labels = np.array([0] * n_test_each + [1] * n_test_each)
    return LabeledSets(train, test, labels)
