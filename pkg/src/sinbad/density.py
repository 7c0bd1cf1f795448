"""Gaussian density estimation, covariance shrinkage, whitening, kNN scoring.

The normal samples' set descriptors are modelled with a mean and a shrunk
covariance. Scoring is either the Mahalanobis distance to the mean or, the
default, the mean squared distance to the k nearest training descriptors in
the whitened space (where Euclidean distance equals Mahalanobis distance).
Fitted models are immutable; scoring is read-only and safe to call
concurrently.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

_SINM_MAGIC = b"SINM"
_SINM_VERSION = 1

# Relative floor for eigenvalues when inverting / square-rooting covariances.
_EIG_FLOOR_REL = 1e-12
# Absolute fallback when the empirical covariance has zero trace (all
# training descriptors identical): keeps the shrunk covariance invertible.
_ZERO_TRACE_SCALE = 1e-12


@dataclass(frozen=True)
class AnomalyScore:
    """Non-negative anomaly score for one sample; higher = more anomalous."""

    value: float
    sample_id: str = ""


@dataclass(frozen=True)
class GaussianModel:
    """Mean + shrunk covariance of the training descriptors.

    covariance = (1-s) * empirical + s * (trace/dim) * I with the population
    (1/N) convention, matching the shrunk-covariance estimator with its
    default s = 0.1. For zero-trace (degenerate) data a tiny absolute ridge
    replaces trace/dim so the matrix stays invertible. When the descriptor
    dimension dwarfs the sample count the dense matrix is only materialised
    on first access.
    """

    mean: np.ndarray
    shrinkage: float
    n_train: int
    _cov: np.ndarray | None = field(default=None, repr=False, compare=False)
    _cov_builder: object = field(default=None, repr=False, compare=False)
    _solve_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def covariance(self) -> np.ndarray:
        if self._cov is None:
            object.__setattr__(self, "_cov", self._cov_builder())
        return self._cov

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def shrink_covariance(cov_emp: np.ndarray, shrinkage: float) -> np.ndarray:
    d = cov_emp.shape[0]
    mu = np.trace(cov_emp) / d
    if mu <= 0.0:
        mu = _ZERO_TRACE_SCALE
    return (1.0 - shrinkage) * cov_emp + shrinkage * mu * np.eye(d)


def fit_gaussian(descriptors: np.ndarray, shrinkage: float = 0.1) -> GaussianModel:
    """Fit mean and shrunk covariance on an (n_train, d) descriptor matrix."""
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"descriptors must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 training descriptors, got {n}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must be in [0, 1], got {shrinkage}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov_emp = Xc.T @ Xc / n
    return GaussianModel(mean, shrinkage, n, _cov=shrink_covariance(cov_emp, shrinkage))


def _solve_against_cov(model: GaussianModel, diffs: np.ndarray) -> np.ndarray:
    """Sigma^{-1} @ diffs.T via a cached Cholesky factor (eigh fallback)."""
    cache = model._solve_cache
    if "cho" not in cache and "eig" not in cache:
        try:
            cache["cho"] = scipy.linalg.cho_factor(model.covariance, lower=True)
        except np.linalg.LinAlgError:
            evals, evecs = np.linalg.eigh(model.covariance)
            floor = max(evals.max(), 0.0) * _EIG_FLOOR_REL
            if floor <= 0.0:
                floor = _ZERO_TRACE_SCALE
            evals = np.maximum(evals, floor)
            cache["eig"] = (evals, evecs)
            logger.warning("covariance not positive definite; using floored eigensolve")
    if "cho" in cache:
        return scipy.linalg.cho_solve(cache["cho"], diffs.T)
    evals, evecs = cache["eig"]
    return evecs @ ((evecs.T @ diffs.T) / evals[:, None])


def mahalanobis(model: GaussianModel, h: np.ndarray) -> float:
    """Squared Mahalanobis distance (h-mu)^T Sigma^{-1} (h-mu).

    Computed through a stable factorization of the shrunk covariance, never
    through an explicit inverse. Zero exactly when h equals the mean.
    """
    return float(mahalanobis_batch(model, np.asarray(h, dtype=np.float64)[None, :])[0])


def mahalanobis_batch(model: GaussianModel, H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: got {H.shape[1]}, model has {model.dim}")
    diffs = H - model.mean
    solved = _solve_against_cov(model, diffs)
    return np.maximum(np.sum(diffs * solved.T, axis=1), 0.0)


def score_per_variable(model: GaussianModel, h: np.ndarray) -> float:
    """Diagonal-only score: sum over dims of (h_j - mu_j)^2 / var_j.

    Uses the per-dimension variances of the model's covariance and ignores
    all correlations. Zero-variance dimensions are skipped (and logged).
    """
    return float(score_per_variable_batch(model, np.asarray(h, dtype=np.float64)[None, :])[0])


def score_per_variable_batch(model: GaussianModel, H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: got {H.shape[1]}, model has {model.dim}")
    var = np.diag(model.covariance).copy()
    ok = var > 0.0
    n_skipped = int((~ok).sum())
    if n_skipped:
        logger.warning("per-variable scoring: skipping %d zero-variance dimensions", n_skipped)
    diffs = H - model.mean
    return np.sum(diffs[:, ok] ** 2 / var[ok], axis=1)


class _Whitener:
    """Symmetric inverse square root of the shrunk covariance.

    Held either densely (W, d x d) or factored as beta*I + V diag(g-beta) V^T
    with V the eigenvectors of the data subspace; the factored form avoids
    materialising d x d matrices when d greatly exceeds n_train. Both forms
    satisfy W Sigma W^T = I on the fitted covariance (up to the eigenvalue
    floor).
    """

    def __init__(self, dense=None, factored=None, dim=None):
        self._dense = dense
        self._factored = factored
        self._dim = dim if dim is not None else dense.shape[0]

    @property
    def dim(self):
        return self._dim

    def apply(self, H: np.ndarray) -> np.ndarray:
        # row-by-row so a descriptor whitens to bit-identical floats whether
        # it arrives in a training batch or as a lone query; exact kNN
        # matches then score exactly zero
        if self._dense is not None:
            return np.stack([self._dense @ h for h in H])
        V, g, beta = self._factored
        return np.stack([beta * h + V @ ((h @ V) * (g - beta)) for h in H])

    def dense(self) -> np.ndarray:
        if self._dense is None:
            V, g, beta = self._factored
            self._dense = beta * np.eye(self._dim) + (V * (g - beta)) @ V.T
        return self._dense


def _fit_whitener(X: np.ndarray, shrinkage: float) -> tuple[np.ndarray, _Whitener, np.ndarray]:
    """Return (mean, whitener, shrunk covariance eigendata is internal)."""
    n, d = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    if d <= n or d <= 512:
        cov = shrink_covariance(Xc.T @ Xc / n, shrinkage)
        evals, evecs = np.linalg.eigh(cov)
        floor = max(evals.max(), 0.0) * _EIG_FLOOR_REL
        if floor <= 0.0:
            floor = _ZERO_TRACE_SCALE
        evals = np.maximum(evals, floor)
        W = (evecs * evals**-0.5) @ evecs.T
        return mean, _Whitener(dense=W), cov
    # d >> n: eigendecompose through the thin SVD of the centered data. The
    # shrunk covariance has eigenvalues (1-s)*lam_i + s*mu on the data
    # subspace and s*mu on its orthogonal complement.
    U, sv, Vt = np.linalg.svd(Xc, full_matrices=False)
    lam = sv**2 / n
    mu_shrink = lam.sum() / d
    if mu_shrink <= 0.0:
        mu_shrink = _ZERO_TRACE_SCALE
    lam_shrunk = (1.0 - shrinkage) * lam + shrinkage * mu_shrink
    complement = shrinkage * mu_shrink
    floor = max(lam_shrunk.max(), complement) * _EIG_FLOOR_REL
    if floor <= 0.0:
        floor = _ZERO_TRACE_SCALE
    lam_shrunk = np.maximum(lam_shrunk, floor)
    beta = max(complement, floor) ** -0.5
    g = lam_shrunk**-0.5
    return mean, _Whitener(factored=(Vt.T, g, beta), dim=d), None


@dataclass(frozen=True)
class WhitenedKnnModel:
    """Whitening transform plus the whitened training descriptors.

    Scoring a descriptor h takes the mean squared Euclidean distance from
    W @ h to its k nearest whitened training descriptors; with a single
    training point and k = 1 this equals the Mahalanobis distance against
    that point under the same covariance.
    """

    gaussian: GaussianModel
    k: int
    whitened_train: np.ndarray
    _whitener: _Whitener = field(repr=False, compare=False, default=None)
    _raw_train: np.ndarray | None = field(repr=False, compare=False, default=None)

    @property
    def whitener(self) -> np.ndarray:
        """Dense W with W Sigma W^T = I (materialised on demand)."""
        return self._whitener.dense()

    @property
    def dim(self) -> int:
        return self.gaussian.dim

    def whiten(self, H: np.ndarray) -> np.ndarray:
        return self._whitener.apply(np.asarray(H, dtype=np.float64))


def fit_whitened_knn(descriptors: np.ndarray, shrinkage: float = 0.1, k: int = 1) -> WhitenedKnnModel:
    """Fit the whitened kNN scorer on an (n_train, d) descriptor matrix.

    W = Sigma^{-1/2} through a symmetric eigendecomposition of the shrunk
    covariance (eigenvalues floored at 1e-12 of the largest); when d greatly
    exceeds n_train the decomposition runs through the thin SVD of the
    centered data instead of forming the d x d covariance.
    """
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"descriptors must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < max(2, k):
        raise ValueError(f"need at least max(2, k)={max(2, k)} training descriptors, got {n}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must be in [0, 1], got {shrinkage}")
    mean, whitener, cov = _fit_whitener(X, shrinkage)
    if cov is not None:
        gaussian = GaussianModel(mean, shrinkage, n, _cov=cov)
    else:
        # d >> n: only build the d x d matrix if someone actually asks for it
        def build(X=X, mean=mean, s=shrinkage):
            Xc = X - mean
            return shrink_covariance(Xc.T @ Xc / len(X), s)

        gaussian = GaussianModel(mean, shrinkage, n, _cov_builder=build)
    return WhitenedKnnModel(gaussian, k, whitener.apply(X), _whitener=whitener, _raw_train=X)


def knn_mean_sq_distances(train: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Mean squared Euclidean distance from each query to its k nearest rows."""
    D = cdist(queries, train, "sqeuclidean")
    if k == 1:
        return D.min(axis=1)
    part = np.partition(D, k - 1, axis=1)[:, :k]
    return part.mean(axis=1)


def score_knn(model: WhitenedKnnModel, h: np.ndarray) -> float:
    """Whitened kNN anomaly score of a single descriptor."""
    return float(score_knn_batch(model, np.asarray(h, dtype=np.float64)[None, :])[0])


def score_knn_batch(model: WhitenedKnnModel, H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: got {H.shape[1]}, model has {model.dim}")
    return knn_mean_sq_distances(model.whitened_train, model.whiten(H), model.k)


def loo_knn_scores(model: WhitenedKnnModel) -> np.ndarray:
    """Leave-one-out kNN scores of the training descriptors themselves.

    Each training sample is scored against the other n-1 whitened training
    descriptors; used to normalise score scales before fusing levels.
    """
    tw = model.whitened_train
    D = cdist(tw, tw, "sqeuclidean")
    np.fill_diagonal(D, np.inf)
    k = min(model.k, tw.shape[0] - 1)
    if k == 1:
        return D.min(axis=1)
    part = np.partition(D, k - 1, axis=1)[:, :k]
    return part.mean(axis=1)


def save_model(model: WhitenedKnnModel, path) -> None:
    """Serialise to the versioned little-endian SINM blob.

    Layout: magic "SINM", u32 version, u32 dim, u32 n_train, u32 k,
    f64 shrinkage, then f64 arrays mean (d), covariance (d*d, row-major),
    W (d*d), whitened_train (n_train*d).
    """
    d = model.dim
    n = model.whitened_train.shape[0]
    W = model.whitener
    if model._raw_train is not None:
        # store rows whitened through dense W, the exact transform a loaded
        # model applies to queries, so exact kNN matches stay exactly zero
        whitened = _Whitener(dense=W).apply(model._raw_train)
    else:
        whitened = model.whitened_train
    parts = [
        _SINM_MAGIC,
        struct.pack("<IIII", _SINM_VERSION, d, n, model.k),
        struct.pack("<d", model.gaussian.shrinkage),
        np.ascontiguousarray(model.gaussian.mean, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.gaussian.covariance, dtype="<f8").tobytes(),
        np.ascontiguousarray(W, dtype="<f8").tobytes(),
        np.ascontiguousarray(whitened, dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> WhitenedKnnModel:
    """Read a SINM blob back into a WhitenedKnnModel."""
    blob = Path(path).read_bytes()
    if blob[:4] != _SINM_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {_SINM_MAGIC!r}")
    version, d, n, k = struct.unpack_from("<IIII", blob, 4)
    if version != _SINM_VERSION:
        raise ValueError(f"{path}: unsupported SINM version {version}")
    (shrinkage,) = struct.unpack_from("<d", blob, 20)
    offset = 28
    expected = offset + 8 * (d + 2 * d * d + n * d)
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated SINM blob ({len(blob)} bytes, expected {expected})")

    def take(count, shape):
        nonlocal offset
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        return arr.astype(np.float64)

    mean = take(d, (d,))
    cov = take(d * d, (d, d))
    W = take(d * d, (d, d))
    whitened = take(n * d, (n, d))
    gaussian = GaussianModel(mean, shrinkage, n, _cov=cov)
    return WhitenedKnnModel(gaussian, k, whitened, _whitener=_Whitener(dense=W))
