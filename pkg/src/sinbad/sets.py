"""Element sets, projections, bin edges, and histogram set descriptors.

A sample is an orderless set of fixed-dimension element vectors. Every element
is pushed through a shared projection, per-projection bin edges are fitted on
training data, and each sample is summarised by the concatenation of its
per-projection cumulative histograms. All operations here are pure functions
of their inputs (plus an explicit seed), so descriptor computation can run in
parallel across samples.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

GAUSSIAN = "gaussian"
IDENTITY = "identity"
PCA = "pca"

UNIFORM = "uniform"
QUANTILE = "quantile"

CUMULATIVE = "cumulative"
PLAIN = "plain"


@dataclass(frozen=True)
class ElementSet:
    """One sample as an unordered collection of element feature vectors.

    `elements` has shape (n_elements, n_dims). Order of the rows is
    meaningless: every descriptor computed downstream is invariant to row
    permutation.
    """

    elements: np.ndarray
    sample_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.elements, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"elements must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("an element set needs at least one element")
        object.__setattr__(self, "elements", arr)

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_dims(self) -> int:
        return self.elements.shape[1]


@dataclass(frozen=True)
class ProjectionMatrix:
    """Shared projection applied to every element of every sample.

    `weights` has shape (n_projections, n_dims); an element f maps to
    weights @ f. Gaussian matrices are fully determined by (seed, shape):
    entries are i.i.d. standard normal drawn from a Philox 4x64 counter-based
    generator (numpy), so identical inputs reproduce bit-identical matrices.
    """

    weights: np.ndarray
    seed: int | None
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))

    @property
    def n_projections(self) -> int:
        return self.weights.shape[0]

    @property
    def n_dims(self) -> int:
        return self.weights.shape[1]


def make_projection(seed: int, n_dims: int, n_projections: int, kind: str = GAUSSIAN) -> ProjectionMatrix:
    """Build a gaussian or identity projection matrix.

    Gaussian entries come from numpy's Philox generator keyed with `seed`
    (standard_normal, ziggurat method). The identity kind requires
    n_projections == n_dims.
    """
    if n_dims < 1 or n_projections < 1:
        raise ValueError("n_dims and n_projections must be >= 1")
    if kind == IDENTITY:
        if n_projections != n_dims:
            raise ValueError(
                f"identity projection needs n_projections == n_dims, "
                f"got {n_projections} != {n_dims}"
            )
        return ProjectionMatrix(np.eye(n_dims), seed=seed, kind=IDENTITY)
    if kind == GAUSSIAN:
        rng = np.random.Generator(np.random.Philox(key=seed))
        weights = rng.standard_normal((n_projections, n_dims))
        return ProjectionMatrix(weights, seed=seed, kind=GAUSSIAN)
    raise ValueError(f"unknown projection kind {kind!r} (use pca_projection for PCA)")


def _pool_elements(train: "np.ndarray | list") -> np.ndarray:
    if isinstance(train, np.ndarray):
        return np.asarray(train, dtype=np.float64)
    return np.concatenate([s.elements if isinstance(s, ElementSet) else np.asarray(s) for s in train])


def pca_projection(train_elements, n_projections: int) -> ProjectionMatrix:
    """Top-variance eigenvectors of the pooled element covariance as rows.

    Rows are unit-norm and deterministic up to sign; the sign is fixed by
    making each row's largest-magnitude entry positive. Asking for more
    projections than the effective rank of the data is an error.
    """
    pooled = _pool_elements(train_elements)
    n, d = pooled.shape
    if n_projections < 1 or n_projections > d:
        raise ValueError(f"n_projections must be in [1, {d}], got {n_projections}")
    centered = pooled - pooled.mean(axis=0)
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    rank = int(np.sum(evals > max(evals[0], 0.0) * 1e-10)) if evals[0] > 0 else 0
    if n_projections > rank:
        raise ValueError(
            f"requested {n_projections} PCA projections but the pooled elements "
            f"have effective rank {rank}"
        )
    rows = evecs[:, :n_projections].T.copy()
    for row in rows:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return ProjectionMatrix(rows, seed=None, kind=PCA)


def project_elements(eset: ElementSet, projection: ProjectionMatrix) -> ElementSet:
    """Apply the projection to every element; row i becomes weights @ f_i."""
    if eset.n_dims != projection.n_dims:
        raise ValueError(
            f"dimension mismatch: elements have {eset.n_dims} dims, "
            f"projection expects {projection.n_dims}"
        )
    return ElementSet(eset.elements @ projection.weights.T, sample_id=eset.sample_id)


@dataclass(frozen=True)
class BinEdges:
    """Per-projection ordered bin edges fitted on training data.

    Each entry of `edges` holds the edge array for one projection. A
    non-degenerate projection carries K+1 strictly increasing edges (quantile
    ties are collapsed, so it may be fewer); a degenerate (constant)
    projection carries a single edge and contributes an empty descriptor
    block. Test-time values outside the fitted span clamp into the first or
    last bin.
    """

    edges: tuple
    mode: str
    n_bins: int
    degenerate: tuple = field(default=())

    @property
    def n_projections(self) -> int:
        return len(self.edges)

    def block_sizes(self) -> list[int]:
        """Descriptor block length contributed by each projection."""
        return [max(len(e) - 2, 0) for e in self.edges]

    @property
    def descriptor_length(self) -> int:
        return sum(self.block_sizes())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.mode.encode())
        h.update(np.int64(self.n_bins).tobytes())
        for e in self.edges:
            h.update(np.asarray(e, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def fit_bin_edges(train_sets, n_bins: int, mode: str = UNIFORM) -> BinEdges:
    """Fit per-projection bin edges over the pooled projected training values.

    uniform: K equal-width bins spanning [global min, global max].
    quantile: edges at the empirical quantiles k/K (numpy linear
    interpolation) of the pooled values; tied quantiles are collapsed.
    Constant projections are flagged degenerate and yield a single bin.
    """
    if n_bins < 2:
        raise ValueError(f"need at least 2 bins, got {n_bins}")
    if mode not in (UNIFORM, QUANTILE):
        raise ValueError(f"unknown edge mode {mode!r}")
    pooled = _pool_elements(train_sets)
    if pooled.shape[0] < 1:
        raise ValueError("no training values to fit edges on")
    edges = []
    degenerate = []
    qs = np.linspace(0.0, 1.0, n_bins + 1)
    for j in range(pooled.shape[1]):
        col = pooled[:, j]
        lo, hi = col.min(), col.max()
        if lo == hi:
            edges.append(np.array([lo]))
            degenerate.append(True)
            continue
        if mode == UNIFORM:
            e = np.linspace(lo, hi, n_bins + 1)
        else:
            e = np.unique(np.quantile(col, qs))
        if len(e) < 3:
            # ties collapsed everything into one bin
            edges.append(np.array([e[0]]))
            degenerate.append(True)
            continue
        edges.append(e)
        degenerate.append(False)
    return BinEdges(tuple(edges), mode=mode, n_bins=n_bins, degenerate=tuple(degenerate))


@dataclass(frozen=True)
class SetDescriptor:
    """Concatenated per-projection cumulative histograms for one sample.

    Every entry lies in [0, 1]; within one projection's block the entries are
    non-decreasing. The final cumulative bin of each block (always exactly 1)
    is dropped, so a K-bin projection contributes K-1 entries. `provenance`
    records (projection seed, bin-edges hash) so descriptors from different
    fits are distinguishable.
    """

    values: np.ndarray
    provenance: tuple = (None, "")
    sample_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


def describe_set(
    eset: ElementSet,
    edges: BinEdges,
    kind: str = CUMULATIVE,
    projection_seed: int | None = None,
) -> SetDescriptor:
    """Histogram descriptor of one projected element set.

    Per projection: count elements per bin, normalise by the element count,
    take the running sum and drop the final entry (cumulative mode), then
    concatenate the blocks in projection order. Plain mode keeps the
    normalised per-bin fractions instead of the running sum, again dropping
    the redundant final bin. Values outside the fitted edge span fall into
    the boundary bins.
    """
    if eset.n_dims != edges.n_projections:
        raise ValueError(
            f"dimension mismatch: set has {eset.n_dims} dims, "
            f"edges cover {edges.n_projections} projections"
        )
    if kind not in (CUMULATIVE, PLAIN):
        raise ValueError(f"unknown descriptor kind {kind!r}")
    values = eset.elements
    n = values.shape[0]
    blocks = []
    for j, e in enumerate(edges.edges):
        if len(e) < 3:
            continue  # degenerate projection: empty block
        interior = e[1:-1]
        # cumulative mass below each interior edge == CDF at the edge;
        # the sum over exact 0/1 indicators keeps this bit-reproducible
        below = (values[:, j][:, None] < interior[None, :]).sum(axis=0)
        cum = below / n
        if kind == CUMULATIVE:
            blocks.append(cum)
        else:
            blocks.append(np.diff(cum, prepend=0.0))
    vals = np.concatenate(blocks) if blocks else np.zeros(0)
    return SetDescriptor(
        vals,
        provenance=(projection_seed, edges.content_hash()),
        sample_id=eset.sample_id,
    )


def describe_sets(
    sets,
    edges: BinEdges,
    kind: str = CUMULATIVE,
    projection_seed: int | None = None,
) -> np.ndarray:
    """Stack descriptors for many projected sets into an (n_sets, d) matrix."""
    return np.stack([describe_set(s, edges, kind, projection_seed).values for s in sets])


def mean_pool(eset: ElementSet) -> np.ndarray:
    """Element-wise arithmetic mean over the set (the simple-averaging baseline)."""
    return eset.elements.mean(axis=0)
