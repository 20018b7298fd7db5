"""Statistical primitives shared by the scoring methods.

Conventions fixed here and relied on everywhere else:

- Pearson correlation of a zero-variance vector is defined as 0.0.
- Spearman uses fractional ranks with average-rank tie handling.
- Covariance uses the unbiased divisor n-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from .errors import NumericalError, ValidationError

if TYPE_CHECKING:
    from .zoo import ProbeDataset

DEFAULT_GAMMA_SCALE = 1e-6

DISSIMILARITY_KINDS = ("feature", "label")


def _as_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {a.shape}")
    return a


def pearson(u, v) -> float:
    """Pearson correlation coefficient in [-1, 1]; 0.0 when either vector is constant."""
    a = _as_vector(u, "u")
    b = _as_vector(v, "v")
    if a.size != b.size:
        raise ValidationError(f"length mismatch: {a.size} != {b.size}")
    if a.size < 2:
        raise ValidationError("pearson needs vectors of length >= 2")
    if np.array_equal(a, b):
        # exact shortcut keeps r(x, x) == 1.0 free of rounding noise
        return 0.0 if np.ptp(a) == 0.0 else 1.0
    a = a - a.mean()
    b = b - b.mean()
    sa = float(a @ a)
    sb = float(b @ b)
    if sa == 0.0 or sb == 0.0:
        return 0.0
    r = float((a @ b) / np.sqrt(sa * sb))
    return min(1.0, max(-1.0, r))


def rank_with_ties(x) -> np.ndarray:
    """1-based fractional ranks; tied values share their average rank."""
    a = _as_vector(x, "x")
    if a.size >= 4096:
        ranks = _rank_few_distinct(a)
        if ranks is not None:
            return ranks
    order = np.argsort(a)
    sorted_a = a[order]
    ranks = np.empty(a.size, dtype=np.float64)
    if a.size < 2 or not (sorted_a[1:] == sorted_a[:-1]).any():
        ranks[order] = np.arange(1, a.size + 1, dtype=np.float64)
        return ranks
    is_group_start = np.empty(a.size, dtype=bool)
    is_group_start[0] = True
    np.not_equal(sorted_a[1:], sorted_a[:-1], out=is_group_start[1:])
    group = np.cumsum(is_group_start) - 1
    counts = np.bincount(group)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = starts + (counts - 1) / 2.0 + 1.0
    ranks[order] = avg_rank[group]
    return ranks


def _rank_few_distinct(a: np.ndarray, max_distinct: int = 64) -> np.ndarray | None:
    """Sort-free average ranks when the array holds few distinct values
    (PARC's label dissimilarities have two). Returns None unless the value
    set is provably covered, so the result is always exact."""
    sample = np.unique(a[:: max(1, a.size // 512)])
    if sample.size > max_distinct:
        return None
    idx = np.searchsorted(sample, a)
    np.clip(idx, 0, sample.size - 1, out=idx)
    if not (sample[idx] == a).all():  # sampled values miss some entries
        return None
    counts = np.bincount(idx, minlength=sample.size)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = starts + (counts - 1) / 2.0 + 1.0
    return avg_rank[idx]


def spearman(u, v) -> float:
    """Spearman rank correlation with average-rank ties; constant ranks give 0.0."""
    a = _as_vector(u, "u")
    b = _as_vector(v, "v")
    if a.size != b.size:
        raise ValidationError(f"length mismatch: {a.size} != {b.size}")
    if a.size < 2:
        raise ValidationError("spearman needs vectors of length >= 2")
    return pearson(rank_with_ties(a), rank_with_ties(b))


def covariance_matrix(features) -> np.ndarray:
    """Sample covariance of the rows (divisor n-1), symmetrized."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValidationError(f"features must be a 2-d matrix, got shape {f.shape}")
    n = f.shape[0]
    if n < 2:
        raise ValidationError("covariance needs at least 2 rows")
    centered = f - f.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    return (cov + cov.T) / 2.0


def class_conditional_means(dataset: "ProbeDataset") -> tuple[np.ndarray, np.ndarray]:
    """Per-class mean feature vectors for the classes present in the probe.

    Returns (means, classes) where row i of means is the average feature row
    of label classes[i]; absent classes are dropped.
    """
    feats = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels)
    classes = np.unique(labels)
    means = np.empty((classes.size, feats.shape[1]), dtype=np.float64)
    for i, c in enumerate(classes):
        means[i] = feats[labels == c].mean(axis=0)
    return means, classes


def regularized_inverse(m, gamma_scale: float) -> np.ndarray:
    """(m + gamma*I)^-1 with gamma = gamma_scale * trace(m)/d, or gamma_scale if trace is 0."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {a.shape}")
    scale = float(np.abs(a).max()) if a.size else 0.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-8 * max(1.0, scale)):
        raise ValidationError("matrix is not symmetric")
    d = a.shape[0]
    trace = float(np.trace(a))
    gamma = gamma_scale * trace / d if trace != 0.0 else gamma_scale
    try:
        inv = np.linalg.inv(a + gamma * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"matrix is singular even after regularization: {exc}") from exc
    return (inv + inv.T) / 2.0


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    """Symmetric pairwise 1-Pearson dissimilarities with a zero diagonal."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in DISSIMILARITY_KINDS:
            raise ValidationError(f"kind must be one of {DISSIMILARITY_KINDS}, got {self.kind!r}")
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError(f"dissimilarity matrix must be square, got shape {v.shape}")
        if np.abs(v - v.T).max() > 1e-12:
            raise ValidationError("dissimilarity matrix is not symmetric within 1e-12")
        if np.abs(np.diag(v)).max() != 0.0:
            raise ValidationError("dissimilarity matrix must have a zero diagonal")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def upper_triangle(self) -> np.ndarray:
        """Strictly-upper-triangle entries flattened row-major (diagonal excluded)."""
        return self.values[_triu_indices(self.n)]


@lru_cache(maxsize=8)
def _triu_indices(n: int):
    return np.triu_indices(n, k=1)


def pairwise_dissimilarity(rows, kind: str = "feature") -> DissimilarityMatrix:
    """Entry (i, j) = 1 - pearson(row_i, row_j); constant rows correlate 0 with everything."""
    a = np.asarray(rows, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"rows must form a 2-d matrix, got shape {a.shape}")
    n, d = a.shape
    if n < 2:
        raise ValidationError("need at least 2 rows")
    if d < 2:
        raise ValidationError("pearson over a length-1 vector is undefined (need d >= 2)")
    z = a - a.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", z, z))
    constant = norms == 0.0
    z /= np.where(constant, 1.0, norms)[:, None]
    corr = z @ z.T
    # |corr| <= 1 holds mathematically; values within a few ulp of +-1 are
    # exact (anti)correlations blurred by the normalization rounding, so
    # snapping them back both clips the range and keeps perfectly-correlated
    # pairs exactly tied at 0 / 2
    snap = 1.0 - 4.0 * np.finfo(np.float64).eps
    corr[corr >= snap] = 1.0
    corr[corr <= -snap] = -1.0
    if constant.any():
        corr[constant, :] = 0.0
        corr[:, constant] = 0.0
    dis = np.subtract(1.0, corr, out=corr)
    dis = dis + dis.T  # fresh buffer: exact symmetry without aliasing
    dis *= 0.5
    np.fill_diagonal(dis, 0.0)
    # symmetric with a zero diagonal by construction: skip the re-validation
    matrix = object.__new__(DissimilarityMatrix)
    object.__setattr__(matrix, "values", dis)
    object.__setattr__(matrix, "kind", kind)
    if kind not in DISSIMILARITY_KINDS:
        raise ValidationError(f"kind must be one of {DISSIMILARITY_KINDS}, got {kind!r}")
    return matrix
