"""Distribution-based transferability scorers: PARC and H-Score.

Both compare the structure of the feature space against the structure of the
label space without training anything, and both are fully deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .proxies import TransferabilityScore
from .stats import (
    DEFAULT_GAMMA_SCALE,
    class_conditional_means,
    covariance_matrix,
    pairwise_dissimilarity,
    regularized_inverse,
    spearman,
)
from .zoo import ProbeDataset


@dataclass(frozen=True, eq=False)
class LabelEncoding:
    """One-hot label matrix (n x C), the vector form of labels used by PARC."""

    one_hot: np.ndarray

    def __post_init__(self):
        m = self.one_hot
        if m.ndim != 2:
            raise ValidationError(f"one_hot must be a 2-d matrix, got shape {m.shape}")
        if not np.isin(m, (0.0, 1.0)).all():
            raise ValidationError("one_hot entries must be 0 or 1")
        if not (m.sum(axis=1) == 1.0).all():
            raise ValidationError("every one_hot row must contain exactly one 1")


def one_hot_labels(labels, label_count: int) -> LabelEncoding:
    labels = np.asarray(labels, dtype=np.int64)
    m = np.zeros((labels.shape[0], label_count), dtype=np.float64)
    m[np.arange(labels.shape[0]), labels] = 1.0
    return LabelEncoding(one_hot=m)


def score_parc(dataset: ProbeDataset) -> TransferabilityScore:
    """Spearman agreement between feature and label pairwise dissimilarities.

    Both matrices hold 1-Pearson dissimilarities (labels in one-hot form);
    the score is the Spearman correlation of their strictly-upper-triangle
    flattenings, a value in [-1, 1].
    """
    started = time.perf_counter()
    if dataset.n_samples < 3:
        raise ValidationError(f"PARC needs at least 3 samples, got {dataset.n_samples}")
    if dataset.feature_dim < 2:
        raise ValidationError("PARC needs feature dimension >= 2")
    if dataset.distinct_labels().size < 2:
        raise NumericalError(
            f"model {dataset.model_id!r}: all probe labels identical; "
            "label dissimilarity is constant and the rank correlation undefined"
        )
    s_feat = pairwise_dissimilarity(dataset.features.astype(np.float64), kind="feature")
    encoding = one_hot_labels(dataset.labels, dataset.label_count)
    s_label = pairwise_dissimilarity(encoding.one_hot, kind="label")
    value = spearman(s_feat.upper_triangle(), s_label.upper_triangle())
    return TransferabilityScore(
        model_id=dataset.model_id,
        method_id="parc",
        per_repeat=(value,),
        wall_clock_seconds=time.perf_counter() - started,
    )


def score_hscore(dataset: ProbeDataset, gamma_scale: float = DEFAULT_GAMMA_SCALE) -> TransferabilityScore:
    """trace(feature-covariance^-1 @ between-class covariance).

    The between-class covariance is taken over the n-row matrix whose i-th
    row is the class-conditional mean of sample i's class, so both matrices
    are d x d. The inverse is ridge-regularized (see regularized_inverse);
    gamma_scale=0 requests the plain inverse.
    """
    started = time.perf_counter()
    present = dataset.distinct_labels()
    if present.size < 2:
        raise NumericalError(f"model {dataset.model_id!r}: H-Score needs at least 2 classes in the probe")
    if dataset.n_samples < present.size + 1:
        raise ValidationError(
            f"H-Score needs at least C+1={present.size + 1} samples, got {dataset.n_samples}"
        )
    feats = dataset.features.astype(np.float64)
    s_feat = covariance_matrix(feats)
    means, classes = class_conditional_means(dataset)
    expanded = means[np.searchsorted(classes, dataset.labels)]
    s_between = covariance_matrix(expanded)
    if float(np.trace(s_feat)) == 0.0:
        if np.any(s_between != 0.0):
            raise NumericalError(
                f"model {dataset.model_id!r}: constant features with nonzero between-class covariance"
            )
        value = 0.0
    else:
        value = float(np.trace(regularized_inverse(s_feat, gamma_scale) @ s_between))
    return TransferabilityScore(
        model_id=dataset.model_id,
        method_id="hscore",
        per_repeat=(value,),
        wall_clock_seconds=time.perf_counter() - started,
    )
