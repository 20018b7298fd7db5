"""Proxy-based transferability scorers.

Each scorer splits the probe into train/test halves, fits a shallow model on
the train features, and reports held-out accuracy as the transferability
score. All scorers are deterministic given (dataset, config): the only
randomness is the stratified split driven by config.seed.

Shared preprocessing rule: per-column z-scoring with train-split statistics,
applied to both splits (columns with zero train variance are left centered
only). Distance- and margin-based proxies are scale sensitive; one rule keeps
the methods comparable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .zoo import ProbeDataset, stratified_split

FLAG_MAX_ITERS = "max-iters-reached"


@dataclass(frozen=True)
class LinearParams:
    learning_rate: float = 0.1
    max_iters: int = 300
    grad_tol: float = 1e-4


@dataclass(frozen=True)
class SvmParams:
    c: float = 1.0
    max_iters: int = 100
    tol: float = 1e-4


@dataclass(frozen=True)
class ProxyConfig:
    method: str = "knn"
    k: int = 1
    train_fraction: float = 0.7
    standardize: bool = True
    seed: int = 0
    linear: LinearParams = field(default_factory=LinearParams)
    svm: SvmParams = field(default_factory=SvmParams)

    def __post_init__(self):
        if self.method not in ("knn", "linear", "svm"):
            raise ValidationError(f"unknown proxy method {self.method!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise ValidationError(f"k must be an odd integer >= 1, got {self.k}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.svm.c <= 0.0:
            raise ValidationError(f"svm regularization c must be > 0, got {self.svm.c}")


@dataclass(frozen=True)
class TransferabilityScore:
    """One model's score under one method; value is the mean over repeats."""

    model_id: str
    method_id: str
    per_repeat: tuple[float, ...]
    wall_clock_seconds: float
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.per_repeat:
            raise ValidationError("per_repeat must hold at least one value")

    @property
    def value(self) -> float:
        return float(np.mean(self.per_repeat))


def standardize_pair(train: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """z-score both matrices using the train split's column statistics."""
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return (train - mu) / sd, (test - mu) / sd


def _split_and_standardize(dataset: ProbeDataset, config: ProxyConfig):
    train, test = stratified_split(dataset, config.train_fraction, config.seed)
    xtr = train.features.astype(np.float64)
    xte = test.features.astype(np.float64)
    if config.standardize:
        xtr, xte = standardize_pair(xtr, xte)
    return xtr, train.labels, xte, test.labels


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray, budget: int = 4_000_000) -> np.ndarray:
    """Squared Euclidean distances between rows of a and rows of b, chunked.

    Computed from explicit differences (not the expanded-product identity) so
    zero distances are exact and catastrophic cancellation cannot reorder
    near-equal neighbours.
    """
    n_a, d = a.shape
    out = np.empty((n_a, b.shape[0]), dtype=np.float64)
    chunk = max(1, budget // max(1, b.shape[0] * d))
    for start in range(0, n_a, chunk):
        stop = min(start + chunk, n_a)
        diff = a[start:stop, None, :] - b[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, out=out[start:stop])
    return out


def _k_smallest_by_distance_then_index(d2: np.ndarray, k: int) -> np.ndarray:
    """Per row: indices of the k smallest entries, ordered by (value, index).

    Partitioning narrows each row to the candidates at or below its k-th
    smallest value (so boundary ties are all present), then a stable sort of
    the candidates reproduces the full-sort tie rule exactly.
    """
    n_rows, n_cols = d2.shape
    if k >= n_cols:
        return np.argsort(d2, axis=1, kind="stable")[:, :k]
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
    within = d2 <= kth[:, None]
    order = np.empty((n_rows, k), dtype=np.int64)
    for i in range(n_rows):
        candidates = np.flatnonzero(within[i])
        ranked = candidates[np.argsort(d2[i, candidates], kind="stable")]
        order[i] = ranked[:k]
    return order


def knn_predict(train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray, k: int, label_count: int) -> np.ndarray:
    """Majority vote among the k nearest train rows by Euclidean distance.

    Deterministic tie handling: neighbour ties resolve to the smaller train
    row index, vote ties to the class with the smaller summed distance, and
    residual ties to the smaller class index.
    """
    if k > train_x.shape[0]:
        raise ValidationError(f"k={k} exceeds the train split size {train_x.shape[0]}")
    d2 = _pairwise_sq_dists(test_x, train_x)
    order = _k_smallest_by_distance_then_index(d2, k)
    votes_y = train_y[order]
    if k == 1:
        return votes_y[:, 0].copy()
    counts = (votes_y[:, :, None] == np.arange(label_count)).sum(axis=1)
    preds = counts.argmax(axis=1).astype(np.int64)  # argmax: smaller class wins ties
    top = counts.max(axis=1)
    ambiguous = np.flatnonzero((counts == top[:, None]).sum(axis=1) > 1)
    if ambiguous.size:
        dist = np.sqrt(np.take_along_axis(d2, order, axis=1))
        for i in ambiguous:
            tied = np.flatnonzero(counts[i] == top[i])
            sums = np.array([dist[i][votes_y[i] == c].sum() for c in tied])
            preds[i] = tied[sums == sums.min()][0]
    return preds


def score_knn(dataset: ProbeDataset, config: ProxyConfig) -> TransferabilityScore:
    """Held-out accuracy of a k-nearest-neighbour vote on the probe features."""
    started = time.perf_counter()
    xtr, ytr, xte, yte = _split_and_standardize(dataset, config)
    preds = knn_predict(xtr, ytr, xte, config.k, dataset.label_count)
    accuracy = float((preds == yte).mean())
    return TransferabilityScore(
        model_id=dataset.model_id,
        method_id=f"knn{config.k}",
        per_repeat=(accuracy,),
        wall_clock_seconds=time.perf_counter() - started,
    )


def softmax_fit(x: np.ndarray, y: np.ndarray, n_classes: int, params: LinearParams):
    """Multinomial logistic regression by full-batch gradient descent, zero init.

    Stops when the gradient norm over (weights, bias) drops below grad_tol.
    Returns (weights d x C, bias C, converged).
    """
    n, d = x.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    converged = False
    for _ in range(params.max_iters):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        grad = (probs - onehot) / n
        gw = x.T @ grad
        gb = grad.sum(axis=0)
        if np.sqrt((gw * gw).sum() + (gb * gb).sum()) < params.grad_tol:
            converged = True
            break
        w -= params.learning_rate * gw
        b -= params.learning_rate * gb
    return w, b, converged


def score_linear(dataset: ProbeDataset, config: ProxyConfig) -> TransferabilityScore:
    """Held-out accuracy of a softmax linear classifier (cross-entropy, GD).

    Non-convergence within max_iters is not an error; the score is reported
    at the last iterate and the result is flagged.
    """
    started = time.perf_counter()
    xtr, ytr, xte, yte = _split_and_standardize(dataset, config)
    classes = np.unique(ytr)
    w, b, converged = softmax_fit(xtr, np.searchsorted(classes, ytr), classes.size, config.linear)
    preds = classes[np.argmax(xte @ w + b, axis=1)]
    accuracy = float((preds == yte).mean())
    return TransferabilityScore(
        model_id=dataset.model_id,
        method_id="linear",
        per_repeat=(accuracy,),
        wall_clock_seconds=time.perf_counter() - started,
        flags=() if converged else (FLAG_MAX_ITERS,),
    )


def _l2svm_newton(x: np.ndarray, y_signed: np.ndarray, c: float, params: SvmParams):
    """Squared-hinge soft-margin linear SVM, solved in the primal.

    min_w 0.5 ||w||^2 + c * sum_i max(0, 1 - y_i w.x_i)^2, with the bias
    carried as an augmented constant column of x. Damped generalized-Newton
    iterations; stops when the gradient norm falls below
    tol * max(1, initial gradient norm).
    """
    n, d = x.shape
    w = np.zeros(d)
    margins = np.ones(n)  # 1 - y * (x @ w) at w = 0

    def gradient(w, margins):
        active = margins > 0.0
        g = w - 2.0 * c * (x[active] * (y_signed[active] * margins[active])[:, None]).sum(axis=0)
        return g, active

    grad, active = gradient(w, margins)
    threshold = params.tol * max(1.0, float(np.linalg.norm(grad)))
    converged = False
    for _ in range(params.max_iters):
        if np.linalg.norm(grad) <= threshold:
            converged = True
            break
        xa = x[active]
        hess = np.eye(d) + 2.0 * c * (xa.T @ xa)
        step = np.linalg.solve(hess, -grad)
        obj = 0.5 * float(w @ w) + c * float((margins[active] ** 2).sum())
        descent = float(grad @ step)
        t = 1.0
        for _ in range(30):  # Armijo backtracking
            w_new = w + t * step
            margins_new = 1.0 - y_signed * (x @ w_new)
            act_new = margins_new > 0.0
            obj_new = 0.5 * float(w_new @ w_new) + c * float((margins_new[act_new] ** 2).sum())
            if obj_new <= obj + 0.01 * t * descent:
                break
            t *= 0.5
        w, margins = w_new, margins_new
        grad, active = gradient(w, margins)
    else:
        converged = bool(np.linalg.norm(grad) <= threshold)
    return w, converged


def score_svm(dataset: ProbeDataset, config: ProxyConfig) -> TransferabilityScore:
    """Held-out accuracy of a soft-margin linear SVM (one-vs-rest above 2 classes).

    Hitting the iteration cap is not an error; the score is reported with a
    flag.
    """
    started = time.perf_counter()
    xtr, ytr, xte, yte = _split_and_standardize(dataset, config)
    ones_tr = np.ones((xtr.shape[0], 1))
    ones_te = np.ones((xte.shape[0], 1))
    xtr_b = np.hstack([xtr, ones_tr])
    xte_b = np.hstack([xte, ones_te])
    classes = np.unique(ytr)
    all_converged = True
    if classes.size == 2:
        y_signed = np.where(ytr == classes[1], 1.0, -1.0)
        w, converged = _l2svm_newton(xtr_b, y_signed, config.svm.c, config.svm)
        all_converged = converged
        preds = np.where(xte_b @ w > 0.0, classes[1], classes[0])
    else:
        margins = np.empty((xte.shape[0], classes.size))
        for j, cls in enumerate(classes):
            y_signed = np.where(ytr == cls, 1.0, -1.0)
            w, converged = _l2svm_newton(xtr_b, y_signed, config.svm.c, config.svm)
            all_converged = all_converged and converged
            margins[:, j] = xte_b @ w
        preds = classes[np.argmax(margins, axis=1)]
    accuracy = float((preds == yte).mean())
    return TransferabilityScore(
        model_id=dataset.model_id,
        method_id="svm",
        per_repeat=(accuracy,),
        wall_clock_seconds=time.perf_counter() - started,
        flags=() if all_converged else (FLAG_MAX_ITERS,),
    )
