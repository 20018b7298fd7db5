"""Ranking-quality metrics against the fine-tuned ground truth.

Relevance r(i) is the raw fine-tuned accuracy (a value in [0, 1]) of the
model at predicted rank i. Rel@k applies the zoo-minimum subtraction to both
numerator and denominator, the only reading that keeps it inside [0, 1]
without post-hoc clipping. Both metrics depend only on the induced ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .engine import DISTRIBUTION_METHODS, PROXY_METHODS, RankedList, SelectionRun
from .errors import NumericalError, ValidationError
from .zoo import GroundTruthTable

METHOD_GROUPS = {
    "proxy-based": PROXY_METHODS,
    "distribution-based": DISTRIBUTION_METHODS,
}

EVALUATION_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EvaluationResult:
    method_id: str
    ndcg_at: Mapping[int, float]
    rel_at: Mapping[int, float]
    k_values: tuple[int, ...]

    def __post_init__(self):
        if set(self.ndcg_at) != set(self.k_values) or set(self.rel_at) != set(self.k_values):
            raise ValidationError("ndcg_at and rel_at must be defined for exactly the k set")


def dcg_at_k(relevances_in_rank_order: Sequence[float], k: int) -> float:
    """Discounted cumulative gain of the first k relevances (1-based ranks)."""
    rels = list(relevances_in_rank_order)
    if not 1 <= k <= len(rels):
        raise ValidationError(f"k={k} out of range [1, {len(rels)}]")
    for i, r in enumerate(rels[:k]):
        if not 0.0 <= r <= 1.0:
            raise ValidationError(f"relevance at rank {i + 1} is {r}, outside [0, 1]")
    return sum((2.0 ** r - 1.0) / math.log2(i + 2) for i, r in enumerate(rels[:k]))


def _ranked_relevances(predicted: RankedList, truth: GroundTruthTable) -> list[float]:
    missing = [mid for mid in predicted.model_ids() if mid not in truth.entries]
    if missing:
        raise ValidationError(f"truth table missing model(s): {missing}")
    return [truth.accuracy_for(mid) for mid in predicted.model_ids()]


def ndcg_at_k(predicted: RankedList, truth: GroundTruthTable, k: int) -> float:
    """DCG of the predicted top-k over DCG of the accuracy-descending ideal."""
    rels = _ranked_relevances(predicted, truth)
    if not 1 <= k <= len(rels):
        raise ValidationError(f"k={k} out of range [1, {len(rels)}]")
    ideal = sorted(rels, reverse=True)
    denom = dcg_at_k(ideal, k)
    if denom == 0.0:
        raise NumericalError(f"ideal DCG@{k} is zero; NDCG undefined")
    return dcg_at_k(rels, k) / denom


def rel_at_k(predicted: RankedList, truth: GroundTruthTable, k: int) -> float:
    """Best accuracy in the predicted top-k, min-accuracy-normalized over the zoo."""
    rels = _ranked_relevances(predicted, truth)
    if not 1 <= k <= len(rels):
        raise ValidationError(f"k={k} out of range [1, {len(rels)}]")
    lo, hi = min(rels), max(rels)
    if hi <= lo:
        raise NumericalError("degenerate truth: all accuracies equal, Rel@k undefined")
    return (max(rels[:k]) - lo) / (hi - lo)


def evaluate_selection(
    run: SelectionRun,
    truth: GroundTruthTable,
    k_values: Sequence[int],
) -> dict[str, EvaluationResult]:
    """Both metrics at every requested k, for every method in the run."""
    ks = tuple(int(k) for k in k_values)
    if not ks:
        raise ValidationError("k_values is empty")
    results: dict[str, EvaluationResult] = {}
    for method in run.method_ids:
        ranked = run.rankings[method]
        results[method] = EvaluationResult(
            method_id=method,
            ndcg_at={k: ndcg_at_k(ranked, truth, k) for k in ks},
            rel_at={k: rel_at_k(ranked, truth, k) for k in ks},
            k_values=ks,
        )
    return results


def _group_rows(results: Mapping[str, EvaluationResult], ks: Sequence[int]):
    """Mean and best aggregations over the method groups that are present."""
    rows = []
    for group, members in METHOD_GROUPS.items():
        present = [results[m] for m in members if m in results]
        if not present:
            continue
        for agg_name, agg in (("mean", lambda vals: sum(vals) / len(vals)), ("best", max)):
            rows.append(
                (
                    f"{group} ({agg_name})",
                    {k: agg([r.ndcg_at[k] for r in present]) for k in ks},
                    {k: agg([r.rel_at[k] for r in present]) for k in ks},
                )
            )
    return rows


def evaluation_to_dict(results: Mapping[str, EvaluationResult], task_id: str) -> dict:
    ks = next(iter(results.values())).k_values if results else ()
    doc = {
        "schema_version": EVALUATION_SCHEMA_VERSION,
        "task_id": task_id,
        "k_values": list(ks),
        "methods": {
            method: {
                "ndcg": {str(k): res.ndcg_at[k] for k in res.k_values},
                "rel": {str(k): res.rel_at[k] for k in res.k_values},
            }
            for method, res in results.items()
        },
    }
    doc["groups"] = {
        name: {
            "ndcg": {str(k): ndcg[k] for k in ks},
            "rel": {str(k): rel[k] for k in ks},
        }
        for name, ndcg, rel in _group_rows(results, ks)
    }
    return doc


def format_evaluation_table(results: Mapping[str, EvaluationResult]) -> str:
    """Aligned text table: one row per method (plus labeled group rows), NDCG@k
    and Rel@k column blocks."""
    if not results:
        return "(no methods evaluated)\n"
    ks = next(iter(results.values())).k_values
    rows = [(method, res.ndcg_at, res.rel_at) for method, res in results.items()]
    rows += _group_rows(results, ks)
    name_width = max(len("method"), max(len(name) for name, _, _ in rows))
    header_cells = [f"NDCG@{k}" for k in ks] + [f"Rel@{k}" for k in ks]
    col_width = max(8, max(len(c) for c in header_cells) + 1)
    lines = [
        "method".ljust(name_width) + "".join(c.rjust(col_width) for c in header_cells),
        "-" * (name_width + col_width * len(header_cells)),
    ]
    for name, ndcg, rel in rows:
        cells = [f"{ndcg[k]:.4f}" for k in ks] + [f"{rel[k]:.4f}" for k in ks]
        lines.append(name.ljust(name_width) + "".join(c.rjust(col_width) for c in cells))
    return "\n".join(lines) + "\n"
