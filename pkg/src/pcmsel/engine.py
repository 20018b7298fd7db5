"""Scoring orchestration: repeats, averaging, timing, ranking, and baselines.

The protocol: per repeat r, a shared set of probe row indices is drawn with
seed+r and applied to every model's dataset, each requested method scores
every (model, probe) pair, and the final per-model score is the arithmetic
mean over repeats. Scores are averaged first and ranked once.

Model x method x repeat scoring tasks are pure and independent; they may run
on a thread pool. Per-task wall clock is measured inside the scorers and
summed, so concurrency does not distort per-method totals.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .distribution import score_hscore, score_parc
from .errors import PcmselError, ValidationError
from .proxies import ProxyConfig, TransferabilityScore, score_knn, score_linear, score_svm
from .zoo import GroundTruthTable, ProbeDataset, ZooManifest, load_features, sample_indices

PROXY_METHODS = ("knn1", "knn3", "knn5", "linear", "svm")
DISTRIBUTION_METHODS = ("parc", "hscore")
LEARNING_METHODS = PROXY_METHODS + DISTRIBUTION_METHODS
BASELINE_METHODS = ("size", "data")
ALL_METHODS = LEARNING_METHODS + BASELINE_METHODS

RUN_SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class RankedList:
    """Models ordered by score descending; ties keep manifest order."""

    task_id: str
    method_id: str
    entries: tuple[tuple[str, float], ...]
    budget_b: int

    def __post_init__(self):
        if not self.entries:
            raise ValidationError("ranked list is empty")
        if not 1 <= self.budget_b <= len(self.entries):
            raise ValidationError(f"budget_b={self.budget_b} out of range [1, {len(self.entries)}]")
        values = [v for _, v in self.entries]
        if any(math.isnan(v) for v in values):
            raise ValidationError("ranked list contains NaN scores")
        if any(values[i] < values[i + 1] for i in range(len(values) - 1)):
            raise ValidationError("ranked list entries are not sorted by score descending")

    def model_ids(self) -> list[str]:
        return [mid for mid, _ in self.entries]


@dataclass(frozen=True, eq=False)
class SelectionRun:
    """Everything one scoring pass over the zoo produced."""

    task_id: str
    probe_size: int
    repeats: int
    seed: int
    sample_seeds: tuple[int, ...]
    method_ids: tuple[str, ...]
    scores: Mapping[str, tuple[TransferabilityScore, ...]]
    rankings: Mapping[str, RankedList]
    timings: Mapping[str, float]


def rank_models(
    scores: Sequence[TransferabilityScore],
    manifest: ZooManifest,
    budget_b: int | None = None,
) -> RankedList:
    """Sort models by score descending, manifest order breaking ties."""
    by_id: dict[str, TransferabilityScore] = {}
    for s in scores:
        if s.model_id in by_id:
            raise ValidationError(f"duplicate score for model {s.model_id!r}")
        by_id[s.model_id] = s
    ids = manifest.model_ids()
    missing = [m for m in ids if m not in by_id]
    if missing:
        raise ValidationError(f"missing score(s) for model(s): {missing}")
    extra = sorted(set(by_id) - set(ids))
    if extra:
        raise ValidationError(f"scores cover model(s) not in the manifest: {extra}")
    values = []
    for mid in ids:
        v = by_id[mid].value
        if math.isnan(v):
            raise ValidationError(f"score for model {mid!r} is NaN")
        values.append(v)
    method_ids = {s.method_id for s in scores}
    if len(method_ids) != 1:
        raise ValidationError(f"scores mix methods: {sorted(method_ids)}")
    order = sorted(range(len(ids)), key=lambda i: -values[i])  # stable: ties keep manifest order
    b = len(ids) if budget_b is None else budget_b
    return RankedList(
        task_id=manifest.task_id,
        method_id=next(iter(method_ids)),
        entries=tuple((ids[i], float(values[i])) for i in order),
        budget_b=b,
    )


def baseline_model_size(manifest: ZooManifest) -> RankedList:
    """Rank by parameter count, descending; scores are max-normalized counts."""
    top = max(rec.param_count for rec in manifest.models)
    scores = [
        TransferabilityScore(rec.model_id, "size", (rec.param_count / top,), 0.0)
        for rec in manifest.models
    ]
    return rank_models(scores, manifest)


def baseline_dataset_size(manifest: ZooManifest) -> RankedList:
    """Rank by pretraining-data size among known sizes; unknown (0) models go last.

    Unknown sizes score 0 and keep manifest order at the tail rather than
    ranking as "smallest".
    """
    known = [rec.pretrain_dataset_size for rec in manifest.models if rec.pretrain_dataset_size > 0]
    if not known:
        raise ValidationError("every model has unknown pretrain_dataset_size; cannot rank")
    top = max(known)
    ids = manifest.model_ids()
    ranked_known = sorted(
        (rec for rec in manifest.models if rec.pretrain_dataset_size > 0),
        key=lambda rec: (-rec.pretrain_dataset_size, ids.index(rec.model_id)),
    )
    entries = [(rec.model_id, rec.pretrain_dataset_size / top) for rec in ranked_known]
    entries += [(rec.model_id, 0.0) for rec in manifest.models if rec.pretrain_dataset_size == 0]
    return RankedList(
        task_id=manifest.task_id,
        method_id="data",
        entries=tuple(entries),
        budget_b=len(entries),
    )


def select_top_b(ranked: RankedList, budget_b: int) -> list[str]:
    """The budget_b best model ids, in rank order."""
    if not 1 <= budget_b <= len(ranked.entries):
        raise ValidationError(f"budget {budget_b} out of range [1, {len(ranked.entries)}]")
    return [mid for mid, _ in ranked.entries[:budget_b]]


def _split_seed(seed: int, repeat: int) -> int:
    # decouples the proxy train/test split stream from the sampling stream
    return seed * 1_000_003 + repeat


def _score_one(method: str, probe: ProbeDataset, split_seed: int) -> TransferabilityScore:
    if method.startswith("knn"):
        return score_knn(probe, ProxyConfig(method="knn", k=int(method[3:]), seed=split_seed))
    if method == "linear":
        return score_linear(probe, ProxyConfig(method="linear", seed=split_seed))
    if method == "svm":
        return score_svm(probe, ProxyConfig(method="svm", seed=split_seed))
    if method == "parc":
        return score_parc(probe)
    if method == "hscore":
        return score_hscore(probe)
    raise ValidationError(f"unknown method {method!r}")


def _resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ValidationError(f"thread count must be >= 0 (0 = auto), got {threads}")
    # auto = serial: scoring tasks are dense in small numpy calls, so a pool
    # mostly buys GIL contention; >1 opts in for BLAS-heavy workloads
    return threads if threads > 0 else 1


def score_zoo(
    manifest: ZooManifest,
    methods: Sequence[str],
    probe_size: int,
    repeats: int,
    seed: int,
    base_dir,
    threads: int = 0,
) -> SelectionRun:
    """Score every manifest model with every requested method.

    Any model whose feature file fails to load aborts the run with that model
    named; partial zoos would silently corrupt the evaluation denominators.
    """
    methods = list(methods)
    if not methods:
        raise ValidationError("no methods requested")
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ValidationError(f"unknown method id(s) {unknown}; valid ids: {', '.join(ALL_METHODS)}")
    if len(set(methods)) != len(methods):
        raise ValidationError("duplicate method ids requested")
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    if seed < 0:
        raise ValidationError(f"seed must be >= 0, got {seed}")

    datasets: list[ProbeDataset] = []
    for rec in manifest.models:
        try:
            datasets.append(load_features(rec, base_dir))
        except PcmselError as exc:
            raise ValidationError(f"model {rec.model_id!r}: feature load failed: {exc}") from exc
    smallest = min(ds.n_samples for ds in datasets)
    if probe_size > smallest:
        raise ValidationError(f"probe_size {probe_size} exceeds the smallest dataset ({smallest} rows)")

    learning = [m for m in methods if m in LEARNING_METHODS]
    sample_seeds = tuple(seed + r for r in range(repeats))
    shared_indices = [sample_indices(datasets[0].labels, probe_size, s) for s in sample_seeds]
    probes = [[ds.take(idx) for idx in shared_indices] for ds in datasets]

    n_models = len(datasets)
    tasks = [(mi, method, r) for method in learning for mi in range(n_models) for r in range(repeats)]

    def run_task(task):
        mi, method, r = task
        return _score_one(method, probes[mi][r], _split_seed(seed, r))

    max_workers = min(_resolve_threads(threads), max(1, len(tasks)))
    if max_workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            raw = list(pool.map(run_task, tasks))
    else:
        raw = [run_task(t) for t in tasks]
    by_key = {task: result for task, result in zip(tasks, raw)}

    scores: dict[str, tuple[TransferabilityScore, ...]] = {}
    rankings: dict[str, RankedList] = {}
    timings: dict[str, float] = {}
    for method in methods:
        if method in LEARNING_METHODS:
            merged = []
            for mi, ds in enumerate(datasets):
                parts = [by_key[(mi, method, r)] for r in range(repeats)]
                flags = tuple(sorted({f for p in parts for f in p.flags}))
                merged.append(
                    TransferabilityScore(
                        model_id=ds.model_id,
                        method_id=method,
                        per_repeat=tuple(p.per_repeat[0] for p in parts),
                        wall_clock_seconds=sum(p.wall_clock_seconds for p in parts),
                        flags=flags,
                    )
                )
            scores[method] = tuple(merged)
            rankings[method] = rank_models(merged, manifest)
            timings[method] = sum(s.wall_clock_seconds for s in merged)
        else:
            started = time.perf_counter()
            ranked = baseline_model_size(manifest) if method == "size" else baseline_dataset_size(manifest)
            elapsed = time.perf_counter() - started
            by_id = dict(ranked.entries)
            scores[method] = tuple(
                TransferabilityScore(rec.model_id, method, (by_id[rec.model_id],), elapsed / n_models)
                for rec in manifest.models
            )
            rankings[method] = ranked
            timings[method] = elapsed

    return SelectionRun(
        task_id=manifest.task_id,
        probe_size=probe_size,
        repeats=repeats,
        seed=seed,
        sample_seeds=sample_seeds,
        method_ids=tuple(methods),
        scores=scores,
        rankings=rankings,
        timings=timings,
    )


# ---------------------------------------------------------------------------
# Report (de)serialization


def run_to_dict(run: SelectionRun) -> dict:
    return {
        "schema_version": RUN_SCHEMA_VERSION,
        "task_id": run.task_id,
        "config": {
            "probe_size": run.probe_size,
            "repeats": run.repeats,
            "seed": run.seed,
            "sample_seeds": list(run.sample_seeds),
            "methods": list(run.method_ids),
        },
        "methods": {
            method: {
                "scores": [
                    {
                        "model_id": s.model_id,
                        "value": s.value,
                        "per_repeat": list(s.per_repeat),
                        "flags": list(s.flags),
                    }
                    for s in run.scores[method]
                ],
                "ranking": run.rankings[method].model_ids(),
                "seconds": run.timings[method],
            }
            for method in run.method_ids
        },
    }


def run_from_dict(doc: dict) -> SelectionRun:
    if not isinstance(doc, dict) or "methods" not in doc or "config" not in doc:
        raise ValidationError("run report: missing 'config' or 'methods'")
    if doc.get("schema_version") != RUN_SCHEMA_VERSION:
        raise ValidationError(f"run report: unsupported schema_version {doc.get('schema_version')!r}")
    config = doc["config"]
    task_id = doc["task_id"]
    scores: dict[str, tuple[TransferabilityScore, ...]] = {}
    rankings: dict[str, RankedList] = {}
    timings: dict[str, float] = {}
    for method, block in doc["methods"].items():
        per_model = tuple(
            TransferabilityScore(
                model_id=s["model_id"],
                method_id=method,
                per_repeat=tuple(s["per_repeat"]),
                wall_clock_seconds=0.0,
                flags=tuple(s.get("flags", ())),
            )
            for s in block["scores"]
        )
        by_id = {s.model_id: s.value for s in per_model}
        missing = [m for m in block["ranking"] if m not in by_id]
        if missing or len(block["ranking"]) != len(per_model):
            raise ValidationError(f"run report: ranking and scores disagree for method {method!r}")
        entries = tuple((mid, by_id[mid]) for mid in block["ranking"])
        scores[method] = per_model
        rankings[method] = RankedList(task_id, method, entries, budget_b=len(entries))
        timings[method] = float(block["seconds"])
    return SelectionRun(
        task_id=task_id,
        probe_size=int(config["probe_size"]),
        repeats=int(config["repeats"]),
        seed=int(config["seed"]),
        sample_seeds=tuple(config["sample_seeds"]),
        method_ids=tuple(doc["methods"].keys()),
        scores=scores,
        rankings=rankings,
        timings=timings,
    )


def truth_ordering(truth: GroundTruthTable, manifest: ZooManifest) -> RankedList:
    """The ground-truth ranking: accuracy descending, manifest order on ties."""
    missing = [m for m in manifest.model_ids() if m not in truth.entries]
    if missing:
        raise ValidationError(f"truth table missing model(s): {missing}")
    scores = [
        TransferabilityScore(rec.model_id, "truth", (truth.accuracy_for(rec.model_id),), 0.0)
        for rec in manifest.models
    ]
    return rank_models(scores, manifest)
