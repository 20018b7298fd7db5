"""Synthetic model zoos with known ground-truth transferability.

Each synthetic "model" is a Gaussian feature generator whose quality q
controls how far apart its class means sit (radius q * 4 * noise_sigma on a
random sphere). Its ground-truth "fine-tuned accuracy" is the held-out
accuracy of the linear proxy trained on an independent sample ten times the
probe-source size: the brute-force oracle analog, computed once by the
generator and written to the truth table.

All sample rows are label-aligned across models: row i carries the same
label in every model's feature file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .proxies import LinearParams, ProxyConfig, score_linear
from .zoo import (
    GroundTruthTable,
    ModelRecord,
    ProbeDataset,
    ZooManifest,
    save_features,
    save_manifest,
    save_truth,
)

METADATA_MODES = ("correlated", "decorrelated")

TRUTH_SAMPLE_FACTOR = 10
MEAN_RADIUS_FACTOR = 4.0

_PARAM_COUNT_UNIT = 1_000_000
_DATA_SIZE_UNIT = 10_000_000


@dataclass(frozen=True)
class ZooSpec:
    model_count: int = 30
    sample_count: int = 2000
    class_count: int = 4
    feature_dim: int = 16
    quality_range: tuple[float, float] = (0.1, 0.9)
    noise_sigma: float = 1.0
    seed: int = 0
    metadata_mode: str = "correlated"

    def __post_init__(self):
        if self.model_count < 2:
            raise ValidationError(f"model_count must be >= 2, got {self.model_count}")
        if self.class_count < 2:
            raise ValidationError(f"class_count must be >= 2, got {self.class_count}")
        if self.sample_count < 10 * self.class_count:
            raise ValidationError(
                f"sample_count must be >= 10*class_count={10 * self.class_count}, got {self.sample_count}"
            )
        if self.feature_dim < 2:
            raise ValidationError(f"feature_dim must be >= 2, got {self.feature_dim}")
        lo, hi = self.quality_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValidationError(f"quality_range must satisfy 0 <= low <= high <= 1, got {self.quality_range}")
        if self.noise_sigma <= 0.0:
            raise ValidationError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")
        if self.metadata_mode not in METADATA_MODES:
            raise ValidationError(f"metadata_mode must be one of {METADATA_MODES}, got {self.metadata_mode!r}")


@dataclass(frozen=True, eq=False)
class GeneratedZoo:
    manifest: ZooManifest
    truth: GroundTruthTable
    qualities: tuple[float, ...]


def _balanced_labels(n: int, classes: int, rng: np.random.Generator) -> np.ndarray:
    reps = -(-n // classes)
    pool = np.tile(np.arange(classes, dtype=np.int64), reps)[:n]
    return rng.permutation(pool)


def _sphere_directions(classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit direction per class. A Haar-random orthonormal frame when it fits:
    independent directions occasionally land close together, which caps the
    achievable accuracy well below the near-separable regime at q=1."""
    if classes <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, classes)))
        return np.ascontiguousarray(q.T)
    directions = rng.standard_normal((classes, dim))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def generate_zoo(spec: ZooSpec, out_dir) -> GeneratedZoo:
    """Write feature files, manifest.json, and truth.json; fully deterministic.

    Correlated metadata mode sets param_count proportional to the rank of the
    model's quality; decorrelated mode assigns the rank metadata through one
    independent random permutation (so metadata carries no quality signal).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(spec.seed)
    labels_seq, metadata_seq, *model_seqs = root.spawn(2 + spec.model_count)

    labels = _balanced_labels(spec.sample_count, spec.class_count, np.random.default_rng(labels_seq))
    # qualities uniformly cover the range; a 2-model zoo gets exactly the
    # endpoints, and every zoo size spans the range without clustering luck
    qualities = np.linspace(spec.quality_range[0], spec.quality_range[1], spec.model_count)

    # metadata rank r: 1 = worst, model_count = best (by quality in correlated mode)
    quality_rank = np.empty(spec.model_count, dtype=np.int64)
    quality_rank[np.argsort(qualities, kind="mergesort")] = np.arange(1, spec.model_count + 1)
    if spec.metadata_mode == "correlated":
        metadata_rank = quality_rank
    else:
        metadata_rank = np.random.default_rng(metadata_seq).permutation(spec.model_count) + 1

    radius_scale = MEAN_RADIUS_FACTOR * spec.noise_sigma
    records = []
    truth_entries: dict[str, float] = {}
    for j in range(spec.model_count):
        rng = np.random.default_rng(model_seqs[j])
        model_id = f"model-{j:03d}"
        directions = _sphere_directions(spec.class_count, spec.feature_dim, rng)
        means = directions * (qualities[j] * radius_scale)

        features = means[labels] + spec.noise_sigma * rng.standard_normal(
            (spec.sample_count, spec.feature_dim)
        )
        feature_path = f"{model_id}.fmx"
        probe_source = ProbeDataset(
            model_id=model_id,
            features=features.astype(np.float32),
            labels=labels,
            label_count=spec.class_count,
        )
        save_features(probe_source, out_dir / feature_path)

        n_truth = TRUTH_SAMPLE_FACTOR * spec.sample_count
        truth_labels = _balanced_labels(n_truth, spec.class_count, rng)
        truth_features = means[truth_labels] + spec.noise_sigma * rng.standard_normal(
            (n_truth, spec.feature_dim)
        )
        truth_ds = ProbeDataset(
            model_id=model_id,
            features=truth_features.astype(np.float32),
            labels=truth_labels,
            label_count=spec.class_count,
        )
        oracle_cfg = ProxyConfig(
            method="linear",
            seed=int(rng.integers(2**31)),
            linear=LinearParams(),
        )
        truth_entries[model_id] = score_linear(truth_ds, oracle_cfg).value

        records.append(
            ModelRecord(
                model_id=model_id,
                display_name=f"synthetic model {j:03d} (q={qualities[j]:.3f})",
                param_count=int(metadata_rank[j]) * _PARAM_COUNT_UNIT,
                pretrain_dataset_size=int(metadata_rank[j]) * _DATA_SIZE_UNIT,
                feature_path=feature_path,
                tags=("synthetic",),
            )
        )

    manifest = ZooManifest(
        version=1,
        task_id=f"synthetic-seed{spec.seed}",
        label_count=spec.class_count,
        metadata_unit="synthetic rank units",
        models=tuple(records),
    )
    truth = GroundTruthTable(task_id=manifest.task_id, entries=truth_entries)
    save_manifest(manifest, out_dir / "manifest.json")
    save_truth(truth, out_dir / "truth.json")
    return GeneratedZoo(manifest=manifest, truth=truth, qualities=tuple(float(q) for q in qualities))
