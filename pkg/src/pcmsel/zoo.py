"""Zoo catalog, probe datasets, probe sampling, and the FMX feature-file format.

File formats owned by this module:

- Manifest: JSON with top-level keys ``version``, ``task_id``, ``label_count``,
  ``metadata_unit``, ``models`` (array of ModelRecord objects, order significant).
- FMX (binary, little-endian): magic ``FMX1``, u32 version (=1), u64 n_samples,
  u64 d, u64 label_count, then n*d float32 features row-major, then n u32
  labels. No padding, no compression.
- Ground truth: JSON with ``task_id`` and an ``entries`` map model_id -> accuracy.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import ValidationError

FMX_MAGIC = b"FMX1"
FMX_VERSION = 1
_FMX_HEADER = struct.Struct("<4sIQQQ")

_MANIFEST_KEYS = ("version", "task_id", "label_count", "metadata_unit", "models")
_RECORD_KEYS = ("model_id", "display_name", "param_count", "pretrain_dataset_size", "feature_path", "tags")

MAX_SAMPLE_ATTEMPTS = 10


@dataclass(frozen=True)
class ModelRecord:
    """Catalog metadata for one candidate model."""

    model_id: str
    display_name: str
    param_count: int
    pretrain_dataset_size: int
    feature_path: str
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.model_id:
            raise ValidationError("model_id must be a non-empty string")
        if self.param_count <= 0:
            raise ValidationError(f"model {self.model_id!r}: param_count must be > 0, got {self.param_count}")
        if self.pretrain_dataset_size < 0:
            raise ValidationError(
                f"model {self.model_id!r}: pretrain_dataset_size must be >= 0 (0 = unknown), "
                f"got {self.pretrain_dataset_size}"
            )


@dataclass(frozen=True)
class ZooManifest:
    """The model zoo: an ordered catalog of candidate models for one task.

    Model order is the canonical tie-break order for every ranking downstream.
    """

    version: int
    task_id: str
    label_count: int
    metadata_unit: str
    models: tuple[ModelRecord, ...]

    def __post_init__(self):
        if not self.models:
            raise ValidationError("manifest contains no models")
        if self.label_count < 2:
            raise ValidationError(f"label_count must be >= 2, got {self.label_count}")
        seen = set()
        for rec in self.models:
            if rec.model_id in seen:
                raise ValidationError(f"duplicate model_id {rec.model_id!r} in manifest")
            seen.add(rec.model_id)

    def model_ids(self) -> list[str]:
        return [rec.model_id for rec in self.models]

    def prefix(self, size: int) -> "ZooManifest":
        """Manifest restricted to the first `size` models."""
        if not 1 <= size <= len(self.models):
            raise ValidationError(f"prefix size {size} out of range [1, {len(self.models)}]")
        return ZooManifest(
            version=self.version,
            task_id=self.task_id,
            label_count=self.label_count,
            metadata_unit=self.metadata_unit,
            models=self.models[:size],
        )


@dataclass(frozen=True, eq=False)
class ProbeDataset:
    """Feature matrix and aligned labels of one model over the probe samples.

    Features are held as float32 (the FMX storage type) and both arrays are
    copied and frozen at construction; instances are safe to share across
    threads.
    """

    model_id: str
    features: np.ndarray
    labels: np.ndarray
    label_count: int

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float32, order="C", copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if feats.ndim != 2:
            raise ValidationError(f"features must be a 2-d matrix, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise ValidationError(
                f"model {self.model_id!r}: feature rows ({feats.shape[0]}) and "
                f"labels ({labels.shape[0] if labels.ndim == 1 else labels.shape}) disagree"
            )
        if self.label_count < 2:
            raise ValidationError(f"label_count must be >= 2, got {self.label_count}")
        bad = ~np.isfinite(feats)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise ValidationError(f"model {self.model_id!r}: non-finite feature at row {row}, column {col}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.label_count):
            raise ValidationError(
                f"model {self.model_id!r}: labels must lie in [0, {self.label_count}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def distinct_labels(self) -> np.ndarray:
        return np.unique(self.labels)

    def take(self, indices) -> "ProbeDataset":
        """New dataset holding the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return ProbeDataset(
            model_id=self.model_id,
            features=self.features[idx],
            labels=self.labels[idx],
            label_count=self.label_count,
        )


@dataclass(frozen=True)
class GroundTruthTable:
    """Fine-tuned accuracy per model: the brute-force oracle, ingested never computed."""

    task_id: str
    entries: Mapping[str, float]

    def __post_init__(self):
        entries = dict(self.entries)
        if len(entries) < 2:
            raise ValidationError(f"truth table needs at least 2 entries, got {len(entries)}")
        for model_id, acc in entries.items():
            if not isinstance(acc, (int, float)) or not np.isfinite(acc):
                raise ValidationError(f"truth accuracy for {model_id!r} is not a finite number: {acc!r}")
            if not 0.0 <= acc <= 1.0:
                raise ValidationError(
                    f"truth accuracy for {model_id!r} is {acc}, outside [0, 1] "
                    "(percentage/fraction unit confusion?)"
                )
        values = list(entries.values())
        if max(values) <= min(values):
            raise ValidationError("truth table is degenerate: all accuracies equal")
        object.__setattr__(self, "entries", MappingProxyType(entries))

    def accuracy_for(self, model_id: str) -> float:
        try:
            return float(self.entries[model_id])
        except KeyError:
            raise ValidationError(f"truth table has no entry for model {model_id!r}") from None


# ---------------------------------------------------------------------------
# Manifest / truth JSON


def _require_keys(doc: dict, keys: Iterable[str], what: str) -> None:
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ValidationError(f"{what}: missing key(s) {missing}")


def load_manifest(path) -> ZooManifest:
    """Parse and validate a manifest file; model order is preserved exactly."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"manifest {path}: top level must be an object")
    _require_keys(doc, _MANIFEST_KEYS, f"manifest {path}")
    records = []
    for i, entry in enumerate(doc["models"]):
        if not isinstance(entry, dict):
            raise ValidationError(f"manifest {path}: models[{i}] is not an object")
        _require_keys(entry, _RECORD_KEYS, f"manifest {path}: models[{i}]")
        records.append(
            ModelRecord(
                model_id=entry["model_id"],
                display_name=entry["display_name"],
                param_count=int(entry["param_count"]),
                pretrain_dataset_size=int(entry["pretrain_dataset_size"]),
                feature_path=entry["feature_path"],
                tags=tuple(entry["tags"]),
            )
        )
    return ZooManifest(
        version=int(doc["version"]),
        task_id=doc["task_id"],
        label_count=int(doc["label_count"]),
        metadata_unit=doc["metadata_unit"],
        models=tuple(records),
    )


def manifest_to_dict(manifest: ZooManifest) -> dict:
    return {
        "version": manifest.version,
        "task_id": manifest.task_id,
        "label_count": manifest.label_count,
        "metadata_unit": manifest.metadata_unit,
        "models": [
            {
                "model_id": rec.model_id,
                "display_name": rec.display_name,
                "param_count": rec.param_count,
                "pretrain_dataset_size": rec.pretrain_dataset_size,
                "feature_path": rec.feature_path,
                "tags": list(rec.tags),
            }
            for rec in manifest.models
        ],
    }


def save_manifest(manifest: ZooManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n", encoding="utf-8")


def load_truth(path) -> GroundTruthTable:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read truth table {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"truth table {path} is not valid JSON: {exc}") from exc
    _require_keys(doc, ("task_id", "entries"), f"truth table {path}")
    return GroundTruthTable(task_id=doc["task_id"], entries={k: float(v) for k, v in doc["entries"].items()})


def save_truth(truth: GroundTruthTable, path) -> None:
    doc = {"task_id": truth.task_id, "entries": dict(truth.entries)}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# FMX binary format


def save_features(dataset: ProbeDataset, path) -> None:
    """Write a dataset as an FMX file. Round-trips bit-exactly through load_features."""
    if dataset.n_samples == 0:
        raise ValidationError("refusing to write an FMX file with 0 samples")
    n, d = dataset.features.shape
    header = _FMX_HEADER.pack(FMX_MAGIC, FMX_VERSION, n, d, dataset.label_count)
    feats = np.ascontiguousarray(dataset.features, dtype="<f4")
    labels = dataset.labels.astype("<u4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(feats.tobytes(order="C"))
        fh.write(labels.tobytes())


def read_fmx(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Read an FMX file, returning (features float32 n x d, labels, label_count)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read feature file {path}: {exc}") from exc
    if len(blob) < _FMX_HEADER.size:
        raise ValidationError(f"feature file {path}: truncated header ({len(blob)} bytes)")
    magic, version, n, d, label_count = _FMX_HEADER.unpack_from(blob)
    if magic != FMX_MAGIC:
        raise ValidationError(f"feature file {path}: bad magic {magic!r}, expected {FMX_MAGIC!r}")
    if version != FMX_VERSION:
        raise ValidationError(f"feature file {path}: unsupported version {version}, expected {FMX_VERSION}")
    expected = _FMX_HEADER.size + n * d * 4 + n * 4
    if len(blob) != expected:
        raise ValidationError(
            f"feature file {path}: header says n={n}, d={d} "
            f"({expected} bytes expected) but file has {len(blob)} bytes"
        )
    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=_FMX_HEADER.size).reshape(n, d)
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=_FMX_HEADER.size + n * d * 4)
    return feats, labels, int(label_count)


def load_features(record: ModelRecord, base_dir) -> ProbeDataset:
    """Load the feature file of a manifest record, validating all dataset invariants."""
    path = Path(base_dir) / record.feature_path
    feats, labels, label_count = read_fmx(path)
    return ProbeDataset(
        model_id=record.model_id,
        features=feats,
        labels=labels.astype(np.int64),
        label_count=label_count,
    )


# ---------------------------------------------------------------------------
# Probe sampling and splitting


def sample_indices(labels, size: int, seed: int) -> np.ndarray:
    """Uniform sample of row indices without replacement, ascending, seeded.

    Sampling is defined on row indices so the same index set can be applied
    to every model's dataset. If the drawn rows carry fewer than 2 distinct
    labels the draw is retried with seed+1, ..., up to 10 attempts.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if not 2 <= size <= n:
        raise ValidationError(f"sample size {size} out of range [2, {n}]")
    for attempt in range(MAX_SAMPLE_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        idx = np.sort(rng.choice(n, size=size, replace=False))
        if np.unique(labels[idx]).size >= 2:
            return idx
    raise ValidationError(
        f"probe sample kept collapsing to a single label after {MAX_SAMPLE_ATTEMPTS} attempts "
        f"(size={size}, seed={seed})"
    )


def sample_probe(dataset: ProbeDataset, size: int, seed: int) -> ProbeDataset:
    """Uniform probe sample of the dataset; deterministic under (seed)."""
    return dataset.take(sample_indices(dataset.labels, size, seed))


def stratified_split(dataset: ProbeDataset, train_fraction: float, seed: int) -> tuple[ProbeDataset, ProbeDataset]:
    """Per-class proportional split; every class lands in both halves.

    Train sizes are apportioned by largest remainder so the total matches
    round(train_fraction * n) whenever the per-class floors allow it.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    labels = dataset.labels
    classes, counts = np.unique(labels, return_counts=True)
    if (counts < 2).any():
        offender = classes[counts < 2][0]
        raise ValidationError(f"class {offender} has fewer than 2 samples; cannot split")
    n = labels.shape[0]
    k = classes.size
    total_train = int(np.floor(train_fraction * n + 0.5))
    total_train = min(max(total_train, k), n - k)

    exact = train_fraction * counts
    base = np.clip(np.floor(exact).astype(np.int64), 1, counts - 1)
    remainder = exact - np.floor(exact)
    leftover = total_train - int(base.sum())
    if leftover > 0:
        for i in np.lexsort((np.arange(k), -remainder)):
            room = int(counts[i] - 1 - base[i])
            take = min(leftover, room)
            base[i] += take
            leftover -= take
            if leftover == 0:
                break
    elif leftover < 0:
        for i in np.lexsort((np.arange(k), remainder)):
            room = int(base[i] - 1)
            give = min(-leftover, room)
            base[i] -= give
            leftover += give
            if leftover == 0:
                break

    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for i, c in enumerate(classes):
        rows = rng.permutation(np.flatnonzero(labels == c))
        train_parts.append(rows[: base[i]])
        test_parts.append(rows[base[i]:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return dataset.take(train_idx), dataset.take(test_idx)
