"""Probe-feature extraction: run code snippets through a pre-trained model
and emit an FMX feature file plus a manifest-fragment JSON.

Inputs are JSON-lines: snippets as {"id", "code"} and labels as
{"id", "label"}; rows are joined on id and every snippet must have a label.
The FMX byte layout written here follows the published format: magic
``FMX1``, u32 version 1, u64 n_samples, u64 d, u64 label_count, float32
features row-major, u32 labels, all little-endian.
"""

from __future__ import annotations

import json
import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

logger = logging.getLogger("pcmbridge")

POOLING_MODES = ("mean", "first_token", "last_token")

_FMX_HEADER = struct.Struct("<4sIQQQ")


class BridgeError(Exception):
    """Bad extraction input or configuration."""


@dataclass(frozen=True)
class ExtractionConfig:
    model_ref: str
    snippets_file: str
    label_file: str
    pooling: str = "mean"
    max_tokens: int = 512
    batch_size: int = 8
    device: str = "cpu"

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise BridgeError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.max_tokens < 8:
            raise BridgeError(f"max_tokens must be >= 8, got {self.max_tokens}")
        if self.batch_size < 1:
            raise BridgeError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ExtractionSummary:
    model_id: str
    n_samples: int
    feature_dim: int
    param_count: int
    truncated: int
    feature_path: str
    fragment_path: str


def model_id_from_ref(model_ref: str) -> str:
    """Filesystem- and manifest-safe id derived from a hub id or local path."""
    tail = model_ref.rstrip("/").split("/")[-1]
    slug = re.sub(r"[^A-Za-z0-9._-]+", "-", tail).strip("-")
    if not slug:
        raise BridgeError(f"cannot derive a model id from {model_ref!r}")
    return slug


def read_jsonl(path, required_keys):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            missing = [k for k in required_keys if k not in row]
            if missing:
                raise BridgeError(f"{path}:{lineno}: missing key(s) {missing}")
            rows.append(row)
    if not rows:
        raise BridgeError(f"{path}: no records")
    return rows


def load_aligned_snippets(config: ExtractionConfig) -> tuple[list[str], np.ndarray, int]:
    """Join snippets with labels on id; any snippet without a label is fatal."""
    snippets = read_jsonl(config.snippets_file, ("id", "code"))
    label_rows = read_jsonl(config.label_file, ("id", "label"))
    labels_by_id = {}
    for row in label_rows:
        if row["id"] in labels_by_id:
            raise BridgeError(f"duplicate label for id {row['id']!r}")
        labels_by_id[row["id"]] = row["label"]
    texts, labels = [], []
    for row in snippets:
        if row["id"] not in labels_by_id:
            raise BridgeError(
                f"label file {config.label_file} has no entry for snippet id {row['id']!r}"
            )
        label = labels_by_id[row["id"]]
        if not isinstance(label, int) or label < 0:
            raise BridgeError(f"label for id {row['id']!r} must be a non-negative integer, got {label!r}")
        texts.append(row["code"])
        labels.append(label)
    labels = np.asarray(labels, dtype=np.uint32)
    label_count = int(labels.max()) + 1
    if np.unique(labels).size < 2:
        raise BridgeError("snippets carry fewer than 2 distinct labels; nothing to score")
    return texts, labels, label_count


def write_fmx(path, features: np.ndarray, labels: np.ndarray, label_count: int) -> None:
    feats = np.ascontiguousarray(features, dtype="<f4")
    labs = np.ascontiguousarray(labels, dtype="<u4")
    n, d = feats.shape
    with open(path, "wb") as fh:
        fh.write(_FMX_HEADER.pack(b"FMX1", 1, n, d, label_count))
        fh.write(feats.tobytes(order="C"))
        fh.write(labs.tobytes())


def _pool(hidden: torch.Tensor, mask: torch.Tensor, pooling: str) -> torch.Tensor:
    if pooling == "mean":
        weights = mask.unsqueeze(-1).to(hidden.dtype)
        return (hidden * weights).sum(dim=1) / weights.sum(dim=1)
    if pooling == "first_token":
        return hidden[:, 0, :]
    last = mask.sum(dim=1).long() - 1
    return hidden[torch.arange(hidden.shape[0]), last, :]


def _fallback_token_id(tokenizer) -> int:
    for tid in (tokenizer.cls_token_id, tokenizer.bos_token_id, tokenizer.eos_token_id, tokenizer.pad_token_id):
        if tid is not None:
            return int(tid)
    raise BridgeError("tokenizer defines no special token to stand in for an empty snippet")


def extract_features(config: ExtractionConfig, out_path) -> ExtractionSummary:
    """Forward-pass every snippet, pool the final hidden states, write FMX.

    Encoder-decoder models contribute their encoder output. Sequences longer
    than max_tokens are truncated (counted and logged, not fatal). An empty
    snippet is represented by its begin-of-sequence token alone.
    """
    texts, labels, label_count = load_aligned_snippets(config)
    tokenizer = AutoTokenizer.from_pretrained(config.model_ref)
    model = AutoModel.from_pretrained(config.model_ref)
    if tokenizer.pad_token_id is None:
        tokenizer.pad_token = tokenizer.eos_token or tokenizer.cls_token
    model.eval()
    device = torch.device(config.device)
    model.to(device)
    encoder = model.get_encoder() if getattr(model.config, "is_encoder_decoder", False) else model

    chunks = []
    truncated = 0
    with torch.no_grad():
        for start in range(0, len(texts), config.batch_size):
            batch = texts[start : start + config.batch_size]
            full_lengths = [len(ids) for ids in tokenizer(batch, truncation=False)["input_ids"]]
            truncated += sum(length > config.max_tokens for length in full_lengths)
            enc = tokenizer(
                batch,
                padding=True,
                truncation=True,
                max_length=config.max_tokens,
                return_tensors="pt",
            )
            ids = enc["input_ids"].to(device)
            mask = enc["attention_mask"].to(device)
            if ids.shape[1] == 0:  # every snippet in the batch tokenized to nothing
                ids = torch.zeros((len(batch), 1), dtype=torch.long, device=device)
                mask = torch.zeros_like(ids)
            empty = mask.sum(dim=1) == 0
            if empty.any():
                ids[empty, 0] = _fallback_token_id(tokenizer)
                mask[empty, 0] = 1
            hidden = encoder(input_ids=ids, attention_mask=mask).last_hidden_state
            chunks.append(_pool(hidden, mask, config.pooling).to(torch.float32).cpu().numpy())
    features = np.concatenate(chunks, axis=0)
    if not np.isfinite(features).all():
        raise BridgeError("extraction produced non-finite features")
    if truncated:
        logger.info("truncated %d/%d snippets to %d tokens", truncated, len(texts), config.max_tokens)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_fmx(out_path, features, labels, label_count)

    model_id = model_id_from_ref(config.model_ref)
    param_count = int(sum(p.numel() for p in model.parameters()))
    fragment_path = out_path.with_name(out_path.stem + ".manifest.json")
    fragment = {
        "model_id": model_id,
        "display_name": config.model_ref,
        "param_count": param_count,
        "pretrain_dataset_size": 0,
        "feature_path": out_path.name,
        "tags": ["bridge", config.pooling],
    }
    fragment_path.write_text(json.dumps(fragment, indent=2) + "\n", encoding="utf-8")
    return ExtractionSummary(
        model_id=model_id,
        n_samples=features.shape[0],
        feature_dim=features.shape[1],
        param_count=param_count,
        truncated=truncated,
        feature_path=str(out_path),
        fragment_path=str(fragment_path),
    )
