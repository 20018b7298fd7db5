"""Bridge conformance gate: features from two small models pass the primary
toolkit's validation and all seven learning scorers run end-to-end on them,
driven through the primary's public CLI."""

import json
import subprocess
import sys

import pytest

from pcmbridge.extraction import ExtractionConfig, extract_features

LEARNING_METHODS = "knn1,knn3,knn5,linear,svm,parc,hscore"


def report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] acceptance {name}: {detail}")
    return ok


@pytest.fixture(scope="module")
def extracted_zoo(bert_dir, gpt2_dir, corpus, tmp_path_factory):
    zoo_dir = tmp_path_factory.mktemp("bridge_zoo")
    summaries = []
    for model_dir in (bert_dir, gpt2_dir):
        config = ExtractionConfig(
            model_ref=str(model_dir),
            snippets_file=str(corpus["snippets"]),
            label_file=str(corpus["labels"]),
            max_tokens=64,
            batch_size=16,
        )
        out = zoo_dir / f"{model_dir.name}.fmx"
        summaries.append(extract_features(config, out))
    fragments = [json.loads((zoo_dir / f"{s.model_id}.manifest.json").read_text()) for s in summaries]
    manifest = {
        "version": 1,
        "task_id": "bridge-smoke",
        "label_count": 4,
        "metadata_unit": "parameters",
        "models": fragments,
    }
    manifest_path = zoo_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return zoo_dir, manifest_path, summaries


def test_criterion_11_bridge_conformance(extracted_zoo, tmp_path):
    zoo_dir, manifest_path, summaries = extracted_zoo

    # 1. every emitted file passes the primary loader's validation
    import pcmsel

    manifest = pcmsel.load_manifest(manifest_path)
    for rec in manifest.models:
        ds = pcmsel.load_features(rec, zoo_dir)
        assert ds.n_samples == 100
        assert ds.label_count == 4

    # 2. all seven learning scorers complete end-to-end via the primary CLI
    out = tmp_path / "run.json"
    proc = subprocess.run(
        [
            sys.executable, "-m", "pcmsel.cli", "score",
            "--manifest", str(manifest_path),
            "--methods", LEARNING_METHODS,
            "--probe-size", "80",
            "--repeats", "2",
            "--seed", "1",
            "--out", str(out),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, f"primary CLI failed: {proc.stderr}"
    doc = json.loads(out.read_text())
    methods = list(doc["methods"].keys())
    models_scored = {s["model_id"] for s in doc["methods"]["hscore"]["scores"]}
    ok = (
        methods == LEARNING_METHODS.split(",")
        and models_scored == {s.model_id for s in summaries}
        and all(len(block["scores"]) == 2 for block in doc["methods"].values())
    )
    assert report(
        "11 (bridge conformance)",
        ok,
        f"models={sorted(models_scored)}, methods={methods}",
    ), f"methods={methods}, models={models_scored}"
