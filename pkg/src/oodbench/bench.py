"""Benchmark runner: detector evaluation, k sweeps, calibration, scoring.

Everything here is a pure function of (manifest contents, config): reports
come out identical, byte for byte, across repeated runs and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import _kernels
from .detectors import (
    DEFAULT_K,
    DEFAULT_TARGET_TPR,
    Detector,
    Threshold,
    classify,
    knn_score_values,
    msp_score_values,
    order_statistic_threshold,
    OodScore,
)
from .errors import ConfigError
from .knn import build_index, prefix_mean_distances, query_knn_batch
from .metrics import EvalResult, evaluate
from .store import (
    EmbeddingSet,
    LoadedBenchmark,
    LogitSet,
    align_logits,
    load_benchmark,
    write_embedding_file,
    write_logit_file,
)

DEFAULT_K_SWEEP = (1, 2, 5, 10, 20, 50, 100, 200)


@dataclass
class RunConfig:
    manifest: Path
    detectors: tuple = (Detector.KNN, Detector.MSP)
    k: int = DEFAULT_K
    k_sweep: tuple = DEFAULT_K_SWEEP
    target_tpr: float = DEFAULT_TARGET_TPR
    threads: int | None = None
    out_format: str = "markdown"
    seed: int = 0


@dataclass(eq=False)
class BenchmarkReport:
    """Evaluation rows keyed by (detector value, ood set name), and for sweeps
    by (k, ood set name) with per-k averages over the OOD sets."""

    kind: str
    metadata: dict
    target_tpr: float
    set_names: tuple
    detectors: tuple = ()
    k: int | None = None
    rows: dict = field(default_factory=dict)
    sweep_ks: tuple = ()
    sweep: dict = field(default_factory=dict)
    sweep_avg: dict = field(default_factory=dict)


def _apply_threads(config):
    if config.threads is not None:
        if config.threads < 1:
            raise ConfigError(f"threads must be positive, got {config.threads}")
        _kernels.use_threads(config.threads)


def _check_detectors(config):
    detectors = tuple(Detector(d) for d in config.detectors)
    if not detectors:
        raise ConfigError("no detectors requested")
    return detectors


def _check_msp_inputs(data: LoadedBenchmark):
    if data.id_test_logits is None:
        raise ConfigError("msp requested but id_test has no logit file")
    for s in data.ood:
        if s.logits is None:
            raise ConfigError(f"msp requested but ood set {s.name!r} has no logit file")


def run_benchmark(config: RunConfig) -> BenchmarkReport:
    """AUROC and FPR@target for every (detector, OOD set) pair in the manifest."""
    manifest, data = load_benchmark(config.manifest)
    _apply_threads(config)
    detectors = _check_detectors(config)

    k = int(config.k)
    index = None
    if Detector.KNN in detectors:
        if k < 1 or k > data.train.count:
            raise ConfigError(f"k={k} out of range for training count {data.train.count}")
        index = build_index(data.train)
    if Detector.MSP in detectors:
        _check_msp_inputs(data)

    id_scores = {}
    if index is not None:
        id_scores[Detector.KNN] = knn_score_values(index, data.id_test.vectors, k)
    if Detector.MSP in detectors:
        id_scores[Detector.MSP] = msp_score_values(data.id_test_logits.logits)

    rows = {}
    for det in detectors:
        for s in data.ood:
            if det is Detector.KNN:
                ood_values = knn_score_values(index, s.embeddings.vectors, k)
            else:
                ood_values = msp_score_values(s.logits.logits)
            rows[(det.value, s.name)] = evaluate(id_scores[det], ood_values, config.target_tpr)

    return BenchmarkReport(
        kind="eval",
        metadata=dict(manifest.metadata),
        target_tpr=float(config.target_tpr),
        set_names=tuple(s.name for s in data.ood),
        detectors=tuple(d.value for d in detectors),
        k=k,
        rows=rows,
    )


def sweep_k(config: RunConfig) -> BenchmarkReport:
    """KNN detector across every k in config.k_sweep.

    Neighbors are found once per query at max(k); each smaller k reuses the
    ascending prefix of the same neighbor list, so the k=5 sweep row is
    bit-identical to run_benchmark at k=5.
    """
    manifest, data = load_benchmark(config.manifest)
    _apply_threads(config)

    ks = tuple(int(k) for k in config.k_sweep)
    if not ks:
        raise ConfigError("empty k sweep")
    bad = [k for k in ks if k < 1 or k > data.train.count]
    if bad:
        raise ConfigError(f"sweep k={bad[0]} out of range for training count {data.train.count}")

    index = build_index(data.train)
    kmax = max(ks)

    def prefix_scores(embedding_set):
        _, dist = query_knn_batch(index, embedding_set.vectors, kmax)
        return prefix_mean_distances(dist)

    id_prefix = prefix_scores(data.id_test)
    sweep = {}
    avg = {}
    set_prefix = [(s.name, prefix_scores(s.embeddings)) for s in data.ood]
    for k in ks:
        id_values = id_prefix[:, k - 1]
        for name, pre in set_prefix:
            sweep[(k, name)] = evaluate(id_values, pre[:, k - 1], config.target_tpr)
        if set_prefix:
            avg[k] = {
                "auroc": float(np.mean([sweep[(k, n)].auroc for n, _ in set_prefix])),
                "fpr_at_target": float(np.mean(
                    [sweep[(k, n)].fpr_at_target for n, _ in set_prefix])),
            }

    return BenchmarkReport(
        kind="sweep",
        metadata=dict(manifest.metadata),
        target_tpr=float(config.target_tpr),
        set_names=tuple(s.name for s in data.ood),
        detectors=(Detector.KNN.value,),
        sweep_ks=ks,
        sweep=sweep,
        sweep_avg=avg,
    )


def calibrate_thresholds(data: LoadedBenchmark, detectors, k=DEFAULT_K,
                         target_tpr=DEFAULT_TARGET_TPR, index=None):
    """Per-detector thresholds from the ID test scores of a loaded benchmark."""
    out = {}
    for det in (Detector(d) for d in detectors):
        if det is Detector.KNN:
            if index is None:
                if k < 1 or k > data.train.count:
                    raise ConfigError(
                        f"k={k} out of range for training count {data.train.count}")
                index = build_index(data.train)
            values = knn_score_values(index, data.id_test.vectors, k)
        else:
            if data.id_test_logits is None:
                raise ConfigError("msp calibration needs id_test logits")
            values = msp_score_values(data.id_test_logits.logits)
        out[det] = Threshold(
            value=order_statistic_threshold(values, target_tpr),
            detector=det,
            target_tpr=float(target_tpr),
            calibration_size=len(values),
        )
    return out


def score_samples(data: LoadedBenchmark, embeddings: EmbeddingSet,
                  logits: LogitSet | None, detectors, thresholds,
                  k=DEFAULT_K, index=None):
    """Score and classify each sample row against calibrated thresholds.

    Returns one dict per (sample, detector): sample_id, detector, score,
    threshold, verdict.
    """
    detectors = tuple(Detector(d) for d in detectors)
    for det in detectors:
        if det not in thresholds:
            raise ConfigError(f"missing calibration for detector {det.value!r}")
    if Detector.MSP in detectors:
        if logits is None:
            raise ConfigError("msp scoring needs a logit file for the samples")
        logits = align_logits(embeddings, logits, "samples")

    values = {}
    if Detector.KNN in detectors:
        if index is None:
            index = build_index(data.train)
        values[Detector.KNN] = knn_score_values(index, embeddings.vectors, k)
    if Detector.MSP in detectors:
        values[Detector.MSP] = msp_score_values(logits.logits)

    rows = []
    for i, sample_id in enumerate(embeddings.ids):
        for det in detectors:
            score = OodScore(float(values[det][i]), det, sample_id)
            verdict = classify(score, thresholds[det])
            rows.append({
                "sample_id": sample_id,
                "detector": det.value,
                "score": score.value,
                "threshold": thresholds[det].value,
                "verdict": verdict.value,
            })
    return rows


def make_synthetic(out_dir, seed=0, dim=64, classes=27, n_train=2000,
                   n_id=500, n_ood=500, n_sets=4, with_logits=True) -> Path:
    """Generate a synthetic benchmark under out_dir and return the manifest path.

    ID data is an isotropic Gaussian centered 3 units from the origin along
    axis 0; OOD set i is the same Gaussian centered at -3 along axis i. The
    off-origin ID center matters: cosine distance cannot see a mean shift of
    an origin-centered cloud.
    """
    if dim < 2 or n_sets > dim:
        raise ConfigError(f"need dim >= max(2, n_sets), got dim={dim}, n_sets={n_sets}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    def gaussian(n, axis, sign, prefix):
        center = np.zeros(dim)
        center[axis] = sign * 3.0
        vectors = rng.standard_normal((n, dim)) + center
        ids = tuple(f"{prefix}/{i:06d}" for i in range(n))
        return EmbeddingSet(vectors, ids)

    def logits_for(emb, margin):
        raw = rng.normal(0.0, 1.0, (emb.count, classes))
        hot = rng.integers(0, classes, emb.count)
        raw[np.arange(emb.count), hot] += margin
        return LogitSet(raw, emb.ids)

    train = gaussian(n_train, 0, +1, "train")
    id_test = gaussian(n_id, 0, +1, "id_test")
    write_embedding_file(train, out_dir / "train.oodb")
    write_embedding_file(id_test, out_dir / "id_test.oodb")

    doc = {
        "id_train": "train.oodb",
        "id_test": {"embeddings": "id_test.oodb"},
        "ood_sets": [],
        "metadata": {"source": "synthetic", "seed": str(seed), "dim": str(dim)},
    }
    if with_logits:
        write_logit_file(logits_for(id_test, 6.0), out_dir / "id_test_logits.oodb")
        doc["id_test"]["logits"] = "id_test_logits.oodb"

    for s in range(n_sets):
        name = f"ood_{s + 1}"
        emb = gaussian(n_ood, s, -1, name)
        write_embedding_file(emb, out_dir / f"{name}.oodb")
        entry = {"name": name, "embeddings": f"{name}.oodb"}
        if with_logits:
            write_logit_file(logits_for(emb, 1.0), out_dir / f"{name}_logits.oodb")
            entry["logits"] = f"{name}_logits.oodb"
        doc["ood_sets"].append(entry)

    manifest = out_dir / "manifest.yaml"
    manifest.write_text(yaml.safe_dump(doc, sort_keys=False))
    return manifest
