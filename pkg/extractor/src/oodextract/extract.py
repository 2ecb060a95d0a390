"""Folder-to-files extraction driver."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from oodbench import EmbeddingSet, LogitSet, write_embedding_file, write_logit_file

from .errors import ExtractError
from .model import DEFAULT_CLASSES, EMBEDDING_DIM, build_model, embed_batch
from .preprocess import image_tensor

log = logging.getLogger("oodextract")

IMAGE_SUFFIXES = {".bmp", ".gif", ".jpeg", ".jpg", ".png", ".tif", ".tiff", ".webp"}


@dataclass
class ExtractionJob:
    images_dir: Path
    embedding_out: Path
    logits_out: Path
    checkpoint: Path | None = None
    batch_size: int = 16
    embedding_dim: int = EMBEDDING_DIM
    classes: int = DEFAULT_CLASSES


@dataclass
class ExtractionResult:
    count: int
    skipped: tuple = field(default_factory=tuple)


def find_images(root):
    """Image files under root, as sorted root-relative POSIX paths."""
    root = Path(root)
    if not root.is_dir():
        raise ExtractError(f"image directory {root} does not exist")
    return tuple(sorted(
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES))


def _check_rows(vectors, ids, what):
    finite = np.isfinite(vectors).all(axis=1)
    if not finite.all():
        raise ExtractError(f"non-finite {what} for {ids[int(np.argmin(finite))]!r}")
    if what == "embedding":
        nonzero = np.any(vectors != 0, axis=1)
        if vectors.shape[0] and not nonzero.all():
            raise ExtractError(
                f"zero embedding for {ids[int(np.argmin(nonzero))]!r}; "
                "the checkpoint produces no features for this input")


def run_extraction(job: ExtractionJob) -> ExtractionResult:
    """Write one embedding row and one logit row per decodable image.

    Undecodable files are skipped with a warning and appear in neither output;
    ids are root-relative paths, identically ordered in both files.
    """
    if job.batch_size < 1:
        raise ExtractError(f"batch size must be positive, got {job.batch_size}")
    model = build_model(job.checkpoint, job.classes)
    if model.fc.in_features != job.embedding_dim:
        raise ExtractError(
            f"model embedding dimension {model.fc.in_features} != expected "
            f"{job.embedding_dim}")

    root = Path(job.images_dir)
    ids, skipped = [], []
    emb_parts, logit_parts = [], []
    pending_ids, pending = [], []

    def flush():
        if not pending:
            return
        emb, logits = embed_batch(model, np.stack(pending))
        emb_parts.append(emb)
        logit_parts.append(logits)
        ids.extend(pending_ids)
        pending.clear()
        pending_ids.clear()

    for rel in find_images(root):
        try:
            tensor = image_tensor(root / rel)
        except (OSError, ValueError) as err:
            log.warning("skipping %s: %s", rel, err)
            skipped.append(rel)
            continue
        pending.append(tensor)
        pending_ids.append(rel)
        if len(pending) == job.batch_size:
            flush()
    flush()

    if emb_parts:
        emb_rows = np.concatenate(emb_parts)
        logit_rows = np.concatenate(logit_parts)
    else:
        emb_rows = np.empty((0, job.embedding_dim), dtype=np.float32)
        logit_rows = np.empty((0, job.classes), dtype=np.float32)
    _check_rows(emb_rows, ids, "embedding")
    _check_rows(logit_rows, ids, "logit row")

    write_embedding_file(EmbeddingSet(emb_rows, tuple(ids)), job.embedding_out)
    write_logit_file(LogitSet(logit_rows, tuple(ids)), job.logits_out)
    return ExtractionResult(count=len(ids), skipped=tuple(skipped))
