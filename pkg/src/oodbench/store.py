"""Embedding/logit containers and the benchmark manifest.

Binary container layout (little-endian):

    offset  size  field
    0       4     magic "OODB"
    4       2     format version, currently 1
    6       1     dtype code, 0 = float32
    7       1     reserved, 0
    8       8     row count (u64)
    16      4     dimension (u32)
    20      ...   payload, count*dim float32, row-major
    ...     ...   ids: per row, u32 byte length + UTF-8 bytes

The fixed-width header makes truncation detectable by pure arithmetic before
any value is interpreted. Files named *.csv are instead parsed as CSV with the
id in the first column; dimension is inferred from the first row.

Vectors are stored and kept in memory as float32, so a write/read round trip
is bit-exact for any valid set.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import DataError, FormatError, ManifestError, TruncationError

MAGIC = b"OODB"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sHBBQI")


def _as_rows(vectors, what):
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise DataError(f"{what}: expected a 2-d matrix with at least one column, "
                        f"got shape {arr.shape}")
    return arr


def _check_ids(ids, count, what):
    ids = tuple(str(i) for i in ids)
    if len(ids) != count:
        raise DataError(f"{what}: {len(ids)} ids for {count} rows")
    if len(set(ids)) != len(ids):
        seen = set()
        dup = next(i for i in ids if i in seen or seen.add(i))
        raise DataError(f"{what}: duplicate id {dup!r}")
    return ids


@dataclass(eq=False)
class EmbeddingSet:
    """Immutable matrix of feature vectors with per-row sample ids.

    Rows must be finite and have at least one nonzero component: cosine
    distance is undefined for the zero vector, so such rows are rejected
    here rather than at query time.
    """

    vectors: np.ndarray
    ids: tuple

    def __post_init__(self):
        self.vectors = _as_rows(self.vectors, "embeddings")
        self.ids = _check_ids(self.ids, self.vectors.shape[0], "embeddings")
        bad = ~np.isfinite(self.vectors).all(axis=1)
        if bad.any():
            raise DataError(f"embeddings: non-finite value in row {int(np.argmax(bad))}")
        zero = ~(self.vectors != 0).any(axis=1)
        if zero.any():
            raise DataError(f"embeddings: all-zero vector in row {int(np.argmax(zero))}")
        self.vectors.setflags(write=False)

    @property
    def count(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]


@dataclass(eq=False)
class LogitSet:
    """Pre-softmax classifier outputs; finite, at least two classes."""

    logits: np.ndarray
    ids: tuple

    def __post_init__(self):
        self.logits = _as_rows(self.logits, "logits")
        if self.logits.shape[1] < 2:
            raise DataError(f"logits: need at least 2 classes, got {self.logits.shape[1]}")
        self.ids = _check_ids(self.ids, self.logits.shape[0], "logits")
        bad = ~np.isfinite(self.logits).all(axis=1)
        if bad.any():
            raise DataError(f"logits: non-finite value in row {int(np.argmax(bad))}")
        self.logits.setflags(write=False)

    @property
    def count(self):
        return self.logits.shape[0]

    @property
    def classes(self):
        return self.logits.shape[1]


def _write_container(rows, ids, path):
    rows = np.ascontiguousarray(rows, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, DTYPE_F32, 0, rows.shape[0], rows.shape[1]))
        fh.write(rows.tobytes())
        for sample_id in ids:
            raw = sample_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def _read_container(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TruncationError(f"{path}: {len(blob)} bytes is shorter than the header")
    magic, version, dtype, _reserved, count, dim = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unknown dtype code {dtype}")
    if dim < 1:
        raise FormatError(f"{path}: dimension must be positive, got {dim}")
    need = count * dim * 4
    body = blob[_HEADER.size:]
    if len(body) < need:
        raise TruncationError(
            f"{path}: header promises {count}x{dim} floats ({need} bytes), "
            f"payload holds {len(body)}")
    rows = np.frombuffer(body[:need], dtype="<f4").reshape(count, dim)
    ids = []
    off = need
    for _ in range(count):
        if off + 4 > len(body):
            raise TruncationError(f"{path}: id block truncated at id {len(ids)}")
        (ln,) = struct.unpack_from("<I", body, off)
        off += 4
        if off + ln > len(body):
            raise TruncationError(f"{path}: id block truncated at id {len(ids)}")
        ids.append(body[off:off + ln].decode("utf-8"))
        off += ln
    if off != len(body):
        raise TruncationError(f"{path}: {len(body) - off} trailing bytes after ids")
    return rows, ids


def _read_csv(path):
    rows, ids, dim = [], [], None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            if dim is None:
                dim = len(rec) - 1
                if dim < 1:
                    raise FormatError(f"{path}: line {lineno}: no value columns")
            elif len(rec) - 1 != dim:
                raise FormatError(
                    f"{path}: line {lineno}: expected {dim} values, got {len(rec) - 1}")
            ids.append(rec[0])
            try:
                rows.append([float(x) for x in rec[1:]])
            except ValueError as err:
                raise FormatError(f"{path}: line {lineno}: {err}") from err
    if dim is None:
        raise FormatError(f"{path}: empty CSV")
    return np.asarray(rows, dtype=np.float32), ids


def _load_rows(path):
    if str(path).endswith(".csv"):
        return _read_csv(path)
    return _read_container(path)


def read_embedding_file(path) -> EmbeddingSet:
    """Load embeddings from the binary container, or CSV if the path ends in .csv."""
    rows, ids = _load_rows(path)
    return EmbeddingSet(rows, ids)


def write_embedding_file(es: EmbeddingSet, path):
    _write_container(es.vectors, es.ids, path)


def read_logit_file(path) -> LogitSet:
    rows, ids = _load_rows(path)
    return LogitSet(rows, ids)


def write_logit_file(ls: LogitSet, path):
    _write_container(ls.logits, ls.ids, path)


@dataclass(frozen=True)
class OodSetRef:
    name: str
    embeddings: Path
    logits: Path | None = None


@dataclass(frozen=True)
class BenchmarkManifest:
    """Validated pointers to the datasets of one benchmark run."""

    id_train: Path
    id_test_embeddings: Path
    id_test_logits: Path | None
    ood_sets: tuple
    metadata: dict = field(default_factory=dict)


@dataclass(eq=False)
class LoadedOodSet:
    name: str
    embeddings: EmbeddingSet
    logits: LogitSet | None


@dataclass(eq=False)
class LoadedBenchmark:
    train: EmbeddingSet
    id_test: EmbeddingSet
    id_test_logits: LogitSet | None
    ood: tuple


def align_logits(emb: EmbeddingSet, logits: LogitSet, entry):
    """Reorder logit rows to embedding id order; ids are the join key."""
    if set(emb.ids) != set(logits.ids):
        only_e = next(iter(set(emb.ids) - set(logits.ids)), None)
        only_l = next(iter(set(logits.ids) - set(emb.ids)), None)
        raise ManifestError(
            f"{entry}: embedding and logit ids disagree "
            f"(embedding-only: {only_e!r}, logit-only: {only_l!r})")
    if emb.ids == logits.ids:
        return logits
    pos = {sample_id: i for i, sample_id in enumerate(logits.ids)}
    order = [pos[sample_id] for sample_id in emb.ids]
    return LogitSet(logits.logits[order], emb.ids)


def _manifest_path(base: Path, raw, entry):
    if not isinstance(raw, str) or not raw:
        raise ManifestError(f"{entry}: expected a file path, got {raw!r}")
    path = Path(raw)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ManifestError(f"{entry}: file not found: {path}")
    return path


def _read_entry(reader, path, entry):
    try:
        return reader(path)
    except (FormatError, DataError) as err:
        raise ManifestError(f"{entry}: {err}") from err


def load_benchmark(path) -> tuple[BenchmarkManifest, LoadedBenchmark]:
    """Parse, load, and cross-validate a manifest and everything it references."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ManifestError(f"{path}: not parseable as YAML: {err}") from err
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest must be a mapping")
    base = path.parent

    if "id_train" not in doc:
        raise ManifestError(f"{path}: missing id_train")
    if "id_test" not in doc:
        raise ManifestError(f"{path}: missing id_test")

    train_path = _manifest_path(base, doc["id_train"], "id_train")

    id_test = doc["id_test"]
    if isinstance(id_test, str):
        id_test = {"embeddings": id_test}
    if not isinstance(id_test, dict) or "embeddings" not in id_test:
        raise ManifestError("id_test: expected a path or a mapping with 'embeddings'")
    test_emb_path = _manifest_path(base, id_test["embeddings"], "id_test.embeddings")
    test_log_path = None
    if id_test.get("logits") is not None:
        test_log_path = _manifest_path(base, id_test["logits"], "id_test.logits")

    refs = []
    for i, raw in enumerate(doc.get("ood_sets") or []):
        entry = f"ood_sets[{i}]"
        if not isinstance(raw, dict) or "name" not in raw or "embeddings" not in raw:
            raise ManifestError(f"{entry}: expected a mapping with 'name' and 'embeddings'")
        log_path = None
        if raw.get("logits") is not None:
            log_path = _manifest_path(base, raw["logits"], f"{entry}.logits")
        refs.append(OodSetRef(
            name=str(raw["name"]),
            embeddings=_manifest_path(base, raw["embeddings"], f"{entry}.embeddings"),
            logits=log_path,
        ))
    names = [r.name for r in refs]
    if len(set(names)) != len(names):
        raise ManifestError(f"duplicate ood_sets name: "
                            f"{next(n for n in names if names.count(n) > 1)!r}")

    metadata = {str(k): str(v) for k, v in (doc.get("metadata") or {}).items()}

    train = _read_entry(read_embedding_file, train_path, "id_train")
    id_test_emb = _read_entry(read_embedding_file, test_emb_path, "id_test.embeddings")
    id_test_log = None
    if test_log_path is not None:
        id_test_log = _read_entry(read_logit_file, test_log_path, "id_test.logits")
        id_test_log = align_logits(id_test_emb, id_test_log, "id_test")

    dim = train.dim
    classes = id_test_log.classes if id_test_log is not None else None

    def check_dim(es, entry, p):
        if es.dim != dim:
            raise ManifestError(
                f"{entry}: dimension {es.dim} ({p}) does not match "
                f"id_train dimension {dim} ({train_path})")

    def check_classes(ls, entry, p):
        nonlocal classes
        if classes is None:
            classes = ls.classes
        elif ls.classes != classes:
            raise ManifestError(
                f"{entry}: {ls.classes} classes ({p}) does not match {classes} elsewhere")

    check_dim(id_test_emb, "id_test.embeddings", test_emb_path)

    loaded_ood = []
    for ref in refs:
        entry = f"ood_sets[{ref.name!r}]"
        emb = _read_entry(read_embedding_file, ref.embeddings, f"{entry}.embeddings")
        check_dim(emb, f"{entry}.embeddings", ref.embeddings)
        log = None
        if ref.logits is not None:
            log = _read_entry(read_logit_file, ref.logits, f"{entry}.logits")
            check_classes(log, f"{entry}.logits", ref.logits)
            log = align_logits(emb, log, entry)
        loaded_ood.append(LoadedOodSet(ref.name, emb, log))

    manifest = BenchmarkManifest(
        id_train=train_path,
        id_test_embeddings=test_emb_path,
        id_test_logits=test_log_path,
        ood_sets=tuple(refs),
        metadata=metadata,
    )
    data = LoadedBenchmark(train, id_test_emb, id_test_log, tuple(loaded_ood))
    return manifest, data


def load_manifest(path) -> BenchmarkManifest:
    """Validate a manifest (opens every file, cross-checks dims and id joins)."""
    return load_benchmark(path)[0]
