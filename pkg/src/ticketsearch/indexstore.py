"""On-disk index artifacts: dense matrix + docstore + lexical postings.

Artifact layout::

    <root>/
      active/            # the generation currently served
        dense.f32        # header (magic, version, rows, dim) + float32 LE rows
        docstore.jsonl   # ChunkRecords, row i of the matrix <-> line i
        lexical.json     # BM25 postings, doc lengths, parameters
        meta.json        # embedder identity, generation, record count
      backups/<utc-ts>/  # rotated previous generations

`active/` always holds a complete, self-consistent generation: appends go
to a staging directory, are re-loaded and re-validated there, and only
then promoted by directory rename. Any inconsistency is an explicit
failure that leaves `active/` untouched.
"""

from __future__ import annotations

import json
import os
import shutil
import struct
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .corpus import ChunkRecord, format_timestamp, parse_corpus, serialize_corpus, utcnow
from .embedding import DIMENSION
from .lexical import Bm25Index

MAGIC = b"DVEC"
FORMAT_VERSION = 1
DEFAULT_BACKUP_RETENTION = 5

_HEADER = struct.Struct("<4sIQI")  # magic, version, rows, dim


class IndexError_(RuntimeError):
    """Artifact is missing, corrupt, or fails self-validation."""


def write_dense_matrix(path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())


def read_dense_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise IndexError_(f"{path}: truncated header")
        magic, version, rows, dim = _HEADER.unpack(header)
        if magic != MAGIC:
            raise IndexError_(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise IndexError_(f"{path}: unsupported version {version}")
        data = fh.read()
    expected = rows * dim * 4
    if len(data) != expected:
        raise IndexError_(f"{path}: expected {expected} payload bytes, got {len(data)}")
    return np.frombuffer(data, dtype="<f4").reshape(rows, dim).copy()


@dataclass
class LoadedIndex:
    """One fully loaded generation; documents come from the artifact docstore,
    never from re-reading the original corpus JSONL."""

    matrix: np.ndarray
    records: list[ChunkRecord]
    lexical: Bm25Index
    meta: dict

    def validate(self, embedder_id: str | None = None) -> None:
        rows = self.matrix.shape[0]
        if rows != len(self.records):
            raise IndexError_(
                f"dense row count {rows} != docstore length {len(self.records)}"
            )
        if rows != self.meta.get("records"):
            raise IndexError_(
                f"meta record count {self.meta.get('records')} != actual {rows}"
            )
        if self.lexical.doc_count != len(self.records):
            raise IndexError_(
                f"lexical doc count {self.lexical.doc_count} != docstore length {len(self.records)}"
            )
        if rows and self.matrix.shape[1] != DIMENSION:
            raise IndexError_(f"dense dimension {self.matrix.shape[1]} != {DIMENSION}")
        if embedder_id is not None and self.meta.get("embedder_id") != embedder_id:
            raise IndexError_(
                f"embedder mismatch: artifact built with {self.meta.get('embedder_id')!r}, "
                f"active embedder is {embedder_id!r}"
            )


def _write_generation(gen_dir: Path, records, matrix, lexical: Bm25Index, meta: dict) -> None:
    gen_dir.mkdir(parents=True, exist_ok=True)
    write_dense_matrix(gen_dir / "dense.f32", matrix)
    (gen_dir / "docstore.jsonl").write_text(serialize_corpus(records), encoding="utf-8")
    (gen_dir / "lexical.json").write_text(
        json.dumps(lexical.to_dict(), ensure_ascii=False, sort_keys=True),
        encoding="utf-8",
    )
    (gen_dir / "meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, sort_keys=True, indent=2), encoding="utf-8"
    )


def _load_generation(gen_dir: Path) -> LoadedIndex:
    gen_dir = Path(gen_dir)
    if not gen_dir.is_dir():
        raise IndexError_(f"no index generation at {gen_dir}")
    try:
        meta = json.loads((gen_dir / "meta.json").read_text(encoding="utf-8"))
        matrix = read_dense_matrix(gen_dir / "dense.f32")
        with open(gen_dir / "docstore.jsonl", "rb") as fh:
            records = parse_corpus(fh, check_contiguity=False)
        lexical = Bm25Index.from_dict(
            json.loads((gen_dir / "lexical.json").read_text(encoding="utf-8"))
        )
    except (OSError, ValueError, KeyError) as exc:
        raise IndexError_(f"failed to load {gen_dir}: {exc}") from exc
    loaded = LoadedIndex(matrix=matrix, records=records, lexical=lexical, meta=meta)
    loaded.validate()
    return loaded


def active_dir(root) -> Path:
    return Path(root) / "active"


def load_active(root) -> LoadedIndex:
    return _load_generation(active_dir(root))


def build_artifact(root, records, embedder, *, k1=1.5, b=0.75) -> LoadedIndex:
    """Build generation 1 for a (possibly empty) corpus under root/active."""
    root = Path(root)
    records = list(records)
    matrix = embedder.embed_batch([r.text for r in records])
    lexical = Bm25Index.from_texts([r.text for r in records], k1=k1, b=b)
    meta = {
        "format_version": FORMAT_VERSION,
        "embedder_id": embedder.identity,
        "generation": 1,
        "records": len(records),
        "bm25": {"k1": k1, "b": b},
        "created_at": format_timestamp(utcnow()),
    }
    target = active_dir(root)
    if target.exists():
        shutil.rmtree(target)
    _write_generation(target, records, matrix, lexical, meta)
    return _load_generation(target)


def dense_search(matrix: np.ndarray, query_vec: np.ndarray, k: int, allowed=None):
    """Exact exhaustive top-k by cosine similarity (rows are unit or zero norm).

    Ties break toward the lower docstore index. Returns [(doc_idx, score)].
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if matrix.shape[0] == 0:
        return []
    scores = matrix.astype(np.float64) @ np.asarray(query_vec, dtype=np.float64)
    if allowed is not None:
        idxs = np.nonzero(allowed)[0]
    else:
        idxs = np.arange(matrix.shape[0])
    if idxs.size == 0:
        return []
    sub = scores[idxs]
    order = np.lexsort((idxs, -sub))[:k]
    return [(int(idxs[i]), float(sub[i])) for i in order]


def append_delta(
    root,
    delta_records,
    embedder,
    *,
    retention: int = DEFAULT_BACKUP_RETENTION,
    now: datetime | None = None,
    after_stage_write=None,
) -> dict:
    """Append new records to the active artifact with atomic promotion.

    Delta records whose identity triple already exists in the active
    docstore (watermark-overlap duplicates) are dropped. The merged
    generation is written to staging, re-loaded and re-validated there,
    and promoted only on success; the previous active rotates to a
    timestamped backup. `after_stage_write` is a test hook invoked with
    the staging path between write and re-validation.
    """
    root = Path(root)
    active = load_active(root)
    active.validate(embedder.identity)

    existing = {r.identity for r in active.records}
    accepted: list[ChunkRecord] = []
    dropped = 0
    for record in delta_records:
        if record.identity in existing:
            dropped += 1
            continue
        existing.add(record.identity)
        accepted.append(record)

    merged = active.records + accepted
    delta_matrix = embedder.embed_batch([r.text for r in accepted])
    if active.matrix.shape[0]:
        matrix = np.vstack([active.matrix, delta_matrix])
    else:
        matrix = delta_matrix
    # Lexical postings are rebuilt over the merged docstore (correctness
    # first; incremental posting updates are a performance extension point).
    params = active.meta.get("bm25", {})
    lexical = Bm25Index.from_texts(
        [r.text for r in merged],
        k1=params.get("k1", 1.5),
        b=params.get("b", 0.75),
    )
    meta = dict(active.meta)
    meta["generation"] = active.meta.get("generation", 1) + 1
    meta["records"] = len(merged)
    meta["created_at"] = format_timestamp(now or utcnow())

    staging = root / f"staging-{uuid.uuid4().hex}"
    try:
        _write_generation(staging, merged, matrix, lexical, meta)
        if after_stage_write is not None:
            after_stage_write(staging)
        staged = _load_generation(staging)
        expected = len(active.records) + len(accepted)
        if len(staged.records) != expected or staged.matrix.shape[0] != expected:
            raise IndexError_(
                f"staged generation has {len(staged.records)} records / "
                f"{staged.matrix.shape[0]} rows, expected {expected}"
            )
        _promote(root, staging, now=now)
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    _prune_backups(root, retention)
    return {
        "accepted": len(accepted),
        "dropped_duplicates": dropped,
        "records": len(merged),
        "generation": meta["generation"],
    }


def _promote(root: Path, staging: Path, now: datetime | None = None) -> None:
    backups = root / "backups"
    backups.mkdir(parents=True, exist_ok=True)
    stamp = (now or datetime.now(timezone.utc)).strftime("%Y%m%dT%H%M%S")
    target = backups / stamp
    n = 0
    while target.exists():
        n += 1
        target = backups / f"{stamp}-{n}"
    # External mutation lock serializes promotions; the two renames are each
    # atomic and a loader only ever sees a complete generation directory.
    os.rename(active_dir(root), target)
    os.rename(staging, active_dir(root))


def _prune_backups(root: Path, retention: int) -> None:
    backups = root / "backups"
    if not backups.is_dir():
        return
    entries = sorted(p for p in backups.iterdir() if p.is_dir())
    for stale in entries[: max(0, len(entries) - retention)]:
        shutil.rmtree(stale, ignore_errors=True)
