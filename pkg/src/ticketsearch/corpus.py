"""Chunk records and the JSONL corpus wire format.

A corpus is an ordered sequence of ChunkRecord, materialized on disk as
UTF-8 JSONL (one record per newline-terminated line, no BOM). Parsing is
streaming and line-by-line, so memory stays bounded by one record.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone

SOURCE_TYPES = ("ticket", "web", "pdf", "repo_doc")

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

# Wire field order, fixed so serialized corpora are diffable.
_FIELDS = (
    "ticket_id",
    "conversation_id",
    "chunk_id",
    "text",
    "title",
    "department",
    "last_updated",
    "source_type",
    "ingest_job_id",
)


class CorpusError(ValueError):
    """Malformed corpus content (bad line, bad field, duplicate identity)."""


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts.strftime(TIMESTAMP_FORMAT)


def parse_timestamp(value: str) -> datetime:
    try:
        return datetime.strptime(value, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
    except (TypeError, ValueError) as exc:
        raise CorpusError(f"invalid timestamp {value!r}") from exc


def utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class ChunkRecord:
    """One indexed text fragment with identity, filtering, and traceability metadata."""

    ticket_id: str
    conversation_id: str
    chunk_id: int
    text: str
    title: str
    department: str
    last_updated: datetime
    source_type: str
    ingest_job_id: str

    def __post_init__(self) -> None:
        if not self.ticket_id:
            raise CorpusError("ticket_id must be non-empty")
        if not self.conversation_id:
            raise CorpusError("conversation_id must be non-empty")
        if not isinstance(self.chunk_id, int) or self.chunk_id < 0:
            raise CorpusError("chunk_id must be a non-negative integer")
        if not self.text.strip():
            raise CorpusError("text must be non-empty after trimming")
        if self.source_type not in SOURCE_TYPES:
            raise CorpusError(f"unknown source_type {self.source_type!r}")
        if self.last_updated.tzinfo is None:
            object.__setattr__(
                self, "last_updated", self.last_updated.replace(tzinfo=timezone.utc)
            )

    @property
    def identity(self) -> tuple[str, str, int]:
        return (self.ticket_id, self.conversation_id, self.chunk_id)

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in _FIELDS}
        d["last_updated"] = format_timestamp(self.last_updated)
        return d

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ChunkRecord":
        for name in _FIELDS:
            if name not in d:
                raise CorpusError(f"missing field {name}")
        unknown = set(d) - set(_FIELDS)
        if unknown:
            raise CorpusError(f"unknown field {sorted(unknown)[0]}")
        return cls(
            ticket_id=str(d["ticket_id"]),
            conversation_id=str(d["conversation_id"]),
            chunk_id=d["chunk_id"],
            text=d["text"],
            title=d["title"],
            department=d["department"],
            last_updated=parse_timestamp(d["last_updated"]),
            source_type=d["source_type"],
            ingest_job_id=str(d["ingest_job_id"]),
        )


def _iter_lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for line in stream:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        yield line


def parse_corpus(
    stream,
    *,
    departments=None,
    now: datetime | None = None,
    check_contiguity: bool = True,
) -> list[ChunkRecord]:
    """Parse a JSONL corpus stream into records, preserving input order.

    `departments`, when given, is the closed set of allowed department tags;
    an unknown department is a hard error. Duplicate identity triples are
    rejected, never silently dropped.
    """
    records: list[ChunkRecord] = []
    seen: set[tuple[str, str, int]] = set()
    now = now or utcnow()
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(payload, dict):
            raise CorpusError(f"line {lineno}: record must be a JSON object")
        try:
            record = ChunkRecord.from_dict(payload)
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from exc
        if record.identity in seen:
            raise CorpusError(
                f"line {lineno}: duplicate identity triple {record.identity}"
            )
        if departments is not None and record.department not in departments:
            raise CorpusError(
                f"line {lineno}: unknown department {record.department!r}"
            )
        if record.last_updated > now:
            raise CorpusError(
                f"line {lineno}: last_updated {format_timestamp(record.last_updated)} is in the future"
            )
        seen.add(record.identity)
        records.append(record)
    if check_contiguity:
        _check_chunk_contiguity(records)
    return records


def _check_chunk_contiguity(records: list[ChunkRecord]) -> None:
    by_conversation: dict[tuple[str, str], set[int]] = {}
    for r in records:
        by_conversation.setdefault((r.ticket_id, r.conversation_id), set()).add(r.chunk_id)
    for key, ids in by_conversation.items():
        if ids != set(range(len(ids))):
            raise CorpusError(
                f"conversation {key} chunk_ids are not a contiguous run 0..n-1"
            )


def serialize_corpus(records) -> str:
    """Canonical JSONL form: fixed field order, compact separators."""
    return "".join(r.to_json_line() + "\n" for r in records)


def write_corpus(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_corpus(records))


def read_corpus(path, **kwargs) -> list[ChunkRecord]:
    with open(path, "rb") as fh:
        return parse_corpus(fh, **kwargs)
