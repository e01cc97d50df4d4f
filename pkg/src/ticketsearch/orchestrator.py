"""Ingestion orchestration: persistent job manifests, the serialized
mutation critical section, engine hot-swap, the transactional watermark,
and the simulated remote-offload executor.

Layout under the orchestrator data directory::

    index/                  # artifact root (see indexstore)
    jobs/<job_id>/manifest.json
    jobs/<job_id>/job.log
    watermark.json
"""

from __future__ import annotations

import json
import logging
import os
import queue
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from . import indexstore
from .corpus import (
    ChunkRecord,
    CorpusError,
    format_timestamp,
    parse_timestamp,
    utcnow,
)
from .normalize import RawMessage, chunk_conversation, normalize_text
from .synthetic import generate_synthetic_threads

logger = logging.getLogger(__name__)

JOB_KINDS = ("web", "pdf", "repo_docs", "rt_weekly")
JOB_STATES = ("queued", "running", "succeeded", "failed")
OFFLOAD_STAGES = ("resource_requested", "waiting_resources", "running_remote", "sync_back")

_DOC_SOURCE_TYPE = {"web": "web", "pdf": "pdf", "repo_docs": "repo_doc"}

_VALID_TRANSITIONS = {
    "queued": {"running"},
    "running": {"succeeded", "failed"},
    "succeeded": set(),
    "failed": set(),
}


class ValidationError(ValueError):
    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field = field_name


class JobFailure(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


class CrashInjected(RuntimeError):
    """Raised by test fault injectors to simulate a crash at a stage boundary."""


def atomic_write_json(path, payload) -> None:
    """Write JSON durably: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, indent=2, default=str)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


@dataclass
class JobManifest:
    job_id: str
    kind: str
    state: str = "queued"
    current_stage: str = ""
    progress: float = 0.0
    request: dict = field(default_factory=dict)
    stage_metrics: dict = field(default_factory=dict)
    created_at: str = ""
    updated_at: str = ""
    error: str | None = None
    offload: dict | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "current_stage": self.current_stage,
            "progress": self.progress,
            "request": self.request,
            "stage_metrics": self.stage_metrics,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "error": self.error,
            "offload": self.offload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobManifest":
        return cls(**d)


class WatermarkStore:
    """Persisted reference timestamp; advances atomically and never backward."""

    def __init__(self, path):
        self.path = Path(path)

    def read(self) -> datetime | None:
        if not self.path.is_file():
            return None
        payload = json.loads(self.path.read_text(encoding="utf-8"))
        return parse_timestamp(payload["timestamp"])

    def advance(self, ts: datetime) -> None:
        current = self.read()
        if current is not None and ts < current:
            raise ValueError(
                f"watermark may not move backward ({format_timestamp(ts)} < {format_timestamp(current)})"
            )
        atomic_write_json(self.path, {"timestamp": format_timestamp(ts)})


# --- ticket sources -------------------------------------------------------

class SyntheticTicketSource:
    """Incremental source backed by the deterministic generator."""

    def __init__(self, seed: int, n_tickets: int, languages=("es", "en", "gl"),
                 departments=None, **kwargs):
        from .synthetic import DEFAULT_DEPARTMENTS

        self._threads = generate_synthetic_threads(
            seed, n_tickets, languages,
            departments=departments or DEFAULT_DEPARTMENTS, **kwargs,
        )

    def fetch(self, start: datetime, end: datetime) -> list[list[RawMessage]]:
        out = []
        for thread in self._threads:
            window = [m for m in thread if start <= m.last_updated <= end]
            if window:
                out.append(window)
        return out


class JsonlTicketSource:
    """Raw-message JSONL file: one message object per line."""

    def __init__(self, path):
        self.path = Path(path)

    def fetch(self, start: datetime, end: datetime) -> list[list[RawMessage]]:
        threads: dict[tuple[str, str], list[RawMessage]] = {}
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    message = RawMessage(
                        ticket_id=str(d["ticket_id"]),
                        conversation_id=str(d["conversation_id"]),
                        position=int(d["position"]),
                        raw_text=d["raw_text"],
                        last_updated=parse_timestamp(d["last_updated"]),
                        department=d["department"],
                    )
                except (KeyError, ValueError, CorpusError) as exc:
                    raise CorpusError(f"{self.path}: line {lineno}: {exc}") from exc
                if start <= message.last_updated <= end:
                    threads.setdefault(
                        (message.ticket_id, message.conversation_id), []
                    ).append(message)
        for msgs in threads.values():
            msgs.sort(key=lambda m: m.position)
        return [threads[k] for k in sorted(threads)]


# --- remote offload -------------------------------------------------------

class RemoteFailure(RuntimeError):
    pass


@dataclass
class RemoteHandle:
    handle_id: str
    cancelled: int = 0


class SimulatedRemoteExecutor:
    """In-process stand-in for a cluster scheduler with configurable
    queueing delay and failure injection."""

    def __init__(self, queue_delay: float = 0.0, fail_stage: str | None = None):
        self.queue_delay = queue_delay
        self.fail_stage = fail_stage
        self.cancel_calls: list[str] = []

    def request(self) -> RemoteHandle:
        if self.fail_stage == "resource_requested":
            raise RemoteFailure("resource request rejected")
        return RemoteHandle(handle_id=uuid.uuid4().hex)

    def wait_ready(self, handle: RemoteHandle) -> None:
        if self.queue_delay:
            time.sleep(self.queue_delay)
        if self.fail_stage == "waiting_resources":
            raise RemoteFailure("allocation timed out")

    def run(self, handle: RemoteHandle, workload):
        if self.fail_stage == "running_remote":
            raise RemoteFailure("remote workload failed")
        return workload()

    def sync(self, handle: RemoteHandle) -> None:
        if self.fail_stage == "sync_back":
            raise RemoteFailure("artifact sync failed")

    def cancel(self, handle: RemoteHandle) -> None:
        handle.cancelled += 1
        self.cancel_calls.append(handle.handle_id)


# --- orchestrator ---------------------------------------------------------

class IngestOrchestrator:
    def __init__(
        self,
        data_dir,
        config,
        engine_manager,
        embedder,
        *,
        remote_executor=None,
        ticket_source=None,
        clock=utcnow,
    ):
        self.data_dir = Path(data_dir)
        self.config = config
        self.engine_manager = engine_manager
        self.embedder = embedder
        self.remote_executor = remote_executor or SimulatedRemoteExecutor(
            queue_delay=config.offload.queue_delay_seconds
        )
        self.ticket_source = ticket_source
        self.clock = clock

        self.jobs_dir = self.data_dir / "jobs"
        self.artifact_root = self.data_dir / "index"
        self.watermark = WatermarkStore(self.data_dir / "watermark.json")

        self.mutation_lock = threading.Lock()
        self.checkpoint_hook = None  # test hook: callable(stage_name)
        self.mutation_trace: list[tuple[str, str, float]] = []

        self._queue: queue.Queue = queue.Queue()
        self._worker: threading.Thread | None = None
        self._stop = threading.Event()

    # -- artifact bootstrap

    def ensure_artifact(self) -> None:
        if not indexstore.active_dir(self.artifact_root).is_dir():
            indexstore.build_artifact(
                self.artifact_root, [], self.embedder,
                k1=self.config.bm25.k1, b=self.config.bm25.b,
            )
        self.engine_manager.reload(self.artifact_root)

    # -- worker lifecycle

    def start(self) -> None:
        if self._worker is None or not self._worker.is_alive():
            self._stop.clear()
            self._worker = threading.Thread(target=self._drain, daemon=True)
            self._worker.start()

    def stop(self) -> None:
        self._stop.set()
        self._queue.put(None)
        if self._worker is not None:
            self._worker.join(timeout=10)
            self._worker = None

    def _drain(self) -> None:
        while not self._stop.is_set():
            item = self._queue.get()
            if item is None:
                continue
            try:
                self.run_job(item)
            except Exception:
                logger.exception("job %s crashed", item)

    # -- manifests

    def _manifest_path(self, job_id: str) -> Path:
        return self.jobs_dir / job_id / "manifest.json"

    def _log_path(self, job_id: str) -> Path:
        return self.jobs_dir / job_id / "job.log"

    def save_manifest(self, manifest: JobManifest) -> None:
        manifest.updated_at = format_timestamp(self.clock())
        atomic_write_json(self._manifest_path(manifest.job_id), manifest.to_dict())

    def load_manifest(self, job_id: str) -> JobManifest:
        path = self._manifest_path(job_id)
        if not path.is_file():
            raise KeyError(job_id)
        return JobManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def list_jobs(self) -> list[JobManifest]:
        if not self.jobs_dir.is_dir():
            return []
        manifests = []
        for entry in sorted(self.jobs_dir.iterdir()):
            if (entry / "manifest.json").is_file():
                manifests.append(self.load_manifest(entry.name))
        manifests.sort(key=lambda m: m.created_at)
        return manifests

    def _log(self, job_id: str, message: str) -> None:
        path = self._log_path(job_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(f"{format_timestamp(self.clock())} {message}\n")

    def _transition(self, manifest: JobManifest, state: str) -> None:
        if state not in _VALID_TRANSITIONS[manifest.state]:
            raise ValueError(f"illegal transition {manifest.state} -> {state}")
        manifest.state = state
        self.save_manifest(manifest)

    # -- submission

    def submit_job(self, kind: str, request: dict) -> str:
        """Validate, persist a queued manifest, and enqueue; non-blocking."""
        if kind not in JOB_KINDS:
            raise ValidationError(f"unknown job kind {kind!r}", "kind")
        self._validate_request(kind, request)
        job_id = f"{kind}-{self.clock().strftime('%Y%m%dT%H%M%S')}-{uuid.uuid4().hex[:8]}"
        manifest = JobManifest(
            job_id=job_id,
            kind=kind,
            request=request,
            created_at=format_timestamp(self.clock()),
        )
        self.save_manifest(manifest)
        self._log(job_id, f"queued kind={kind}")
        self._queue.put(job_id)
        return job_id

    def _validate_request(self, kind: str, request: dict) -> None:
        if not isinstance(request, dict):
            raise ValidationError("request must be an object")
        if kind == "rt_weekly":
            if "source_path" in request and "synthetic" in request:
                raise ValidationError(
                    "give either source_path or synthetic, not both", "source_path"
                )
            if "synthetic" in request:
                spec = request["synthetic"]
                if not isinstance(spec, dict) or "seed" not in spec or "tickets" not in spec:
                    raise ValidationError(
                        "synthetic spec requires seed and tickets", "synthetic"
                    )
            if "now" in request:
                parse_timestamp(request["now"])
            return
        records = request.get("records")
        if not isinstance(records, list) or not records:
            raise ValidationError("records must be a non-empty list", "records")
        for i, rec in enumerate(records):
            if not isinstance(rec, dict):
                raise ValidationError(f"records[{i}] must be an object", "records")
            if not rec.get("id"):
                raise ValidationError(f"records[{i}] missing id", "id")
            if not str(rec.get("text", "")).strip():
                raise ValidationError(f"records[{i}] missing text", "text")
            dept = rec.get("department")
            if dept not in self.config.departments:
                raise ValidationError(
                    f"records[{i}] unknown department {dept!r}", "department"
                )
            if "last_updated" in rec:
                parse_timestamp(rec["last_updated"])

    # -- execution

    def run_job(self, job_id: str) -> JobManifest:
        manifest = self.load_manifest(job_id)
        self._transition(manifest, "running")
        self._log(job_id, "running")
        try:
            if manifest.kind == "rt_weekly":
                self.run_weekly_cycle(manifest)
            else:
                self._run_docs_job(manifest)
            manifest.progress = 1.0
            self._transition(manifest, "succeeded")
            self._log(job_id, "succeeded")
        except Exception as exc:
            manifest.error = str(exc)
            if manifest.state == "running":
                self._transition(manifest, "failed")
            self._log(job_id, f"failed: {exc}")
            logger.warning("job %s failed: %s", job_id, exc)
        return self.load_manifest(job_id)

    def wait(self, job_id: str, timeout: float = 30.0) -> JobManifest:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            manifest = self.load_manifest(job_id)
            if manifest.state in ("succeeded", "failed"):
                return manifest
            time.sleep(0.02)
        raise TimeoutError(f"job {job_id} did not finish within {timeout}s")

    def _stage(self, manifest: JobManifest, name: str, index: int, total: int):
        manifest.current_stage = name
        manifest.progress = index / total
        self.save_manifest(manifest)
        self._log(manifest.job_id, f"stage {name}")
        return time.perf_counter()

    def _finish_stage(
        self, manifest: JobManifest, name: str, t0: float,
        checkpoint: bool = True, **metrics,
    ) -> None:
        manifest.stage_metrics[name] = {
            "duration_s": round(time.perf_counter() - t0, 6),
            **metrics,
        }
        self.save_manifest(manifest)
        if checkpoint:
            self._checkpoint(name)

    def _checkpoint(self, stage: str) -> None:
        if self.checkpoint_hook is not None:
            self.checkpoint_hook(stage)

    # -- document ingestion (web / pdf / repo_docs)

    def _run_docs_job(self, manifest: JobManifest) -> None:
        source_type = _DOC_SOURCE_TYPE[manifest.kind]
        stages_total = 2

        t0 = self._stage(manifest, "prepare", 0, stages_total)
        delta: list[ChunkRecord] = []
        now = self.clock()
        for rec in manifest.request["records"]:
            clean = normalize_text(str(rec["text"]), self.config.normalization)
            last = (
                parse_timestamp(rec["last_updated"])
                if "last_updated" in rec
                else now
            )
            delta.extend(
                chunk_conversation(
                    [clean],
                    self.config.chunking,
                    ticket_id=str(rec["id"]),
                    conversation_id=str(rec["id"]),
                    department=rec["department"],
                    last_updated=last,
                    source_type=source_type,
                    ingest_job_id=manifest.job_id,
                    title=str(rec.get("title", "")),
                )
            )
        self._finish_stage(manifest, "prepare", t0, documents=len(manifest.request["records"]), chunks=len(delta))

        t0 = self._stage(manifest, "mutate", 1, stages_total)
        summary = self.run_mutation(manifest, delta)
        self._finish_stage(manifest, "mutate", t0, **summary)

    # -- the serialized critical section

    def run_mutation(self, manifest: JobManifest, delta) -> dict:
        """Index append plus engine reload under the single global mutation lock."""
        workload = lambda: self._mutate_locked(manifest, delta)
        if self.config.offload.enabled:
            return self.offload_execute(
                manifest, workload, self.config.offload.release_policy
            )
        return workload()

    def _mutate_locked(self, manifest: JobManifest, delta) -> dict:
        with self.mutation_lock:
            self.mutation_trace.append((manifest.job_id, "enter", time.monotonic()))
            try:
                summary = indexstore.append_delta(
                    self.artifact_root,
                    delta,
                    self.embedder,
                    retention=self.config.ingestion.backup_retention,
                    now=self.clock(),
                )
                snapshot = self.engine_manager.reload(self.artifact_root)
                summary["engine_generation"] = snapshot.generation
                return summary
            finally:
                self.mutation_trace.append((manifest.job_id, "exit", time.monotonic()))

    # -- weekly incremental cycle

    def run_weekly_cycle(self, manifest: JobManifest, *, now: datetime | None = None) -> dict:
        """Window -> fetch -> prepare -> consolidate -> mutate -> commit.

        The watermark advances only after every prior stage succeeded;
        overlap-induced duplicates are dropped by append-time dedup, so
        rerunning a crashed cycle converges to the single-clean-run corpus.
        """
        request = manifest.request
        if now is None:
            now = parse_timestamp(request["now"]) if "now" in request else self.clock()
        source = self._resolve_source(request)
        overlap = timedelta(hours=self.config.ingestion.overlap_hours)
        total = 6

        t0 = self._stage(manifest, "window", 0, total)
        watermark = self.watermark.read()
        start = (watermark - overlap) if watermark is not None else datetime(1970, 1, 1, tzinfo=timezone.utc)
        self._finish_stage(
            manifest, "window", t0,
            window_start=format_timestamp(start), window_end=format_timestamp(now),
        )

        t0 = self._stage(manifest, "fetch", 1, total)
        threads = source.fetch(start, now)
        self._finish_stage(
            manifest, "fetch", t0,
            conversations=len(threads),
            messages=sum(len(t) for t in threads),
        )

        t0 = self._stage(manifest, "prepare", 2, total)
        by_department: dict[str, list] = {}
        for thread in threads:
            if thread:
                by_department.setdefault(thread[0].department, []).append(thread)
        delta: list[ChunkRecord] = []
        for department in sorted(by_department):
            for thread in by_department[department]:
                cleaned = [
                    normalize_text(m.raw_text, self.config.normalization) for m in thread
                ]
                delta.extend(
                    chunk_conversation(
                        cleaned,
                        self.config.chunking,
                        ticket_id=thread[0].ticket_id,
                        conversation_id=thread[0].conversation_id,
                        department=department,
                        last_updated=max(m.last_updated for m in thread),
                        source_type="ticket",
                        ingest_job_id=manifest.job_id,
                    )
                )
        self._finish_stage(manifest, "prepare", t0, departments=len(by_department), chunks=len(delta))

        t0 = self._stage(manifest, "consolidate", 3, total)
        seen: set = set()
        consolidated = []
        for record in delta:
            if record.identity not in seen:
                seen.add(record.identity)
                consolidated.append(record)
        self._finish_stage(manifest, "consolidate", t0, chunks=len(consolidated))

        t0 = self._stage(manifest, "mutate", 4, total)
        summary = self.run_mutation(manifest, consolidated)
        self._finish_stage(manifest, "mutate", t0, **summary)

        # Commit: the watermark only advances once everything above held.
        # No crash checkpoint after this point; watermark persist and job
        # success are one transactional step.
        t0 = self._stage(manifest, "commit", 5, total)
        self.watermark.advance(now)
        self._finish_stage(
            manifest, "commit", t0, checkpoint=False, watermark=format_timestamp(now)
        )
        return summary

    def _resolve_source(self, request: dict):
        if "synthetic" in request:
            spec = request["synthetic"]
            return SyntheticTicketSource(
                seed=int(spec["seed"]),
                n_tickets=int(spec["tickets"]),
                languages=tuple(spec.get("languages", ("es", "en", "gl"))),
                departments=self.config.departments,
            )
        if "source_path" in request:
            return JsonlTicketSource(request["source_path"])
        if self.ticket_source is not None:
            return self.ticket_source
        raise ValidationError("no ticket source configured", "source_path")

    # -- offload

    def offload_execute(self, manifest: JobManifest, workload, policy: str):
        """Run a workload through the remote executor with observable,
        persisted stage transitions and the configured release policy."""
        executor = self.remote_executor
        manifest.offload = {"policy": policy, "stages": [], "cancel_calls": 0}

        def enter(stage: str) -> None:
            manifest.offload["stages"].append(
                {"stage": stage, "at": format_timestamp(self.clock())}
            )
            self.save_manifest(manifest)

        handle = None
        try:
            enter("resource_requested")
            handle = executor.request()
            enter("waiting_resources")
            executor.wait_ready(handle)
            enter("running_remote")
            result = executor.run(handle, workload)
            enter("sync_back")
            executor.sync(handle)
        except Exception as exc:
            if handle is not None:
                try:
                    executor.cancel(handle)
                    manifest.offload["cancel_calls"] += 1
                except Exception:
                    manifest.offload["cancel_error"] = "cancellation failed"
            self.save_manifest(manifest)
            raise JobFailure("offload", str(exc)) from exc
        if policy == "explicit_cancel":
            executor.cancel(handle)
            manifest.offload["cancel_calls"] += 1
        self.save_manifest(manifest)
        return result
