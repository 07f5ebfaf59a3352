"""Bug-report corpus: ingestion, persistence, sync planning, statistics.

Layout on disk::

    <root>/
      index.json          id -> {dbms, stage, path}
      corpus.lock         writer lock (held only while mutating)
      quarantine/         payloads that failed to parse, plus the error
      <dbms>/<slug>.json  one JSON record per report

Records are JSON with sorted keys and a trailing newline, so identical
pipeline runs produce byte-identical directories.
"""

from __future__ import annotations

import hashlib
import json
import re
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Iterator

from filelock import FileLock, Timeout

from .errors import (
    CorpusError,
    CorpusLockTimeout,
    MalformedPayload,
    StageTransitionError,
    UnknownAdapter,
)
from .models import (
    STAGE_RANK,
    BugReport,
    CorpusRecord,
    CorpusStats,
    PipelineStage,
    ReportSource,
    ReportStatus,
    SyncPlan,
    UpstreamSnapshot,
    format_ts,
    parse_ts,
)

INDEX_SCHEMA = "corpus-index-1"
SLUG_RE = re.compile(r"[^A-Za-z0-9._-]+")

# Reports younger than 30 days are probed every 6 hours; up to a year old,
# weekly; anything older, quarterly.
DEFAULT_REFRESH_STEPS: list[tuple[timedelta, timedelta]] = [
    (timedelta(days=30), timedelta(hours=6)),
    (timedelta(days=365), timedelta(days=7)),
]
DEFAULT_REFRESH_TAIL = timedelta(days=90)

# Statuses whose reports are extracted by default; the rest stay collected
# unless the caller opts in.
EXTRACTABLE_STATUSES = frozenset({ReportStatus.CONFIRMED, ReportStatus.FIXED})

SourceAdapter = Callable[[bytes], BugReport]
_ADAPTERS: dict[str, SourceAdapter] = {}


def register_adapter(name: str) -> Callable[[SourceAdapter], SourceAdapter]:
    """Register a payload adapter under ``name``."""

    def deco(fn: SourceAdapter) -> SourceAdapter:
        _ADAPTERS[name] = fn
        return fn

    return deco


def adapter_names() -> list[str]:
    return sorted(_ADAPTERS)


def ingest_report(raw: bytes, adapter_id: str) -> BugReport:
    """Parse a source payload into a normalized report.

    Raises UnknownAdapter for an unregistered adapter id and
    MalformedPayload when the payload does not parse.
    """
    try:
        adapter = _ADAPTERS[adapter_id]
    except KeyError:
        raise UnknownAdapter(f"no source adapter registered as {adapter_id!r}") from None
    return adapter(raw)


def _coerce_status(value: Any) -> ReportStatus:
    try:
        return ReportStatus(str(value).lower())
    except ValueError:
        return ReportStatus.OTHER


def _payload_body(value: Any) -> list[str]:
    if isinstance(value, list):
        if not all(isinstance(line, str) for line in value):
            raise MalformedPayload("body list must contain only strings")
        return list(value)
    if isinstance(value, str):
        return value.splitlines()
    raise MalformedPayload("body must be a string or a list of lines")


@register_adapter("fixture")
def fixture_adapter(raw: bytes) -> BugReport:
    """Adapter for the JSON payloads used by fixtures and local drops.

    Expected keys: id, dbms, title, status, body (string or line list),
    created_at, last_modified; optional: versions, labels, cve_ids,
    last_collected_at, source.
    """
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"payload is not UTF-8 JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedPayload("payload must be a JSON object")
    for key in ("id", "dbms", "title", "status", "body", "created_at", "last_modified"):
        if key not in data:
            raise MalformedPayload(f"payload missing required key {key!r}")
    try:
        created = parse_ts(data["created_at"])
        modified = parse_ts(data["last_modified"])
        collected = parse_ts(data["last_collected_at"]) if data.get("last_collected_at") else None
    except (ValueError, TypeError) as exc:
        raise MalformedPayload(f"bad timestamp: {exc}") from exc
    try:
        source = ReportSource(data.get("source", "fixture"))
    except ValueError:
        source = ReportSource.FIXTURE
    try:
        return BugReport(
            id=str(data["id"]),
            source=source,
            title=str(data["title"]),
            status=_coerce_status(data["status"]),
            dbms=str(data["dbms"]).lower(),
            versions=[str(v) for v in data.get("versions", [])],
            created_at=created,
            last_modified=modified,
            body=_payload_body(data["body"]),
            labels=[str(v) for v in data.get("labels", [])],
            cve_ids=[str(v) for v in data.get("cve_ids", [])],
            last_collected_at=collected,
        )
    except ValueError as exc:
        raise MalformedPayload(str(exc)) from exc


@register_adapter("http-generic")
def http_generic_adapter(raw: bytes) -> BugReport:
    """Adapter for captured HTTP fetches of tracker pages.

    The payload is a JSON envelope: {"url", "fetched_at", "report": {...}}
    where "report" follows the fixture schema.  Scraping live trackers is
    out of scope here; this adapter handles saved fetch envelopes.
    """
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"payload is not UTF-8 JSON: {exc}") from exc
    if not isinstance(data, dict) or "report" not in data:
        raise MalformedPayload("http envelope missing 'report' object")
    inner = dict(data["report"])
    inner.setdefault("source", "vendor-tracker")
    if "last_collected_at" not in inner and data.get("fetched_at"):
        inner["last_collected_at"] = data["fetched_at"]
    return fixture_adapter(json.dumps(inner).encode("utf-8"))


def detect_change(snapshot: UpstreamSnapshot, local: BugReport) -> bool:
    """True when the upstream status or modification time moved on."""
    if snapshot.report_id != local.id:
        raise ValueError(f"snapshot {snapshot.report_id!r} is not for report {local.id!r}")
    return snapshot.status != local.status or snapshot.last_modified != local.last_modified


def refresh_interval(
    age: timedelta,
    steps: list[tuple[timedelta, timedelta]] | None = None,
    tail: timedelta | None = None,
) -> timedelta:
    """Probe cadence for a report of the given age (a step function)."""
    steps = DEFAULT_REFRESH_STEPS if steps is None else steps
    tail = DEFAULT_REFRESH_TAIL if tail is None else tail
    for max_age, interval in steps:
        if age < max_age:
            return interval
    return tail


def _dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def record_filename(report_id: str) -> str:
    """Stable, filesystem-safe name for a record file."""
    return SLUG_RE.sub("_", report_id) + ".json"


class Corpus:
    """A directory of corpus records with an index and a writer lock."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._lock = FileLock(str(self.root / "corpus.lock"))

    @classmethod
    def open(cls, root: Path | str, create: bool = True) -> "Corpus":
        corpus = cls(root)
        if create:
            corpus.root.mkdir(parents=True, exist_ok=True)
            (corpus.root / "quarantine").mkdir(exist_ok=True)
            if not corpus._index_path.exists():
                corpus._write_index({})
        elif not corpus._index_path.exists():
            raise CorpusError(f"no corpus at {corpus.root}")
        return corpus

    # -- index plumbing -------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _read_index(self) -> dict[str, dict[str, str]]:
        try:
            data = json.loads(self._index_path.read_text("utf-8"))
        except FileNotFoundError:
            return {}
        except json.JSONDecodeError as exc:
            raise CorpusError(f"corrupt corpus index: {exc}") from exc
        if data.get("schema") != INDEX_SCHEMA:
            raise CorpusError(f"unsupported index schema {data.get('schema')!r}")
        return data.get("records", {})

    def _write_index(self, records: dict[str, dict[str, str]]) -> None:
        payload = {"schema": INDEX_SCHEMA, "records": dict(sorted(records.items()))}
        self._index_path.write_text(_dump_json(payload), "utf-8")

    def _record_path(self, report_id: str, dbms: str) -> Path:
        return self.root / dbms / record_filename(report_id)

    # -- locking ---------------------------------------------------------

    def locked(self, timeout: float = 10.0):
        """Writer lock; hold it across any mutation."""
        try:
            return self._lock.acquire(timeout=timeout)
        except Timeout as exc:
            raise CorpusLockTimeout(f"corpus {self.root} is locked by another writer") from exc

    # -- record access ---------------------------------------------------

    def ids(self) -> list[str]:
        return sorted(self._read_index())

    def __contains__(self, report_id: str) -> bool:
        return report_id in self._read_index()

    def get(self, report_id: str) -> CorpusRecord:
        index = self._read_index()
        try:
            entry = index[report_id]
        except KeyError:
            raise CorpusError(f"no record {report_id!r} in corpus") from None
        path = self.root / entry["path"]
        try:
            data = json.loads(path.read_text("utf-8"))
        except (FileNotFoundError, json.JSONDecodeError) as exc:
            raise CorpusError(f"record file for {report_id!r} unreadable: {exc}") from exc
        return CorpusRecord.from_dict(data)

    def records(self) -> Iterator[CorpusRecord]:
        for report_id in self.ids():
            yield self.get(report_id)

    def save(self, record: CorpusRecord, force: bool = False) -> None:
        """Persist a record, enforcing forward-only stage movement.

        ``force`` permits stage regression (explicit re-runs); a plain save
        of an identical record is always a no-op byte-wise.
        """
        record.validate_stage()
        with self.locked():
            index = self._read_index()
            existing = index.get(record.report.id)
            if existing is not None and not force:
                old_rank = STAGE_RANK[PipelineStage(existing["stage"])]
                new_rank = STAGE_RANK[record.pipeline_stage]
                if new_rank < old_rank:
                    raise StageTransitionError(
                        f"{record.report.id}: stage {existing['stage']} -> "
                        f"{record.pipeline_stage.value} moves backwards"
                    )
            path = self._record_path(record.report.id, record.report.dbms)
            path.parent.mkdir(parents=True, exist_ok=True)
            text = _dump_json(record.to_dict())
            if not path.exists() or path.read_text("utf-8") != text:
                path.write_text(text, "utf-8")
            rel = path.relative_to(self.root).as_posix()
            entry = {
                "dbms": record.report.dbms,
                "path": rel,
                "stage": record.pipeline_stage.value,
            }
            if existing != entry:
                index[record.report.id] = entry
                self._write_index(index)

    # -- ingestion --------------------------------------------------------

    def quarantine(self, raw: bytes, adapter_id: str, error: str) -> Path:
        """Park an unparseable payload next to the error that rejected it."""
        digest = hashlib.sha256(raw).hexdigest()[:16]
        path = self.root / "quarantine" / f"{digest}.json"
        try:
            payload_text: str | None = raw.decode("utf-8")
        except UnicodeDecodeError:
            payload_text = None
        entry = {
            "adapter": adapter_id,
            "error": error,
            "payload_text": payload_text,
            "payload_sha256": hashlib.sha256(raw).hexdigest(),
        }
        path.parent.mkdir(exist_ok=True)
        path.write_text(_dump_json(entry), "utf-8")
        return path

    def ingest(self, raw: bytes, adapter_id: str) -> tuple[CorpusRecord, bool]:
        """Parse and store one payload; returns (record, changed).

        Re-ingesting an identical payload leaves the stored record alone.
        A payload whose report content moved on resets the record to the
        collected stage (re-collection drops stale derived data).  Parse
        failures are quarantined and re-raised.
        """
        try:
            report = ingest_report(raw, adapter_id)
        except MalformedPayload as exc:
            self.quarantine(raw, adapter_id, str(exc))
            raise
        if report.id in self:
            existing = self.get(report.id)
            if existing.report.to_dict() == report.to_dict():
                return existing, False
        record = CorpusRecord(report=report, pipeline_stage=PipelineStage.COLLECTED)
        self.save(record, force=True)
        return record, True

    # -- sync planning & stats --------------------------------------------

    def plan_sync(
        self,
        now: datetime | None = None,
        steps: list[tuple[timedelta, timedelta]] | None = None,
        tail: timedelta | None = None,
    ) -> SyncPlan:
        """Pick the records whose refresh cadence says they are due."""
        now = now or datetime.now(timezone.utc)
        probe: list[str] = []
        intervals: dict[str, timedelta] = {}
        for record in self.records():
            report = record.report
            interval = refresh_interval(now - report.created_at, steps, tail)
            intervals[report.id] = interval
            assert report.last_collected_at is not None
            if now - report.last_collected_at >= interval:
                probe.append(report.id)
        return SyncPlan(probe_ids=sorted(probe), refresh_intervals=intervals)

    def stats(self) -> CorpusStats:
        """Counts of reports, raw PoCs and test cases, per DBMS and total."""
        per_dbms: dict[str, dict[str, int]] = {}
        for record in self.records():
            row = per_dbms.setdefault(
                record.report.dbms, {"reports": 0, "raw_pocs": 0, "test_cases": 0}
            )
            row["reports"] += 1
            if record.raw_poc is not None:
                row["raw_pocs"] += 1
            if record.test_case is not None:
                row["test_cases"] += 1
        return CorpusStats(
            reports=sum(r["reports"] for r in per_dbms.values()),
            raw_pocs=sum(r["raw_pocs"] for r in per_dbms.values()),
            test_cases=sum(r["test_cases"] for r in per_dbms.values()),
            per_dbms=per_dbms,
        )


def extraction_candidates(corpus: Corpus, include_unconfirmed: bool = False) -> list[str]:
    """Ids of fragmented records eligible for extraction.

    By default only confirmed and fixed reports go to the extractor; the
    rest are stored but skipped until the caller opts them in.
    """
    out = []
    for record in corpus.records():
        if record.pipeline_stage is not PipelineStage.FRAGMENTED:
            continue
        if not include_unconfirmed and record.report.status not in EXTRACTABLE_STATUSES:
            continue
        out.append(record.report.id)
    return sorted(out)
