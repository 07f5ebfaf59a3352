"""Domain records: bug reports, fragments, PoCs, test cases, outcomes.

Everything that the corpus persists lives here, together with explicit
``to_dict``/``from_dict`` converters.  Serialization is deliberately
hand-rolled: the on-disk format is a contract (stable key order, ISO-8601
UTC timestamps) and the converters are where that contract is enforced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any

MODEL_INFERRED = "model-inferred"


class ReportSource(str, Enum):
    VENDOR_TRACKER = "vendor-tracker"
    MAILING_LIST = "mailing-list"
    FIXTURE = "fixture"


class ReportStatus(str, Enum):
    REPORTED = "reported"
    CONFIRMED = "confirmed"
    FIXED = "fixed"
    CLOSED = "closed"
    OTHER = "other"


class PipelineStage(str, Enum):
    COLLECTED = "collected"
    FRAGMENTED = "fragmented"
    EXTRACTED = "extracted"
    NON_EXTRACTABLE = "non_extractable"
    ADAPTED = "adapted"
    ADAPTATION_FAILED = "adaptation_failed"


# Rank in the stage lattice; equal rank means sibling outcomes.
STAGE_RANK = {
    PipelineStage.COLLECTED: 0,
    PipelineStage.FRAGMENTED: 1,
    PipelineStage.EXTRACTED: 2,
    PipelineStage.NON_EXTRACTABLE: 2,
    PipelineStage.ADAPTED: 3,
    PipelineStage.ADAPTATION_FAILED: 3,
}


class CaptureStage(str, Enum):
    FORMATTED_BLOCK = "formatted_block"
    BACKTRACKED_STATEMENT = "backtracked_statement"
    SCORED_LINE = "scored_line"


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class OutcomeKind(str, Enum):
    CLEAN = "clean"
    ERROR = "error"
    CRASH = "crash"
    TIMEOUT = "timeout"
    CONNECTION_LOST = "connection_lost"


class ExecutionClassValue(str, Enum):
    BUG_TRIGGERING = "bug_triggering"
    PENDING = "pending"
    PROBLEMATIC = "problematic"


class DiagnosisCategory(str, Enum):
    SYNTAX = "syntax"
    CONFIGURATION = "configuration"
    SEMANTIC = "semantic"
    UNKNOWN = "unknown"


class QueryPattern(str, Enum):
    FILTERING = "filtering"
    ORDERING = "ordering"
    AGGREGATION = "aggregation"
    JOINING = "joining"
    GROUPING = "grouping"
    SUBQUERY = "subquery"
    DML = "dml"
    DDL = "ddl"
    TXN = "txn"
    CONFIG = "config"


class RiskLevel(str, Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


class CleanupAction(str, Enum):
    REINSTALL_CONTAINER = "reinstall_container"
    RESTART_AND_VERIFY = "restart_and_verify"
    CLEAN_DATABASE = "clean_database"


class ExpectationKind(str, Enum):
    EXPECT_BUG = "expect_bug"
    EXPECT_CLEAN = "expect_clean"


class Verdict(str, Enum):
    STILL_FIXED = "still_fixed"
    REGRESSION = "regression"
    NEW_SYMPTOM = "new_symptom"
    CROSS_HIT = "cross_hit"
    INCONCLUSIVE = "inconclusive"


def format_ts(value: datetime) -> str:
    """Render a timestamp as ISO-8601 UTC with a trailing Z."""
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ts(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


@dataclass
class BugReport:
    """One normalized bug report, whatever source it came from."""

    id: str
    source: ReportSource
    title: str
    status: ReportStatus
    dbms: str
    versions: list[str]
    created_at: datetime
    last_modified: datetime
    body: list[str]
    labels: list[str] = field(default_factory=list)
    cve_ids: list[str] = field(default_factory=list)
    last_collected_at: datetime | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("report id must be non-empty")
        if not self.dbms:
            raise ValueError("report dbms must be non-empty")
        if self.last_collected_at is None:
            self.last_collected_at = self.last_modified
        if self.last_collected_at < self.created_at:
            raise ValueError("last_collected_at predates created_at")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source.value,
            "title": self.title,
            "status": self.status.value,
            "dbms": self.dbms,
            "versions": list(self.versions),
            "created_at": format_ts(self.created_at),
            "last_modified": format_ts(self.last_modified),
            "body": list(self.body),
            "labels": list(self.labels),
            "cve_ids": list(self.cve_ids),
            "last_collected_at": format_ts(self.last_collected_at),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BugReport":
        return cls(
            id=data["id"],
            source=ReportSource(data["source"]),
            title=data["title"],
            status=ReportStatus(data["status"]),
            dbms=data["dbms"],
            versions=list(data.get("versions", [])),
            created_at=parse_ts(data["created_at"]),
            last_modified=parse_ts(data["last_modified"]),
            body=list(data["body"]),
            labels=list(data.get("labels", [])),
            cve_ids=list(data.get("cve_ids", [])),
            last_collected_at=parse_ts(data["last_collected_at"]),
        )


@dataclass
class Fragment:
    """A contiguous run of report lines believed to carry PoC text."""

    start_index: int
    lines: list[str]
    capture_stage: CaptureStage
    score: float | None = None

    @property
    def end_index(self) -> int:
        """Index one past the last captured line."""
        return self.start_index + len(self.lines)

    @property
    def text(self) -> str:
        return "\n".join(self.lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "start_index": self.start_index,
            "lines": list(self.lines),
            "capture_stage": self.capture_stage.value,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Fragment":
        return cls(
            start_index=data["start_index"],
            lines=list(data["lines"]),
            capture_stage=CaptureStage(data["capture_stage"]),
            score=data.get("score"),
        )


@dataclass
class RawPoC:
    """Extracted, self-checked statements plus their provenance."""

    statements: list[str]
    report_id: str
    # statement index -> fragment index, or the model-inferred marker
    provenance: dict[int, int | str]
    expected_behavior: str | None = None
    expected_source: str = "none"  # rules | model | none

    def __post_init__(self) -> None:
        if not self.statements:
            raise ValueError("a raw PoC needs at least one statement")
        for key in self.provenance:
            if not 0 <= key < len(self.statements):
                raise ValueError(f"provenance key {key} out of range")

    def to_dict(self) -> dict[str, Any]:
        return {
            "statements": list(self.statements),
            "report_id": self.report_id,
            "provenance": {str(k): v for k, v in sorted(self.provenance.items())},
            "expected_behavior": self.expected_behavior,
            "expected_source": self.expected_source,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RawPoC":
        return cls(
            statements=list(data["statements"]),
            report_id=data["report_id"],
            provenance={int(k): v for k, v in data.get("provenance", {}).items()},
            expected_behavior=data.get("expected_behavior"),
            expected_source=data.get("expected_source", "none"),
        )


@dataclass
class Exemplar:
    """A reference example for retrieval-augmented extraction."""

    id: str
    report_summary: str
    fragments_digest: str
    raw_poc: RawPoC | None
    reasoning_trace: list[str]
    polarity: Polarity
    dense_vector: list[float]
    keywords: dict[str, int]
    last_retrieved: int = 0

    def __post_init__(self) -> None:
        if self.polarity is Polarity.POSITIVE and self.raw_poc is None:
            raise ValueError("positive exemplars carry a raw PoC")
        if self.polarity is Polarity.NEGATIVE and not self.reasoning_trace:
            raise ValueError("negative exemplars explain their reason")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "report_summary": self.report_summary,
            "fragments_digest": self.fragments_digest,
            "raw_poc": self.raw_poc.to_dict() if self.raw_poc else None,
            "reasoning_trace": list(self.reasoning_trace),
            "polarity": self.polarity.value,
            "dense_vector": list(self.dense_vector),
            "keywords": dict(sorted(self.keywords.items())),
            "last_retrieved": self.last_retrieved,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Exemplar":
        poc = data.get("raw_poc")
        return cls(
            id=data["id"],
            report_summary=data["report_summary"],
            fragments_digest=data["fragments_digest"],
            raw_poc=RawPoC.from_dict(poc) if poc else None,
            reasoning_trace=list(data["reasoning_trace"]),
            polarity=Polarity(data["polarity"]),
            dense_vector=list(data["dense_vector"]),
            keywords={k: int(v) for k, v in data.get("keywords", {}).items()},
            last_retrieved=int(data.get("last_retrieved", 0)),
        )


@dataclass
class PromptBundle:
    """The four-part prompt handed to the text-generation client."""

    system: str
    extraction: str
    references: str
    task: str

    def __post_init__(self) -> None:
        for name in ("system", "extraction", "references", "task"):
            if not getattr(self, name).strip():
                raise ValueError(f"prompt part {name!r} is empty")

    def messages(self) -> list[dict[str, str]]:
        """Chat-message rendering; the task already embeds the references."""
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.extraction + "\n\n" + self.task},
        ]

    def token_count(self) -> int:
        """Whitespace token count of the rendered messages (approximate)."""
        return sum(len(m["content"].split()) for m in self.messages())


@dataclass
class StatementResult:
    """Per-statement execution detail inside an outcome."""

    index: int
    statement: str
    status: str  # ok | error | crash | timeout
    code: str | None = None
    message: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "statement": self.statement,
            "status": self.status,
            "code": self.code,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StatementResult":
        return cls(
            index=data["index"],
            statement=data["statement"],
            status=data["status"],
            code=data.get("code"),
            message=data.get("message"),
        )


@dataclass
class ExecutionOutcome:
    """What happened when a statement list ran on a backend."""

    kind: OutcomeKind
    statement_results: list[StatementResult]
    duration: float
    backend_id: str
    backend_version: str
    code: str | None = None
    message: str | None = None
    signal: int | None = None
    frames: list[str] = field(default_factory=list)
    timeout_limit: float | None = None

    def __post_init__(self) -> None:
        if self.kind is OutcomeKind.TIMEOUT and self.timeout_limit is None:
            raise ValueError("timeout outcomes carry the configured limit")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "statement_results": [r.to_dict() for r in self.statement_results],
            "duration": self.duration,
            "backend_id": self.backend_id,
            "backend_version": self.backend_version,
            "code": self.code,
            "message": self.message,
            "signal": self.signal,
            "frames": list(self.frames),
            "timeout_limit": self.timeout_limit,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExecutionOutcome":
        return cls(
            kind=OutcomeKind(data["kind"]),
            statement_results=[
                StatementResult.from_dict(r) for r in data.get("statement_results", [])
            ],
            duration=data.get("duration", 0.0),
            backend_id=data["backend_id"],
            backend_version=data.get("backend_version", ""),
            code=data.get("code"),
            message=data.get("message"),
            signal=data.get("signal"),
            frames=list(data.get("frames", [])),
            timeout_limit=data.get("timeout_limit"),
        )


@dataclass
class ExecutionClass:
    """Classification of an outcome against the expected behaviour."""

    value: ExecutionClassValue
    evidence: ExecutionOutcome


@dataclass
class Diagnosis:
    """Why an execution failed, per the knowledge-base rules."""

    category: DiagnosisCategory
    raw_feedback: str
    matched_rule: str | None = None
    guidance: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category.value,
            "raw_feedback": self.raw_feedback,
            "matched_rule": self.matched_rule,
            "guidance": self.guidance,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Diagnosis":
        return cls(
            category=DiagnosisCategory(data["category"]),
            raw_feedback=data["raw_feedback"],
            matched_rule=data.get("matched_rule"),
            guidance=data.get("guidance", ""),
        )


@dataclass
class AnchorProfile:
    """Semantic anchors of a PoC: what an adaptation must preserve.

    ``source_tokens`` keeps the normalized token stream of the original
    statements so the rewrite-distance constraint can be evaluated against
    any candidate later on.
    """

    data_dependencies: set[str]
    key_operations: dict[str, int]
    query_patterns: set[QueryPattern]
    source_tokens: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "data_dependencies": sorted(self.data_dependencies),
            "key_operations": dict(sorted(self.key_operations.items())),
            "query_patterns": sorted(p.value for p in self.query_patterns),
            "source_tokens": list(self.source_tokens),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AnchorProfile":
        return cls(
            data_dependencies=set(data["data_dependencies"]),
            key_operations={k: int(v) for k, v in data["key_operations"].items()},
            query_patterns={QueryPattern(p) for p in data["query_patterns"]},
            source_tokens=list(data["source_tokens"]),
        )


@dataclass
class ConstraintReport:
    """Result of the three semantic-constraint checks."""

    anchor_match: dict[str, Any]  # {"required": [...], "present": [...], "pass": bool}
    key_coverage: dict[str, Any]  # {"required": {...}, "present": {...}, "pass": bool}
    rewrite_bound: dict[str, Any]  # {"distance": float, "beta": float, "pass": bool}
    overall: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "anchor_match": self.anchor_match,
            "key_coverage": self.key_coverage,
            "rewrite_bound": self.rewrite_bound,
            "overall": self.overall,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ConstraintReport":
        return cls(
            anchor_match=data["anchor_match"],
            key_coverage=data["key_coverage"],
            rewrite_bound=data["rewrite_bound"],
            overall=data["overall"],
        )


@dataclass
class RiskClass:
    """Aggregate risk of a statement list, with the statements to blame."""

    value: RiskLevel
    triggering_statements: list[int]

    def __post_init__(self) -> None:
        if self.value is not RiskLevel.LOW and not self.triggering_statements:
            raise ValueError("elevated risk must name its triggering statements")

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value.value,
            "triggering_statements": list(self.triggering_statements),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RiskClass":
        return cls(
            value=RiskLevel(data["value"]),
            triggering_statements=list(data["triggering_statements"]),
        )


@dataclass
class Expectation:
    """What replaying a test case should show."""

    kind: ExpectationKind
    symptom: str | None = None

    def __post_init__(self) -> None:
        if self.kind is ExpectationKind.EXPECT_BUG and not self.symptom:
            raise ValueError("expect_bug carries a symptom string")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "symptom": self.symptom}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Expectation":
        return cls(kind=ExpectationKind(data["kind"]), symptom=data.get("symptom"))


@dataclass
class RepairRecord:
    """One diagnose-and-repair iteration in the adaptation log."""

    diagnosis: Diagnosis
    statements: list[str]
    adopted: bool
    violations: list[str] = field(default_factory=list)
    renames: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "diagnosis": self.diagnosis.to_dict(),
            "statements": list(self.statements),
            "adopted": self.adopted,
            "violations": list(self.violations),
            "renames": dict(sorted(self.renames.items())),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RepairRecord":
        return cls(
            diagnosis=Diagnosis.from_dict(data["diagnosis"]),
            statements=list(data["statements"]),
            adopted=data["adopted"],
            violations=list(data.get("violations", [])),
            renames=dict(data.get("renames", {})),
        )


@dataclass
class TestCase:
    """An executable, semantics-checked test case forged from a raw PoC."""

    statements: list[str]
    origin_report_id: str
    expectation: Expectation
    constraint_report: ConstraintReport
    risk_tier: RiskClass
    adaptation_log: list[RepairRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.statements:
            raise ValueError("a test case needs at least one statement")
        if not self.constraint_report.overall:
            raise ValueError("test cases only exist for constraint-passing PoCs")

    def to_dict(self) -> dict[str, Any]:
        return {
            "statements": list(self.statements),
            "origin_report_id": self.origin_report_id,
            "expectation": self.expectation.to_dict(),
            "constraint_report": self.constraint_report.to_dict(),
            "risk_tier": self.risk_tier.to_dict(),
            "adaptation_log": [r.to_dict() for r in self.adaptation_log],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TestCase":
        return cls(
            statements=list(data["statements"]),
            origin_report_id=data["origin_report_id"],
            expectation=Expectation.from_dict(data["expectation"]),
            constraint_report=ConstraintReport.from_dict(data["constraint_report"]),
            risk_tier=RiskClass.from_dict(data["risk_tier"]),
            adaptation_log=[RepairRecord.from_dict(r) for r in data.get("adaptation_log", [])],
        )


@dataclass
class CorpusRecord:
    """A bug report plus everything the pipeline has derived from it."""

    report: BugReport
    pipeline_stage: PipelineStage = PipelineStage.COLLECTED
    fragments: list[Fragment] | None = None
    raw_poc: RawPoC | None = None
    test_case: TestCase | None = None

    def validate_stage(self) -> None:
        """Check that populated fields match the pipeline stage exactly."""
        stage = self.pipeline_stage
        want_fragments = stage is not PipelineStage.COLLECTED
        want_poc = stage in (
            PipelineStage.EXTRACTED,
            PipelineStage.ADAPTED,
            PipelineStage.ADAPTATION_FAILED,
        )
        want_case = stage is PipelineStage.ADAPTED
        if (self.fragments is not None) != want_fragments:
            raise ValueError(f"stage {stage.value}: fragments populated={self.fragments is not None}")
        if (self.raw_poc is not None) != want_poc:
            raise ValueError(f"stage {stage.value}: raw_poc populated={self.raw_poc is not None}")
        if (self.test_case is not None) != want_case:
            raise ValueError(f"stage {stage.value}: test_case populated={self.test_case is not None}")

    def to_dict(self) -> dict[str, Any]:
        self.validate_stage()
        return {
            "schema": "corpus-record-1",
            "report": self.report.to_dict(),
            "pipeline_stage": self.pipeline_stage.value,
            "fragments": [f.to_dict() for f in self.fragments]
            if self.fragments is not None
            else None,
            "raw_poc": self.raw_poc.to_dict() if self.raw_poc else None,
            "test_case": self.test_case.to_dict() if self.test_case else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CorpusRecord":
        fragments = data.get("fragments")
        poc = data.get("raw_poc")
        case = data.get("test_case")
        record = cls(
            report=BugReport.from_dict(data["report"]),
            pipeline_stage=PipelineStage(data["pipeline_stage"]),
            fragments=[Fragment.from_dict(f) for f in fragments]
            if fragments is not None
            else None,
            raw_poc=RawPoC.from_dict(poc) if poc else None,
            test_case=TestCase.from_dict(case) if case else None,
        )
        record.validate_stage()
        return record


@dataclass
class SyncPlan:
    """Which reports to re-probe now, and everyone's refresh cadence."""

    probe_ids: list[str]
    refresh_intervals: dict[str, timedelta]

    def __post_init__(self) -> None:
        missing = [i for i in self.probe_ids if i not in self.refresh_intervals]
        if missing:
            raise ValueError(f"probe ids without a cadence: {missing}")


@dataclass
class UpstreamSnapshot:
    """The cheap fields a change probe fetches from the tracker."""

    report_id: str
    status: ReportStatus
    last_modified: datetime


@dataclass
class CorpusStats:
    """Corpus-level counts, with a per-DBMS breakdown."""

    reports: int
    raw_pocs: int
    test_cases: int
    per_dbms: dict[str, dict[str, int]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "reports": self.reports,
            "raw_pocs": self.raw_pocs,
            "test_cases": self.test_cases,
            "per_dbms": {k: dict(v) for k, v in sorted(self.per_dbms.items())},
        }


@dataclass
class ReplayFinding:
    """One case executed on one backend during a replay campaign."""

    origin_report_id: str
    replay_backend: str
    replay_version: str
    outcome: ExecutionOutcome
    verdict: Verdict
    signature: str
    notes: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "origin_report_id": self.origin_report_id,
            "replay_backend": self.replay_backend,
            "replay_version": self.replay_version,
            "outcome": self.outcome.to_dict(),
            "verdict": self.verdict.value,
            "signature": self.signature,
            "notes": self.notes,
        }


@dataclass
class FindingGroup:
    """Findings that share a signature, collapsed to one representative."""

    signature: str
    representative: ReplayFinding
    count: int
    member_ids: list[str]


@dataclass
class SeedCorpus:
    """Exported fuzzing seeds plus the manifest tying them to reports."""

    target_dbms: str
    files: list[tuple[str, str]]  # (filename, sql text)
    manifest: dict[str, dict[str, Any]]

    def __post_init__(self) -> None:
        names = [name for name, _ in self.files]
        if len(names) != len(set(names)):
            raise ValueError("seed filenames must be unique")
        missing = [n for n in names if n not in self.manifest]
        if missing:
            raise ValueError(f"seed files missing from manifest: {missing}")
