"""Stage drivers: the resumable record loops behind each CLI subcommand.

Each driver walks the corpus in sorted-id order, skips records already
past its stage (unless forced), persists progress per record, and reports
one row per record touched.  A record that fails is logged and does not
stop the loop; the CLI maps that to the partial-failure exit code.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

from .adapter import KnowledgeBase, adapt
from .errors import CorpusError, PocmillError
from .extractor import ExtractionBudget, extract_raw_poc, promote_exemplar
from .fragmenter import ScoringConfig, process_report
from .harness import Backend
from .models import Fragment, PipelineStage
from .repository import Corpus, EXTRACTABLE_STATUSES
from .retrieval import ExemplarLibrary
from .textgen import TextGenClient


@dataclass
class StageRow:
    """One record's fate in a stage run."""

    report_id: str
    action: str  # processed | skipped | failed
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"report_id": self.report_id, "action": self.action, "detail": self.detail}


@dataclass
class StageReport:
    """Everything a stage run did, row by row."""

    stage: str
    rows: list[StageRow] = field(default_factory=list)

    def add(self, report_id: str, action: str, detail: str = "") -> None:
        self.rows.append(StageRow(report_id, action, detail))

    def count(self, action: str) -> int:
        return sum(1 for r in self.rows if r.action == action)

    @property
    def exit_code(self) -> int:
        return 4 if self.count("failed") else 0

    def to_records(self) -> str:
        lines = [json.dumps({"stage": self.stage, **r.to_dict()}, sort_keys=True) for r in self.rows]
        summary = {
            "stage": self.stage,
            "summary": True,
            "processed": self.count("processed"),
            "skipped": self.count("skipped"),
            "failed": self.count("failed"),
        }
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        lines = []
        for row in self.rows:
            detail = f"  {row.detail}" if row.detail else ""
            lines.append(f"{row.report_id:<28} {row.action:<10}{detail}")
        lines.append(
            f"{self.stage}: {self.count('processed')} processed, "
            f"{self.count('skipped')} skipped, {self.count('failed')} failed"
        )
        return "\n".join(lines) + "\n"


def collect_stage(corpus: Corpus, payloads: list[bytes], adapter_id: str) -> StageReport:
    """Ingest raw payloads; malformed ones are quarantined, not fatal."""
    report = StageReport("collect")
    for payload in payloads:
        try:
            record, changed = corpus.ingest(payload, adapter_id)
        except CorpusError as exc:
            report.add("(quarantined)", "failed", str(exc))
            continue
        action = "processed" if changed else "skipped"
        detail = "" if changed else "already collected, unchanged"
        report.add(record.report.id, action, detail)
    return report


def fragment_stage(
    corpus: Corpus,
    scoring: ScoringConfig | None = None,
    force: bool = False,
    jobs: int = 1,
    only: set[str] | None = None,
) -> StageReport:
    """Scan collected reports into fragments.

    Scanning is pure per record, so ``jobs`` may fan it out; results are
    saved in sorted-id order either way, keeping the corpus deterministic.
    """
    scoring = scoring or ScoringConfig()
    report = StageReport("fragment")
    todo: list[Any] = []
    for record in corpus.records():
        if only is not None and record.report.id not in only:
            continue
        if record.pipeline_stage is not PipelineStage.COLLECTED and not force:
            report.add(record.report.id, "skipped", f"already {record.pipeline_stage.value}")
            continue
        todo.append(record)

    def scan(record: Any) -> tuple[Any, list[Fragment] | None, str]:
        try:
            return record, process_report(record.report.body, scoring), ""
        except Exception as exc:  # noqa: BLE001 - per-record fault barrier
            return record, None, str(exc)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scanned = list(pool.map(scan, todo))
    else:
        scanned = [scan(r) for r in todo]
    for record, fragments, error in scanned:
        if fragments is None:
            report.add(record.report.id, "failed", error)
            continue
        record.fragments = fragments
        record.raw_poc = None
        record.test_case = None
        record.pipeline_stage = PipelineStage.FRAGMENTED
        corpus.save(record, force=force)
        stages = {}
        for fragment in fragments:
            stages[fragment.capture_stage.value] = stages.get(fragment.capture_stage.value, 0) + 1
        detail = ", ".join(f"{k}={v}" for k, v in sorted(stages.items())) or "no fragments"
        report.add(record.report.id, "processed", detail)
    return report


def extract_stage(
    corpus: Corpus,
    client: TextGenClient,
    library: ExemplarLibrary,
    budget: ExtractionBudget | None = None,
    include_unconfirmed: bool = False,
    force: bool = False,
    only: set[str] | None = None,
) -> StageReport:
    """Run retrieval-augmented extraction over fragmented records."""
    report = StageReport("extract")
    for record in corpus.records():
        if only is not None and record.report.id not in only:
            continue
        stage = record.pipeline_stage
        if stage in (PipelineStage.COLLECTED,):
            report.add(record.report.id, "skipped", "not fragmented yet")
            continue
        if stage is not PipelineStage.FRAGMENTED and not force:
            report.add(record.report.id, "skipped", f"already {stage.value}")
            continue
        if (
            record.report.status not in EXTRACTABLE_STATUSES
            and not include_unconfirmed
        ):
            report.add(record.report.id, "skipped", f"status {record.report.status.value}")
            continue
        try:
            result = extract_raw_poc(record, client, library, budget)
        except PocmillError as exc:
            report.add(record.report.id, "failed", str(exc))
            continue
        if result.poc is not None:
            record.raw_poc = result.poc
            record.test_case = None
            record.pipeline_stage = PipelineStage.EXTRACTED
            corpus.save(record, force=force)
            promoted = promote_exemplar(record, result, library)
            detail = f"{len(result.poc.statements)} statements, rounds={result.rounds}"
            if promoted is not None:
                detail += ", promoted"
            report.add(record.report.id, "processed", detail)
        else:
            record.raw_poc = None
            record.test_case = None
            record.pipeline_stage = PipelineStage.NON_EXTRACTABLE
            corpus.save(record, force=force)
            report.add(
                record.report.id,
                "processed",
                f"non-extractable: {result.non_extractable.reason}",
            )
    return report


def adapt_stage(
    corpus: Corpus,
    client: TextGenClient,
    backend_resolver: Callable[[str], Backend],
    max_iters: int = 5,
    beta: float = 0.4,
    timeout: float = 30.0,
    force: bool = False,
    only: set[str] | None = None,
) -> StageReport:
    """Forge extracted PoCs into executable test cases.

    ``backend_resolver`` maps a dialect name to a provisioned backend; a
    dialect with no backend fails that record only.
    """
    report = StageReport("adapt")
    kbs: dict[str, KnowledgeBase] = {}
    for record in corpus.records():
        if only is not None and record.report.id not in only:
            continue
        stage = record.pipeline_stage
        if stage in (PipelineStage.COLLECTED, PipelineStage.FRAGMENTED, PipelineStage.NON_EXTRACTABLE):
            report.add(record.report.id, "skipped", f"stage {stage.value}")
            continue
        if stage is not PipelineStage.EXTRACTED and not force:
            report.add(record.report.id, "skipped", f"already {stage.value}")
            continue
        dialect = record.report.dbms.lower()
        try:
            backend = backend_resolver(dialect)
            kb = kbs.setdefault(dialect, KnowledgeBase.for_dbms(dialect))
            result = adapt(
                record.raw_poc,
                backend,
                client,
                kb=kb,
                max_iters=max_iters,
                beta=beta,
                timeout=timeout,
            )
        except PocmillError as exc:
            report.add(record.report.id, "failed", str(exc))
            continue
        if result.case is not None:
            record.test_case = result.case
            record.pipeline_stage = PipelineStage.ADAPTED
            corpus.save(record, force=force)
            report.add(
                record.report.id,
                "processed",
                f"{result.case.expectation.kind.value}, iterations={result.iterations}",
            )
        else:
            record.test_case = None
            record.pipeline_stage = PipelineStage.ADAPTATION_FAILED
            corpus.save(record, force=force)
            report.add(
                record.report.id,
                "processed",
                f"adaptation failed: {result.failure.reason}",
            )
    return report
