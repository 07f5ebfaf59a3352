"""Turning the corpus into testing campaigns.

Three consumers of adapted test cases live here: seed export for fuzzers
(plain .sql files plus a manifest), regression replay across engine
versions, and cross-engine replay against sibling DBMSs.  Findings carry
a normalized signature so duplicate manifestations collapse to one group.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from pathlib import Path

from .adapter import symptom_matches
from .errors import EmptySelection
from .harness import Backend, execute
from .models import (
    CorpusRecord,
    ExecutionOutcome,
    ExpectationKind,
    FindingGroup,
    OutcomeKind,
    PipelineStage,
    ReplayFinding,
    ReportStatus,
    SeedCorpus,
    TestCase,
    Verdict,
)
from .sqltext import DIALECT_SUBJECTS, first_word, normalized_tokens

DEFAULT_TIMEOUT = 30.0

# Words in an origin symptom that mark it as a crash rather than an error.
CRASH_SYMPTOM_RE = re.compile(
    r"crash|segfault|segmentation|sigsegv|sigabrt|signal\s+\d+|assert|abort|core dump",
    re.IGNORECASE,
)


# -- crash signatures ---------------------------------------------------

SIGNATURE_FRAMES = 3


def _normalize_frame(frame: str) -> str:
    """Reduce one stack frame to its function name."""
    text = re.sub(r"^#\d+\s*", "", frame.strip())
    text = re.sub(r"0x[0-9a-fA-F]+", "", text)
    matched = re.search(r"\bin\s+([A-Za-z_][\w:~.<>]*)", text)
    if matched:
        return matched.group(1)
    text = re.sub(r"\bat\s+\S+:\d+\b", "", text)
    text = text.split("(")[0].strip()
    parts = text.split()
    return parts[0] if parts else "unknown"


def crash_signature(outcome: ExecutionOutcome) -> str:
    """Stable identity for an outcome: top frames, else code and message."""
    if outcome.frames:
        frames = [_normalize_frame(f) for f in outcome.frames[:SIGNATURE_FRAMES]]
        return "crash:" + "|".join(frames)
    if outcome.kind is OutcomeKind.CRASH:
        return f"crash:signal:{outcome.signal if outcome.signal is not None else 'unknown'}"
    if outcome.kind is OutcomeKind.ERROR:
        tokens = (outcome.message or "").split()[:4]
        label = "_".join(t.lower().strip(".,:;!") for t in tokens) or "unlabelled"
        return f"error:{outcome.code or 'nocode'}:{label}"
    return outcome.kind.value


# -- seed export --------------------------------------------------------


def _slug(text: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-").lower()
    return slug or "report"


def seed_filename(sql: str, origin_id: str) -> str:
    digest = hashlib.sha256(sql.encode("utf-8")).hexdigest()[:16]
    return f"{digest}__{_slug(origin_id)}.sql"


def seed_text(case: TestCase) -> str:
    return ";\n".join(s.rstrip().rstrip(";").rstrip() for s in case.statements) + ";\n"


def export_seeds(
    corpus: Iterable[CorpusRecord],
    target_dbms: str,
    out_dir: Path | str | None = None,
    case_filter: Callable[[TestCase], bool] | None = None,
) -> SeedCorpus:
    """Export every adapted case for one engine as fuzzing seed files.

    ``corpus`` is anything yielding corpus records (a Corpus object works).
    Filenames hash the seed text, so re-exporting an unchanged corpus is
    byte-identical.  Raises EmptySelection when nothing qualifies.
    """
    records = corpus.records() if hasattr(corpus, "records") else corpus
    files: list[tuple[str, str]] = []
    manifest: dict[str, dict] = {}
    for record in sorted(records, key=lambda r: r.report.id):
        if record.pipeline_stage is not PipelineStage.ADAPTED:
            continue
        if record.report.dbms.lower() != target_dbms.lower():
            continue
        case = record.test_case
        if case_filter is not None and not case_filter(case):
            continue
        sql = seed_text(case)
        if not normalized_tokens(sql):
            continue
        name = seed_filename(sql, record.report.id)
        files.append((name, sql))
        manifest[name] = {
            "origin_report_id": case.origin_report_id,
            "expectation": case.expectation.to_dict(),
            "risk": case.risk_tier.value.value,
            "statements": len(case.statements),
        }
    if not files:
        raise EmptySelection(f"no adapted cases for {target_dbms!r} pass the filter")
    seeds = SeedCorpus(target_dbms=target_dbms, files=files, manifest=manifest)
    if out_dir is not None:
        write_seed_corpus(seeds, out_dir)
    return seeds


def write_seed_corpus(seeds: SeedCorpus, out_dir: Path | str) -> Path:
    """Write seed files plus manifest.json; deterministic byte-for-byte."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, sql in seeds.files:
        (out / name).write_text(sql, "utf-8")
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(seeds.manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        "utf-8",
    )
    return out


# -- regression replay --------------------------------------------------


@dataclass
class ReplayBackend:
    """A backend plus its campaign roles (any of 'latest', 'fixed')."""

    backend: Backend
    roles: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        unknown = set(self.roles) - {"latest", "fixed"}
        if unknown:
            raise ValueError(f"unknown replay roles: {sorted(unknown)}")


def _reproduces(case: TestCase, outcome: ExecutionOutcome) -> bool:
    """Did the replay show the same symptom the origin report described?"""
    if case.expectation.kind is not ExpectationKind.EXPECT_BUG:
        return False
    symptom = case.expectation.symptom or ""
    if outcome.kind is OutcomeKind.CRASH:
        return bool(CRASH_SYMPTOM_RE.search(symptom))
    if outcome.kind is OutcomeKind.ERROR:
        return symptom_matches(symptom, outcome)
    return False


def regression_replay(
    cases: list[tuple[TestCase, ReportStatus]],
    backends: list[ReplayBackend],
    timeout: float = DEFAULT_TIMEOUT,
) -> list[ReplayFinding]:
    """Replay cases across engine versions and look for resurfaced bugs.

    Each case runs on every backend.  A regression verdict needs three
    things at once: the origin report was fixed, the symptom reproduces on
    the backend tagged latest, and it reproduces on at least one backend
    tagged fixed (one backend may hold both tags).  Reproductions outside
    that pattern stay inconclusive, with the reason in the notes; bug-like
    outcomes that do not match the origin symptom are new_symptom.
    """
    if not backends:
        raise ValueError("regression replay needs at least one backend")
    findings: list[ReplayFinding] = []
    for case, origin_status in cases:
        runs: list[tuple[ReplayBackend, ExecutionOutcome, bool]] = []
        for entry in backends:
            outcome = execute(entry.backend, case.statements, timeout)
            runs.append((entry, outcome, _reproduces(case, outcome)))
        latest_reproduced = any(r for e, _, r in runs if "latest" in e.roles and r)
        fixed_reproduced = any(r for e, _, r in runs if "fixed" in e.roles and r)
        confirmed = (
            origin_status is ReportStatus.FIXED and latest_reproduced and fixed_reproduced
        )
        for entry, outcome, reproduced in runs:
            if reproduced:
                if confirmed:
                    verdict, notes = Verdict.REGRESSION, None
                elif origin_status is not ReportStatus.FIXED:
                    verdict, notes = Verdict.INCONCLUSIVE, "origin_not_fixed"
                elif not latest_reproduced:
                    verdict, notes = Verdict.INCONCLUSIVE, "not_reproduced_on_latest"
                else:
                    verdict, notes = Verdict.INCONCLUSIVE, "not_reproduced_on_fixed_version"
            elif outcome.kind is OutcomeKind.CLEAN:
                verdict, notes = Verdict.STILL_FIXED, None
            else:
                verdict, notes = Verdict.NEW_SYMPTOM, None
            findings.append(
                ReplayFinding(
                    origin_report_id=case.origin_report_id,
                    replay_backend=entry.backend.backend_id,
                    replay_version=entry.backend.version,
                    outcome=outcome,
                    verdict=verdict,
                    signature=crash_signature(outcome),
                    notes=notes,
                )
            )
    return findings


# -- cross-engine replay ------------------------------------------------


def dialect_compatible(statements: list[str], target_dialect: str) -> bool:
    """Tokenizer-level pre-filter: every statement opener must be one the
    target dialect accepts.  Shallow by design; false negatives are fine.
    """
    accepted = DIALECT_SUBJECTS.get(target_dialect.lower(), DIALECT_SUBJECTS["generic"])
    return all((first_word(s) or "") in accepted for s in statements)


def cross_replay(
    cases: list[TestCase],
    origin_dbms: str,
    backend: Backend,
    timeout: float = DEFAULT_TIMEOUT,
) -> list[ReplayFinding]:
    """Replay one engine's cases on a sibling engine.

    Cases that fail the dialect pre-filter are not executed and come back
    inconclusive with a dialect_mismatch note.  A crash, or an error that
    matches the origin symptom, is a cross_hit; anything else stays
    inconclusive because sibling engines differ benignly all the time.
    """
    if origin_dbms.lower() == backend.dialect.lower():
        raise ValueError("cross replay needs a backend for a different engine")
    findings: list[ReplayFinding] = []
    for case in cases:
        if not dialect_compatible(case.statements, backend.dialect):
            findings.append(
                ReplayFinding(
                    origin_report_id=case.origin_report_id,
                    replay_backend=backend.backend_id,
                    replay_version=backend.version,
                    outcome=ExecutionOutcome(
                        kind=OutcomeKind.CLEAN,
                        statement_results=[],
                        duration=0.0,
                        backend_id=backend.backend_id,
                        backend_version=backend.version,
                    ),
                    verdict=Verdict.INCONCLUSIVE,
                    signature="not_executed",
                    notes="dialect_mismatch",
                )
            )
            continue
        outcome = execute(backend, case.statements, timeout)
        expected = (
            case.expectation.symptom
            if case.expectation.kind is ExpectationKind.EXPECT_BUG
            else None
        )
        if outcome.kind is OutcomeKind.CRASH or (
            outcome.kind is OutcomeKind.ERROR and symptom_matches(expected, outcome)
        ):
            verdict, notes = Verdict.CROSS_HIT, None
        else:
            verdict, notes = Verdict.INCONCLUSIVE, "no_bug_observed"
        findings.append(
            ReplayFinding(
                origin_report_id=case.origin_report_id,
                replay_backend=backend.backend_id,
                replay_version=backend.version,
                outcome=outcome,
                verdict=verdict,
                signature=crash_signature(outcome),
                notes=notes,
            )
        )
    return findings


# -- reporting ----------------------------------------------------------


def dedupe_findings(findings: list[ReplayFinding]) -> list[FindingGroup]:
    """Collapse findings sharing a signature; first occurrence represents."""
    groups: dict[str, FindingGroup] = {}
    for finding in findings:
        group = groups.get(finding.signature)
        if group is None:
            groups[finding.signature] = FindingGroup(
                signature=finding.signature,
                representative=finding,
                count=1,
                member_ids=[finding.origin_report_id],
            )
        else:
            group.count += 1
            group.member_ids.append(finding.origin_report_id)
    return list(groups.values())


def findings_to_jsonl(findings: list[ReplayFinding]) -> str:
    """Line-delimited record stream, one finding per line."""
    return "".join(
        json.dumps(f.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for f in findings
    )


def findings_table(findings: list[ReplayFinding]) -> str:
    """Human-readable summary table of replay findings."""
    headers = ("origin", "backend", "verdict", "signature", "notes")
    rows = [
        (
            f.origin_report_id,
            f"{f.replay_backend}@{f.replay_version}",
            f.verdict.value,
            f.signature,
            f.notes or "",
        )
        for f in findings
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))).rstrip(),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"
