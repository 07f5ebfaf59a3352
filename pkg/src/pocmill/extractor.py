"""Retrieval-augmented extraction of raw PoCs from fragmented reports.

One extraction round builds a four-part prompt (system role, protocol
instructions, reference exemplars, the task itself), asks the client, and
parses the tagged envelope.  INSUFFICIENT_CONTEXT answers widen the task
context around the captured fragments and try again, up to a round budget;
STATEMENTS answers must survive self-examination before they become a
RawPoC.  Clean first-try extractions are promoted into the exemplar
library so later retrievals can lean on them.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .errors import TokenBudgetExceeded
from .models import (
    MODEL_INFERRED,
    BugReport,
    CaptureStage,
    CorpusRecord,
    Exemplar,
    Fragment,
    Polarity,
    PromptBundle,
    RawPoC,
)
from .retrieval import ExemplarLibrary, embed_text, keyword_profile, retrieve_exemplars
from .sqltext import statement_defines, statement_identifiers, statement_verb
from .textgen import TextGenClient, complete_enveloped

SYSTEM_PROMPT = (
    "You are a SQL proof-of-concept extraction assistant for database bug "
    "reports. You read report excerpts and return exactly the SQL statements "
    "needed to reproduce the described problem, nothing else."
)

EXTRACTION_PROTOCOL = """Follow these steps:
1. Extract: read the summary and the numbered fragments and identify the
   SQL statements that reproduce the issue, in execution order.
2. Expand: if the fragments are not enough to decide, reply with the single
   line INSUFFICIENT_CONTEXT and you will receive more surrounding lines.
3. Verify: before answering, check every statement is complete, references
   only objects defined in the report or by an earlier statement, and
   carries no shell or client prompt residue.

Answer in exactly one of these forms:
STATEMENTS:
<one or more SQL statements, each terminated by a semicolon>

INSUFFICIENT_CONTEXT

NON_EXTRACTABLE: <short reason>"""

NO_REFERENCES_PLACEHOLDER = "No reference examples available."

DEFAULT_DENYLIST = [
    r"^(mysql|mariadb|postgres|sqlite|monetdb)[>=#$]",
    r"^\$\s",
    r"^[>#]\s*$",
    r"^Query OK\b",
    r"^\d+ rows? in set\b",
]

# Error-pattern rules for mining the expected behaviour out of a report
# body, tried in order.
EXPECTED_PATTERNS = [
    r"ERROR\s+\d+[^\n]*",
    r"(?i)\bsegmentation fault\b[^\n]*",
    r"(?i)\bassertion[^\n]*failed[^\n]*",
    r"(?i)\bserver crash(?:ed|es)?\b[^\n]*",
    r"(?i)\bsignal\s+\d+[^\n]*",
    r"(?i)\bconnection\s+(?:lost|refused|reset)\b[^\n]*",
    r"(?i)\bwrong result\b[^\n]*",
]


@dataclass
class ExtractionBudget:
    """Knobs for one extraction run."""

    max_rounds: int = 3
    expansion_lines: int = 8
    token_budget: int = 4000
    retrieval_k: int = 4


@dataclass
class NonExtractable:
    """Terminal no-PoC verdict, with the reason the model or budget gave."""

    report_id: str
    reason: str


@dataclass
class SelfExamReport:
    """Outcome of the three acceptance checks on candidate statements."""

    accepted: bool
    reasons: list[str] = field(default_factory=list)


def mine_expected_behavior(report: BugReport) -> str | None:
    """First error-pattern match in the report body, verbatim."""
    text = "\n".join(report.body)
    for pattern in EXPECTED_PATTERNS:
        m = re.search(pattern, text)
        if m:
            return m.group(0).strip()
    return None


def fragments_digest(fragments: list[Fragment]) -> str:
    joined = "\n\x00".join(f.text for f in fragments)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


def render_references(exemplars: list[Exemplar]) -> str:
    """Human-readable reference block for the prompt."""
    if not exemplars:
        return NO_REFERENCES_PLACEHOLDER
    parts = ["Reference examples:"]
    for ex in exemplars:
        parts.append(f"[{ex.id}] ({ex.polarity.value})")
        parts.append(f"Summary: {ex.report_summary}")
        if ex.reasoning_trace:
            parts.append("Reasoning:")
            parts.extend(f"- {step}" for step in ex.reasoning_trace)
        if ex.raw_poc is not None:
            parts.append("Statements:")
            parts.extend(f"  {s};" for s in ex.raw_poc.statements)
        else:
            parts.append("Verdict: NON_EXTRACTABLE")
        parts.append("")
    return "\n".join(parts).rstrip()


def _context_window(report: BugReport, fragments: list[Fragment], margin: int) -> list[str]:
    """Body lines within ``margin`` of any fragment, annotated and deduped."""
    if margin <= 0 or not fragments:
        return []
    keep: set[int] = set()
    for fragment in fragments:
        lo = max(0, fragment.start_index - margin)
        hi = min(len(report.body), fragment.end_index + margin)
        keep.update(range(lo, hi))
    covered = set()
    for fragment in fragments:
        covered.update(range(fragment.start_index, fragment.end_index))
    return [f"{idx}: {report.body[idx]}" for idx in sorted(keep - covered)]


def render_task(
    record: CorpusRecord,
    fragments: list[Fragment],
    references: str,
    context_lines: list[str],
) -> str:
    report = record.report
    parts = [
        f"Report: {report.id} ({report.dbms}, status {report.status.value})",
        f"Summary: {report.title}",
        "",
        "Fragments:",
    ]
    if fragments:
        for idx, fragment in enumerate(fragments):
            parts.append(
                f"[{idx}] ({fragment.capture_stage.value} @ line {fragment.start_index})"
            )
            parts.extend(fragment.lines)
    else:
        parts.append("(none captured)")
    if context_lines:
        parts.append("")
        parts.append("Context lines:")
        parts.extend(context_lines)
    parts.append("")
    parts.append(references)
    return "\n".join(parts)


def build_prompt(
    record: CorpusRecord,
    exemplars: list[Exemplar],
    budget: ExtractionBudget | None = None,
    context_margin: int = 0,
) -> PromptBundle:
    """Assemble the four-part prompt, shrinking it to the token budget.

    When over budget, scored-line fragments go first (oldest first), then
    backtracked statements; formatted blocks are kept.  After that the
    reference block is dropped.  A prompt that still does not fit raises
    TokenBudgetExceeded.
    """
    budget = budget or ExtractionBudget()
    if record.fragments is None:
        raise ValueError(f"record {record.report.id} has not been fragmented")
    fragments = list(record.fragments)
    references = render_references(exemplars)

    def assemble(frags: list[Fragment], refs: str) -> PromptBundle:
        context_lines = _context_window(record.report, frags, context_margin)
        return PromptBundle(
            system=SYSTEM_PROMPT,
            extraction=EXTRACTION_PROTOCOL,
            references=refs,
            task=render_task(record, frags, refs, context_lines),
        )

    bundle = assemble(fragments, references)
    if bundle.token_count() <= budget.token_budget:
        return bundle
    for drop_stage in (CaptureStage.SCORED_LINE, CaptureStage.BACKTRACKED_STATEMENT):
        droppable = [f for f in fragments if f.capture_stage is drop_stage]
        for fragment in droppable:  # oldest (lowest start) first
            fragments.remove(fragment)
            bundle = assemble(fragments, references)
            if bundle.token_count() <= budget.token_budget:
                return bundle
    bundle = assemble(fragments, NO_REFERENCES_PLACEHOLDER)
    if bundle.token_count() <= budget.token_budget:
        return bundle
    raise TokenBudgetExceeded(
        f"prompt for {record.report.id} cannot fit {budget.token_budget} tokens"
    )


def self_examine(
    poc: RawPoC,
    record: CorpusRecord,
    denylist: list[str] | None = None,
) -> SelfExamReport:
    """Gate candidate statements before they become a raw PoC.

    Three checks: every referenced identifier is grounded in the report
    body or defined earlier in the PoC; every statement opens with a
    statement keyword; no statement is client/shell boilerplate.
    """
    denylist = DEFAULT_DENYLIST if denylist is None else denylist
    reasons: list[str] = []
    body_text = "\n".join(record.report.body).lower()
    defined: set[str] = set()
    for idx, statement in enumerate(poc.statements):
        stripped = statement.strip()
        for pattern in denylist:
            if re.search(pattern, stripped, re.IGNORECASE):
                reasons.append(f"structural: statement {idx} matches boilerplate {pattern!r}")
                break
        verb = statement_verb(statement)
        if verb is None or not re.match(r"^[A-Za-z_]", stripped):
            reasons.append(f"structural: statement {idx} does not start with a keyword")
        elif verb not in record_subjects(record):
            reasons.append(f"structural: statement {idx} starts with {verb!r}, not a statement keyword")
        own_defs = statement_defines(statement)
        for name in sorted(statement_identifiers(statement) - defined - own_defs):
            if not re.search(rf"\b{re.escape(name)}\b", body_text):
                reasons.append(
                    f"contextual inconsistency: statement {idx} references {name!r}, "
                    "which the report never mentions and no earlier statement defines"
                )
        defined |= own_defs
    return SelfExamReport(accepted=not reasons, reasons=reasons)


def record_subjects(record: CorpusRecord) -> frozenset[str]:
    """Statement-opening keywords acceptable for this record's dialect."""
    from .sqltext import DIALECT_SUBJECTS

    return DIALECT_SUBJECTS.get(record.report.dbms, DIALECT_SUBJECTS["generic"])


def _statement_provenance(statements: list[str], fragments: list[Fragment]) -> dict[int, int | str]:
    """Map each statement to the fragment that carries it, if any."""

    def squash(text: str) -> str:
        return re.sub(r"\s+", " ", text.lower()).strip().rstrip(";")

    fragment_texts = [squash(f.text) for f in fragments]
    provenance: dict[int, int | str] = {}
    for idx, statement in enumerate(statements):
        needle = squash(statement)
        for f_idx, hay in enumerate(fragment_texts):
            if needle and needle in hay:
                provenance[idx] = f_idx
                break
        else:
            provenance[idx] = MODEL_INFERRED
    return provenance


@dataclass
class ExtractionResult:
    """What one extraction run produced, with the library-feedback hooks."""

    poc: RawPoC | None
    non_extractable: NonExtractable | None
    rounds: int
    self_exam: SelfExamReport | None
    clean_first_try: bool


def extract_raw_poc(
    record: CorpusRecord,
    client: TextGenClient,
    library: ExemplarLibrary,
    budget: ExtractionBudget | None = None,
) -> ExtractionResult:
    """Run the extraction protocol for one fragmented record.

    Returns a result holding either a RawPoC or a NonExtractable verdict.
    A context-less report (no fragments) is non-extractable outright.
    """
    budget = budget or ExtractionBudget()
    if record.fragments is None:
        raise ValueError(f"record {record.report.id} has not been fragmented")
    if not record.fragments:
        return ExtractionResult(
            poc=None,
            non_extractable=NonExtractable(record.report.id, "no PoC-like fragments captured"),
            rounds=0,
            self_exam=None,
            clean_first_try=False,
        )
    context_text = record.report.title + "\n" + "\n".join(f.text for f in record.fragments)
    exemplars = retrieve_exemplars(context_text, budget.retrieval_k, library)
    margin = 0
    last_exam: SelfExamReport | None = None
    exam_note = ""
    for round_no in range(1, budget.max_rounds + 1):
        bundle = build_prompt(record, exemplars, budget, context_margin=margin)
        messages = bundle.messages()
        if exam_note:
            messages[-1] = {
                "role": messages[-1]["role"],
                "content": messages[-1]["content"] + "\n\n" + exam_note,
            }
        envelope = complete_enveloped(client, messages)
        if envelope.tag == "insufficient_context":
            margin += budget.expansion_lines
            continue
        if envelope.tag == "non_extractable":
            return ExtractionResult(
                poc=None,
                non_extractable=NonExtractable(record.report.id, envelope.reason),
                rounds=round_no,
                self_exam=None,
                clean_first_try=False,
            )
        expected = mine_expected_behavior(record.report)
        expected_source = "rules" if expected else "none"
        if expected is None and envelope.expected:
            # The model may fill the gap, but only with text the report
            # actually contains.
            candidate = envelope.expected.strip()
            if candidate and candidate in "\n".join(record.report.body):
                expected = candidate
                expected_source = "model"
        poc = RawPoC(
            statements=envelope.statements,
            report_id=record.report.id,
            provenance=_statement_provenance(envelope.statements, record.fragments),
            expected_behavior=expected,
            expected_source=expected_source,
        )
        exam = self_examine(poc, record)
        last_exam = exam
        if exam.accepted:
            return ExtractionResult(
                poc=poc,
                non_extractable=None,
                rounds=round_no,
                self_exam=exam,
                clean_first_try=(round_no == 1 and not exam_note),
            )
        exam_note = (
            "Your previous statements failed verification:\n- "
            + "\n- ".join(exam.reasons)
            + "\nCorrect them and answer again in the same format."
        )
    reason = "extraction budget exhausted"
    if last_exam is not None and last_exam.reasons:
        reason += "; last rejection: " + last_exam.reasons[0]
    return ExtractionResult(
        poc=None,
        non_extractable=NonExtractable(record.report.id, reason),
        rounds=budget.max_rounds,
        self_exam=last_exam,
        clean_first_try=False,
    )


def promote_exemplar(record: CorpusRecord, result: ExtractionResult, library: ExemplarLibrary) -> Exemplar | None:
    """Add a clean, first-try extraction to the library as a positive.

    Returns the new exemplar, or None when the result does not qualify
    (needed repairs, expansions, or was not accepted).
    """
    if result.poc is None or not result.clean_first_try:
        return None
    if record.fragments is None:
        return None
    fragment_refs = sorted(
        {v for v in result.poc.provenance.values() if isinstance(v, int)}
    )
    trace = [
        f"Summary points at: {record.report.title}",
        f"Fragments {fragment_refs or 'none'} carry the candidate statements.",
        "All statements open with statement keywords and reference only "
        "objects grounded in the report.",
        "Statements accepted verbatim on the first pass.",
    ]
    context_text = record.report.title + "\n" + "\n".join(f.text for f in record.fragments)
    exemplar = Exemplar(
        id="ex-" + re.sub(r"[^A-Za-z0-9._-]+", "_", record.report.id),
        report_summary=record.report.title,
        fragments_digest=fragments_digest(record.fragments),
        raw_poc=result.poc,
        reasoning_trace=trace,
        polarity=Polarity.POSITIVE,
        dense_vector=embed_text(context_text),
        keywords=keyword_profile(context_text),
    )
    library.add(exemplar)
    return exemplar
