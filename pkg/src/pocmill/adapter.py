"""Feedback-driven adaptation of raw PoCs into executable test cases.

The loop is execute -> classify -> (accept | diagnose -> repair ->
constraint-check), bounded by an iteration budget.  Outcomes that match
the reported symptom (or crash outright) accept immediately; unexpected
errors are diagnosed against a per-engine knowledge base and sent to the
text-generation client for repair.  A repair candidate only replaces the
current statements if the semantic constraints hold, so the accepted test
case always preserves the original PoC's anchors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .anchors import DEFAULT_REWRITE_BOUND, capture_anchors, check_constraints
from .errors import UnparseableRepair
from .harness import Backend, assess_risk, execute
from .models import (
    AnchorProfile,
    Diagnosis,
    DiagnosisCategory,
    ExecutionClass,
    ExecutionClassValue,
    ExecutionOutcome,
    Expectation,
    ExpectationKind,
    OutcomeKind,
    RawPoC,
    RepairRecord,
    TestCase,
)
from .textgen import EnvelopeParseError, TextGenClient, parse_envelope

DEFAULT_MAX_ITERS = 5

# Order in which rule categories are consulted; first match wins.
CATEGORY_PRIORITY = [
    DiagnosisCategory.SYNTAX,
    DiagnosisCategory.CONFIGURATION,
    DiagnosisCategory.SEMANTIC,
]


def _normalize_symptom(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower())


def symptom_matches(expected: str | None, outcome: ExecutionOutcome) -> bool:
    """Does an error outcome show the symptom the report described?

    Three signals count, any one suffices: the normalized strings contain
    each other, the outcome's error code appears in the expected text, or
    the server message is quoted inside the expected text.  Reports quote
    client-formatted lines like ``ERROR 2027 (HY000): Malformed packet``
    while backends hand back code and message separately, so a plain
    substring test alone would miss genuine matches.
    """
    if not expected:
        return False
    needle = _normalize_symptom(expected)
    if not needle:
        return False
    haystack = _normalize_symptom(f"error {outcome.code or ''} {outcome.message or ''}")
    if needle in haystack or haystack in needle:
        return True
    if outcome.code and len(outcome.code) >= 2:
        if re.search(rf"\b{re.escape(outcome.code.lower())}\b", needle):
            return True
    if outcome.message:
        message = _normalize_symptom(outcome.message)
        if message and message in needle:
            return True
    return False


def classify_execution(outcome: ExecutionOutcome, expected_behavior: str | None) -> ExecutionClass:
    """Sort an outcome into bug_triggering / pending / problematic.

    Crashes, timeouts and lost connections are bug class on their own; an
    ordinary error is bug class only when it matches the expected symptom,
    otherwise problematic.  A clean run is pending: nothing observed yet,
    nothing wrong either.
    """
    if outcome.kind in (OutcomeKind.CRASH, OutcomeKind.TIMEOUT, OutcomeKind.CONNECTION_LOST):
        return ExecutionClass(value=ExecutionClassValue.BUG_TRIGGERING, evidence=outcome)
    if outcome.kind is OutcomeKind.ERROR:
        if symptom_matches(expected_behavior, outcome):
            return ExecutionClass(value=ExecutionClassValue.BUG_TRIGGERING, evidence=outcome)
        return ExecutionClass(value=ExecutionClassValue.PROBLEMATIC, evidence=outcome)
    return ExecutionClass(value=ExecutionClassValue.PENDING, evidence=outcome)


@dataclass
class KnowledgeBase:
    """Diagnosis rules: (regex pattern, category, guidance), per engine.

    The rule file format is line-oriented: ``pattern | category | guidance``
    with ``#`` comments.  The two rightmost pipes delimit the fields, so
    patterns may use regex alternation; guidance must stay pipe-free.
    Rules are matched per category in priority order (syntax before
    configuration before semantic), first hit wins.
    """

    rules: list[tuple[str, DiagnosisCategory, str, str]] = field(default_factory=list)

    @classmethod
    def parse(cls, text: str, table_name: str = "inline") -> "KnowledgeBase":
        rules = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.rsplit("|", 2)]
            if len(parts) != 3:
                raise ValueError(f"{table_name}:{lineno}: rule needs pattern | category | guidance")
            pattern, category, guidance = parts
            re.compile(pattern)
            rules.append(
                (pattern, DiagnosisCategory(category), guidance, f"{table_name}#{lineno}")
            )
        return cls(rules=rules)

    @classmethod
    def from_file(cls, path: Path | str) -> "KnowledgeBase":
        path = Path(path)
        return cls.parse(path.read_text("utf-8"), table_name=path.stem)

    @classmethod
    def for_dbms(cls, dbms: str) -> "KnowledgeBase":
        """Packaged rule table for an engine, falling back to the generic one."""
        package = resources.files("pocmill.data.kb")
        candidate = package / f"{dbms.lower()}.rules"
        if not candidate.is_file():
            candidate = package / "generic.rules"
        return cls.parse(candidate.read_text("utf-8"), table_name=candidate.name.rsplit(".", 1)[0])

    def diagnose(self, feedback: str) -> Diagnosis:
        """Categorize raw execution feedback; unknown keeps it verbatim."""
        for category in CATEGORY_PRIORITY:
            for pattern, rule_category, guidance, rule_id in self.rules:
                if rule_category is not category:
                    continue
                if re.search(pattern, feedback, re.IGNORECASE):
                    return Diagnosis(
                        category=category,
                        raw_feedback=feedback,
                        matched_rule=rule_id,
                        guidance=guidance,
                    )
        return Diagnosis(category=DiagnosisCategory.UNKNOWN, raw_feedback=feedback)


def diagnose(feedback: str, kb: KnowledgeBase) -> Diagnosis:
    return kb.diagnose(feedback)


@dataclass
class RepairCandidate:
    """Statements proposed by a repair, plus any explicit renames."""

    statements: list[str]
    renames: dict[str, str] = field(default_factory=dict)


REPAIR_SYSTEM_PROMPT = (
    "You repair SQL proof-of-concept scripts for database bug testing. "
    "Given the failing statements and a diagnosis, return a corrected "
    "statement list that still reproduces the original scenario."
)

REPAIR_INSTRUCTIONS = """Rules:
- Keep every schema object and operation of the original script unless the
  diagnosis demands otherwise.
- If you must rename an object, declare it with a line 'RENAME: old -> new'
  inside the STATEMENTS block.
- Answer only with:
STATEMENTS:
<the full corrected statement list, semicolon-terminated>"""

REPAIR_FORMAT_REMINDER = (
    "Your previous answer did not follow the required format. Answer with a "
    "STATEMENTS: block holding the full corrected statement list."
)


def _repair_messages(
    statements: list[str],
    diagnosis: Diagnosis,
    extra_note: str | None = None,
    origin: str | None = None,
) -> list[dict[str, str]]:
    body = [REPAIR_INSTRUCTIONS, ""]
    if origin:
        body.append(f"Origin report: {origin}")
    body += [
        "Current statements:",
        *(f"{s.rstrip(';')};" for s in statements),
        "",
        f"Diagnosis: {diagnosis.category.value}",
    ]
    if diagnosis.guidance:
        body.append(f"Guidance: {diagnosis.guidance}")
    body.append(f"Feedback: {diagnosis.raw_feedback}")
    if extra_note:
        body.append("")
        body.append(extra_note)
    return [
        {"role": "system", "content": REPAIR_SYSTEM_PROMPT},
        {"role": "user", "content": "\n".join(body)},
    ]


def repair_step(
    statements: list[str],
    diagnosis: Diagnosis,
    client: TextGenClient,
    extra_note: str | None = None,
    origin: str | None = None,
) -> RepairCandidate:
    """Ask the client for a corrected statement list.

    The answer must be a STATEMENTS envelope; free text is retried once
    with a format reminder and then raises UnparseableRepair.
    """
    messages = _repair_messages(statements, diagnosis, extra_note, origin)
    answer = client.complete(messages)
    try:
        envelope = parse_envelope(answer)
    except EnvelopeParseError:
        retry = list(messages)
        retry[-1] = {
            "role": "user",
            "content": retry[-1]["content"] + "\n\n" + REPAIR_FORMAT_REMINDER,
        }
        try:
            envelope = parse_envelope(client.complete(retry))
        except EnvelopeParseError as exc:
            raise UnparseableRepair(f"repair response unusable after retry: {exc}") from exc
    if envelope.tag != "statements":
        raise UnparseableRepair(f"repair answered {envelope.tag}, expected statements")
    return RepairCandidate(statements=envelope.statements, renames=envelope.renames)


@dataclass
class AdaptationFailed:
    """Terminal failure, with the full diagnose/repair history."""

    report_id: str
    reason: str
    adaptation_log: list[RepairRecord]
    iterations: int


@dataclass
class AdaptationResult:
    case: TestCase | None
    failure: AdaptationFailed | None
    iterations: int


def _feedback_text(outcome: ExecutionOutcome) -> str:
    parts = []
    if outcome.code:
        parts.append(f"ERROR {outcome.code}")
    if outcome.message:
        parts.append(outcome.message)
    if not parts:
        parts.append(outcome.kind.value)
    return ": ".join(parts) if len(parts) > 1 else parts[0]


def _accept(
    statements: list[str],
    poc: RawPoC,
    profile: AnchorProfile,
    classification: ExecutionClass,
    log: list[RepairRecord],
    renames: dict[str, str],
    beta: float,
    iterations: int,
) -> AdaptationResult:
    report = check_constraints(statements, profile, beta, renames)
    if classification.value is ExecutionClassValue.BUG_TRIGGERING:
        symptom = poc.expected_behavior or _feedback_text(classification.evidence)
        expectation = Expectation(kind=ExpectationKind.EXPECT_BUG, symptom=symptom)
    else:
        expectation = Expectation(kind=ExpectationKind.EXPECT_CLEAN)
    case = TestCase(
        statements=list(statements),
        origin_report_id=poc.report_id,
        expectation=expectation,
        constraint_report=report,
        risk_tier=assess_risk(statements),
        adaptation_log=log,
    )
    return AdaptationResult(case=case, failure=None, iterations=iterations)


def adapt(
    poc: RawPoC,
    backend: Backend,
    client: TextGenClient,
    kb: KnowledgeBase | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    beta: float = DEFAULT_REWRITE_BOUND,
    timeout: float = 30.0,
) -> AdaptationResult:
    """Run the full adaptation loop for one raw PoC.

    Every adopted repair has already passed the constraint checks, so an
    accepted case carries a passing constraint report by construction (the
    untouched original passes against its own profile).
    """
    kb = kb or KnowledgeBase.for_dbms(backend.dialect)
    profile = capture_anchors(poc.statements)
    current = list(poc.statements)
    renames: dict[str, str] = {}
    log: list[RepairRecord] = []
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        outcome = execute(backend, current, timeout)
        classification = classify_execution(outcome, poc.expected_behavior)
        if classification.value is not ExecutionClassValue.PROBLEMATIC:
            return _accept(
                current, poc, profile, classification, log, renames, beta, iterations
            )
        diagnosis = kb.diagnose(_feedback_text(outcome))
        try:
            candidate = repair_step(current, diagnosis, client, origin=poc.report_id)
        except UnparseableRepair as exc:
            return AdaptationResult(
                case=None,
                failure=AdaptationFailed(
                    report_id=poc.report_id,
                    reason=str(exc),
                    adaptation_log=log,
                    iterations=iterations,
                ),
                iterations=iterations,
            )
        merged_renames = {**renames, **candidate.renames}
        report = check_constraints(candidate.statements, profile, beta, merged_renames)
        if not report.overall:
            violated = [
                name
                for name, part in (
                    ("anchor_match", report.anchor_match),
                    ("key_coverage", report.key_coverage),
                    ("rewrite_bound", report.rewrite_bound),
                )
                if not part["pass"]
            ]
            note = (
                "Your previous candidate violated the preservation constraints: "
                + ", ".join(violated)
                + ". Keep the original identifiers and operations intact."
            )
            try:
                candidate = repair_step(
                    current, diagnosis, client, extra_note=note, origin=poc.report_id
                )
            except UnparseableRepair as exc:
                return AdaptationResult(
                    case=None,
                    failure=AdaptationFailed(
                        report_id=poc.report_id,
                        reason=str(exc),
                        adaptation_log=log,
                        iterations=iterations,
                    ),
                    iterations=iterations,
                )
            merged_renames = {**renames, **candidate.renames}
            report = check_constraints(candidate.statements, profile, beta, merged_renames)
            if not report.overall:
                log.append(
                    RepairRecord(
                        diagnosis=diagnosis,
                        statements=list(candidate.statements),
                        adopted=False,
                        violations=[
                            name
                            for name, part in (
                                ("anchor_match", report.anchor_match),
                                ("key_coverage", report.key_coverage),
                                ("rewrite_bound", report.rewrite_bound),
                            )
                            if not part["pass"]
                        ],
                        renames=candidate.renames,
                    )
                )
                continue
        renames = merged_renames
        current = list(candidate.statements)
        log.append(
            RepairRecord(
                diagnosis=diagnosis,
                statements=list(candidate.statements),
                adopted=True,
                renames=candidate.renames,
            )
        )
    return AdaptationResult(
        case=None,
        failure=AdaptationFailed(
            report_id=poc.report_id,
            reason=f"no acceptable outcome within {max_iters} iterations",
            adaptation_log=log,
            iterations=iterations,
        ),
        iterations=iterations,
    )


# -- strategy comparison ------------------------------------------------

GENERIC_REPAIR_NOTE = (
    "No execution feedback is available. Make the script executable on a "
    "stock server while preserving its objects and operations."
)


def _merged_renames(log: list[RepairRecord]) -> dict[str, str]:
    merged: dict[str, str] = {}
    for record in log:
        if record.adopted:
            merged.update(record.renames)
    return merged


def _adapt_feedback_only(
    poc: RawPoC,
    backend: Backend,
    client: TextGenClient,
    kb: KnowledgeBase,
    max_iters: int,
    timeout: float,
) -> tuple[list[str], ExecutionClassValue, dict[str, str]]:
    """Feedback loop with no constraint gate: repairs are adopted blindly."""
    current = list(poc.statements)
    renames: dict[str, str] = {}
    last = ExecutionClassValue.PROBLEMATIC
    for _ in range(max_iters):
        outcome = execute(backend, current, timeout)
        last = classify_execution(outcome, poc.expected_behavior).value
        if last is not ExecutionClassValue.PROBLEMATIC:
            return current, last, renames
        diagnosis = kb.diagnose(_feedback_text(outcome))
        try:
            candidate = repair_step(current, diagnosis, client, origin=poc.report_id)
        except UnparseableRepair:
            return current, last, renames
        current = list(candidate.statements)
        renames.update(candidate.renames)
    return current, last, renames


def _adapt_single_pass(
    poc: RawPoC,
    backend: Backend,
    client: TextGenClient,
    max_iters: int,
    beta: float,
    timeout: float,
) -> tuple[list[str], ExecutionClassValue, dict[str, str]]:
    """One constraint-gated repair with no diagnosis feedback in the prompt."""
    del max_iters  # single pass by definition
    profile = capture_anchors(poc.statements)
    current = list(poc.statements)
    outcome = execute(backend, current, timeout)
    first = classify_execution(outcome, poc.expected_behavior).value
    if first is not ExecutionClassValue.PROBLEMATIC:
        return current, first, {}
    blind = Diagnosis(
        category=DiagnosisCategory.UNKNOWN,
        raw_feedback="execution feedback withheld",
        guidance=GENERIC_REPAIR_NOTE,
    )
    try:
        candidate = repair_step(current, blind, client, origin=poc.report_id)
    except UnparseableRepair:
        return current, first, {}
    report = check_constraints(candidate.statements, profile, beta, candidate.renames)
    if not report.overall:
        return current, first, {}
    outcome = execute(backend, candidate.statements, timeout)
    final_cls = classify_execution(outcome, poc.expected_behavior).value
    return candidate.statements, final_cls, dict(candidate.renames)


def strategy_report(
    pocs: list[RawPoC],
    mode: str,
    backend: Backend,
    client: TextGenClient,
    kb: KnowledgeBase | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    beta: float = DEFAULT_REWRITE_BOUND,
    timeout: float = 30.0,
) -> dict[str, float]:
    """Executable/richness rates for one adaptation strategy.

    Modes: ``F`` runs the feedback loop with no constraint gate, ``S`` runs
    a single constraint-gated repair with no diagnosis feedback, ``F+S`` is
    the full loop.  Executable means the final run is not an unexpected
    error; richness means the final statements still pass the constraint
    checks against the original profile.
    """
    if mode not in ("F", "S", "F+S"):
        raise ValueError(f"unknown strategy mode {mode!r}")
    if not pocs:
        raise ValueError("strategy report needs a non-empty sample")
    kb = kb or KnowledgeBase.for_dbms(backend.dialect)
    executable = 0
    rich = 0
    for poc in pocs:
        profile = capture_anchors(poc.statements)
        if mode == "F":
            final, cls, renames = _adapt_feedback_only(
                poc, backend, client, kb, max_iters, timeout
            )
        elif mode == "S":
            final, cls, renames = _adapt_single_pass(
                poc, backend, client, max_iters, beta, timeout
            )
        else:
            result = adapt(
                poc, backend, client, kb=kb, max_iters=max_iters, beta=beta, timeout=timeout
            )
            if result.case is not None:
                final = result.case.statements
                cls = (
                    ExecutionClassValue.BUG_TRIGGERING
                    if result.case.expectation.kind is ExpectationKind.EXPECT_BUG
                    else ExecutionClassValue.PENDING
                )
                renames = _merged_renames(result.case.adaptation_log)
            else:
                adopted = [r for r in result.failure.adaptation_log if r.adopted]
                final = adopted[-1].statements if adopted else list(poc.statements)
                cls = ExecutionClassValue.PROBLEMATIC
                renames = _merged_renames(result.failure.adaptation_log)
        if cls is not ExecutionClassValue.PROBLEMATIC:
            executable += 1
        if check_constraints(final, profile, beta, renames).overall:
            rich += 1
    return {
        "mode": mode,
        "cases": len(pocs),
        "executable_rate": executable / len(pocs),
        "richness_rate": rich / len(pocs),
    }
