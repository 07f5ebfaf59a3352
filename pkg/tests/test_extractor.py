"""Extraction protocol: mining, prompting, self-exam, library promotion."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from pocmill.errors import TokenBudgetExceeded
from pocmill.extractor import (
    ExtractionBudget,
    build_prompt,
    extract_raw_poc,
    mine_expected_behavior,
    promote_exemplar,
    render_task,
    self_examine,
)
from pocmill.models import (
    MODEL_INFERRED,
    BugReport,
    CaptureStage,
    CorpusRecord,
    Fragment,
    PipelineStage,
    Polarity,
    RawPoC,
    ReportSource,
    ReportStatus,
)
from pocmill.retrieval import load_seed_exemplars
from pocmill.textgen import ScriptedClient

TS = datetime(2024, 3, 1, tzinfo=timezone.utc)


def make_report(body: list[str], *, rid: str = "mysql-1", dbms: str = "mysql") -> BugReport:
    return BugReport(
        id=rid,
        source=ReportSource.VENDOR_TRACKER,
        title="server misbehaves on a stored function call",
        status=ReportStatus.CONFIRMED,
        dbms=dbms,
        versions=["8.0.23"],
        created_at=TS,
        last_modified=TS,
        body=body,
    )


def make_record(
    body: list[str],
    fragments: list[Fragment] | None,
    *,
    rid: str = "mysql-1",
    dbms: str = "mysql",
) -> CorpusRecord:
    return CorpusRecord(
        report=make_report(body, rid=rid, dbms=dbms),
        pipeline_stage=PipelineStage.FRAGMENTED,
        fragments=fragments if fragments is not None else [],
    )


def block_fragment(lines: list[str], start: int = 0) -> Fragment:
    return Fragment(start_index=start, lines=lines, capture_stage=CaptureStage.FORMATTED_BLOCK)


def seeded_library() -> ExemplarLibrary:
    return load_seed_exemplars(cap=64)


# -- expected-behavior mining -------------------------------------------------


def test_mine_expected_behavior_prefers_error_lines():
    report = make_report(
        [
            "The server crashed after the last statement.",
            "ERROR 2027 (HY000): Malformed packet",
        ]
    )
    assert mine_expected_behavior(report) == "ERROR 2027 (HY000): Malformed packet"


@pytest.mark.parametrize(
    ("line", "expected"),
    [
        ("we hit a segmentation fault in the optimizer", "segmentation fault in the optimizer"),
        ("Assertion `exp is not null' failed in rel_optimize", None),
        ("the query returns a wrong result on 10.5", "wrong result on 10.5"),
    ],
)
def test_mine_expected_behavior_pattern_families(line, expected):
    report = make_report(["Some prose first.", line])
    mined = mine_expected_behavior(report)
    if expected is None:
        assert mined is not None and "failed" in mined.lower()
    else:
        assert mined == expected


def test_mine_expected_behavior_none_for_quiet_reports():
    report = make_report(["The result set ordering looks odd.", "No message is printed."])
    assert mine_expected_behavior(report) is None


# -- prompt assembly ----------------------------------------------------------


def test_render_task_carries_report_header_and_fragments():
    record = make_record(
        ["prose", "SELECT 1;"],
        [block_fragment(["SELECT 1;"], start=1)],
    )
    text = render_task(record, record.fragments, "Reference examples:", ["0: prose"])
    assert "Report: mysql-1 (mysql, status confirmed)" in text
    assert "SELECT 1;" in text
    assert "Context lines:" in text


def test_build_prompt_drops_scored_lines_first_under_budget():
    body = ["CREATE TABLE t1 (a INT);"] + [f"scored line {i}" for i in range(3)]
    fragments = [
        block_fragment(["CREATE TABLE t1 (a INT);"], start=0),
        Fragment(start_index=1, lines=["scored line 0 " * 40], capture_stage=CaptureStage.SCORED_LINE),
        Fragment(start_index=2, lines=["scored line 1 " * 40], capture_stage=CaptureStage.SCORED_LINE),
    ]
    record = make_record(body, fragments)
    full = build_prompt(record, [], ExtractionBudget(token_budget=100_000))
    assert "scored line 0" in full.task
    trimmed = build_prompt(record, [], ExtractionBudget(token_budget=full.token_count() - 50))
    assert "scored line 0" not in trimmed.task
    assert "CREATE TABLE t1" in trimmed.task


def test_build_prompt_raises_when_nothing_left_to_drop():
    record = make_record(
        ["CREATE TABLE t1 (a INT);"],
        [block_fragment(["CREATE TABLE t1 (a INT);" * 100])],
    )
    with pytest.raises(TokenBudgetExceeded):
        build_prompt(record, [], ExtractionBudget(token_budget=10))


# -- self-examination ---------------------------------------------------------


def grounded_record() -> CorpusRecord:
    body = [
        "CREATE TABLE t1 (c1 INT);",
        "INSERT INTO t1 VALUES (1);",
        "SELECT c1 FROM t1;",
    ]
    return make_record(body, [block_fragment(body)])


def test_self_examine_accepts_grounded_statements():
    record = grounded_record()
    poc = RawPoC(
        statements=["CREATE TABLE t1 (c1 INT)", "SELECT c1 FROM t1"],
        report_id="mysql-1",
        provenance={0: 0, 1: 0},
    )
    exam = self_examine(poc, record)
    assert exam.accepted
    assert exam.reasons == []


def test_self_examine_rejects_ungrounded_identifier():
    record = grounded_record()
    poc = RawPoC(
        statements=["SELECT c1 FROM phantom_table"],
        report_id="mysql-1",
        provenance={0: MODEL_INFERRED},
    )
    exam = self_examine(poc, record)
    assert not exam.accepted
    assert any("phantom_table" in r for r in exam.reasons)


def test_self_examine_allows_identifiers_defined_earlier_in_the_poc():
    record = grounded_record()
    poc = RawPoC(
        statements=["CREATE TABLE scratch (z INT)", "INSERT INTO scratch VALUES (1)"],
        report_id="mysql-1",
        provenance={0: MODEL_INFERRED, 1: MODEL_INFERRED},
    )
    assert self_examine(poc, record).accepted


def test_self_examine_rejects_shell_boilerplate_and_prose():
    record = grounded_record()
    poc = RawPoC(
        statements=["mysql> SELECT 1", "then the server dies"],
        report_id="mysql-1",
        provenance={0: MODEL_INFERRED, 1: MODEL_INFERRED},
    )
    exam = self_examine(poc, record)
    assert not exam.accepted
    assert any("structural" in r for r in exam.reasons)


# -- extraction flow ----------------------------------------------------------


def test_extract_without_fragments_is_non_extractable():
    record = make_record(["just prose"], [])
    result = extract_raw_poc(record, ScriptedClient(), seeded_library())
    assert result.poc is None
    assert result.rounds == 0
    assert "no PoC-like fragments" in result.non_extractable.reason


def test_extract_accepts_clean_first_try_and_maps_provenance():
    record = grounded_record()
    client = ScriptedClient(
        {
            "default": (
                "STATEMENTS:\n"
                "CREATE TABLE t1 (c1 INT);\n"
                "INSERT INTO t1 VALUES (1);\n"
                "SELECT c1 FROM t1;\n"
                "SELECT c1 + 0 FROM t1;"
            )
        }
    )
    result = extract_raw_poc(record, client, seeded_library())
    assert result.poc is not None
    assert result.rounds == 1
    assert result.clean_first_try
    assert result.poc.provenance[0] == 0
    assert result.poc.provenance[3] == MODEL_INFERRED


def test_extract_honors_model_decline():
    record = make_record(
        ["SELECT version();"],
        [block_fragment(["SELECT version();"])],
    )
    client = ScriptedClient({"default": "NON_EXTRACTABLE: only a version probe, no failure"})
    result = extract_raw_poc(record, client, seeded_library())
    assert result.poc is None
    assert result.non_extractable.reason == "only a version probe, no failure"


def test_extract_expands_context_on_insufficient_context():
    body = [
        "the t1 table was created earlier with CREATE TABLE t1 (c1 INT)",
        "",
        "SELECT c1 FROM t1;",
    ]
    record = make_record(body, [block_fragment(["SELECT c1 FROM t1;"], start=2)])
    client = ScriptedClient(
        {
            "by_pattern": [
                {
                    "pattern": r"Report: mysql-1\b",
                    "responses": [
                        "INSUFFICIENT_CONTEXT",
                        "STATEMENTS:\nCREATE TABLE t1 (c1 INT);\nSELECT c1 FROM t1;",
                    ],
                }
            ]
        }
    )
    result = extract_raw_poc(record, client, seeded_library())
    assert result.poc is not None
    assert result.rounds == 2
    assert not result.clean_first_try
    # the second prompt actually carried the surrounding body lines
    second_prompt = client.call_history[-1]["messages"][-1]["content"]
    assert "the t1 table was created earlier" in second_prompt


def test_extract_retries_after_self_exam_rejection():
    record = grounded_record()
    client = ScriptedClient(
        {
            "by_pattern": [
                {
                    "pattern": r"failed verification",
                    "responses": ["STATEMENTS:\nSELECT c1 FROM t1;"],
                },
                {
                    "pattern": r"Report: mysql-1\b",
                    "responses": ["STATEMENTS:\nSELECT c1 FROM ghost_table;"],
                },
            ]
        }
    )
    result = extract_raw_poc(record, client, seeded_library())
    assert result.poc is not None
    assert result.rounds == 2
    assert not result.clean_first_try
    assert result.poc.statements == ["SELECT c1 FROM t1"]


def test_extract_gives_up_when_budget_is_exhausted():
    record = grounded_record()
    client = ScriptedClient({"default": "STATEMENTS:\nSELECT c1 FROM ghost_table;"})
    result = extract_raw_poc(record, client, seeded_library(), ExtractionBudget(max_rounds=2))
    assert result.poc is None
    assert result.rounds == 2
    assert "extraction budget exhausted" in result.non_extractable.reason
    assert "ghost_table" in result.non_extractable.reason


def test_extract_mines_expected_behavior_from_rules():
    body = [
        "CREATE TABLE t1 (c1 INT);",
        "SELECT c1 FROM t1;",
        "ERROR 2027 (HY000): Malformed packet",
    ]
    record = make_record(body, [block_fragment(body[:2])])
    client = ScriptedClient(
        {"default": "STATEMENTS:\nCREATE TABLE t1 (c1 INT);\nSELECT c1 FROM t1;"}
    )
    result = extract_raw_poc(record, client, seeded_library())
    assert result.poc.expected_behavior == "ERROR 2027 (HY000): Malformed packet"
    assert result.poc.expected_source == "rules"


def test_extract_accepts_model_expected_only_when_grounded():
    body = ["CREATE TABLE t1 (c1 INT);", "SELECT c1 FROM t1;", "the reply packet is malformed"]
    record = make_record(body, [block_fragment(body[:2])])
    reply = (
        "STATEMENTS:\n"
        "CREATE TABLE t1 (c1 INT);\n"
        "SELECT c1 FROM t1;\n"
        "EXPECTED: the reply packet is malformed"
    )
    result = extract_raw_poc(record, ScriptedClient({"default": reply}), seeded_library())
    assert result.poc.expected_behavior == "the reply packet is malformed"
    assert result.poc.expected_source == "model"

    invented = reply.replace("the reply packet is malformed", "ERROR 9999 invented")
    result = extract_raw_poc(record, ScriptedClient({"default": invented}), seeded_library())
    assert result.poc.expected_behavior is None
    assert result.poc.expected_source == "none"


# -- library promotion --------------------------------------------------------


def test_promote_exemplar_adds_clean_first_try_extractions():
    record = grounded_record()
    client = ScriptedClient({"default": "STATEMENTS:\nSELECT c1 FROM t1;"})
    library = seeded_library()
    before = len(library)
    result = extract_raw_poc(record, client, library)
    exemplar = promote_exemplar(record, result, library)
    assert exemplar is not None
    assert exemplar.polarity is Polarity.POSITIVE
    assert exemplar.raw_poc.statements == ["SELECT c1 FROM t1"]
    assert len(library) == before + 1
    assert library.get(exemplar.id) is exemplar


def test_promote_exemplar_skips_repaired_extractions():
    record = grounded_record()
    client = ScriptedClient(
        {
            "by_pattern": [
                {"pattern": r"failed verification", "responses": ["STATEMENTS:\nSELECT c1 FROM t1;"]},
                {"pattern": r"Report: mysql-1\b", "responses": ["STATEMENTS:\nSELECT c1 FROM nope;"]},
            ]
        }
    )
    library = seeded_library()
    result = extract_raw_poc(record, client, library)
    assert result.poc is not None
    assert promote_exemplar(record, result, library) is None
