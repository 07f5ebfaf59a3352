"""Execution classification, diagnosis rules, and the adaptation loop."""

from __future__ import annotations

import re

import pytest

from pocmill.adapter import (
    KnowledgeBase,
    adapt,
    classify_execution,
    diagnose,
    repair_step,
    strategy_report,
    symptom_matches,
)
from pocmill.errors import UnparseableRepair
from pocmill.harness import FakeBackend
from pocmill.models import (
    MODEL_INFERRED,
    Diagnosis,
    DiagnosisCategory,
    ExecutionClassValue,
    ExecutionOutcome,
    ExpectationKind,
    OutcomeKind,
    RawPoC,
)
from pocmill.textgen import ScriptedClient


def outcome(
    kind: OutcomeKind,
    code: str | None = None,
    message: str | None = None,
) -> ExecutionOutcome:
    return ExecutionOutcome(
        kind=kind,
        statement_results=[],
        duration=0.01,
        backend_id="fake-1",
        backend_version="fake-0",
        code=code,
        message=message,
        timeout_limit=5.0 if kind is OutcomeKind.TIMEOUT else None,
    )


def make_poc(statements: list[str], expected: str | None = None, rid: str = "r-1") -> RawPoC:
    return RawPoC(
        statements=statements,
        report_id=rid,
        provenance={i: MODEL_INFERRED for i in range(len(statements))},
        expected_behavior=expected,
        expected_source="rules" if expected else "none",
    )


def fresh_backend(program: dict | None = None, dialect: str = "generic") -> FakeBackend:
    backend = FakeBackend("fake-1", program, dialect=dialect)
    backend.provision()
    return backend


# -- symptom matching ---------------------------------------------------------


def test_symptom_matches_on_error_code_word():
    got = outcome(OutcomeKind.ERROR, code="2027", message="Malformed packet")
    assert symptom_matches("ERROR 2027 (HY000): Malformed packet", got)


def test_symptom_matches_on_message_substring():
    got = outcome(OutcomeKind.ERROR, code=None, message="Malformed packet")
    assert symptom_matches("the client prints: malformed packet", got)


def test_symptom_matches_on_mutual_containment():
    got = outcome(OutcomeKind.ERROR, code="1064", message="syntax error near 'FROM'")
    assert symptom_matches("error 1064 syntax error near 'FROM' and then exits", got)


def test_symptom_matches_rejects_unrelated_errors():
    got = outcome(OutcomeKind.ERROR, code="1146", message="Table 't9' doesn't exist")
    assert not symptom_matches("ERROR 2027 (HY000): Malformed packet", got)
    assert not symptom_matches(None, got)
    assert not symptom_matches("   ", got)


def test_short_codes_do_not_match_as_words():
    got = outcome(OutcomeKind.ERROR, code="1", message="boom")
    assert not symptom_matches("section 1 of the manual", got)


# -- execution classification --------------------------------------------------


@pytest.mark.parametrize(
    "kind",
    [OutcomeKind.CRASH, OutcomeKind.TIMEOUT, OutcomeKind.CONNECTION_LOST],
)
def test_hard_failures_classify_as_bug_triggering(kind):
    cls = classify_execution(outcome(kind), expected_behavior=None)
    assert cls.value is ExecutionClassValue.BUG_TRIGGERING


def test_matching_error_is_bug_triggering():
    got = outcome(OutcomeKind.ERROR, code="2027", message="Malformed packet")
    cls = classify_execution(got, "ERROR 2027 (HY000): Malformed packet")
    assert cls.value is ExecutionClassValue.BUG_TRIGGERING


def test_unmatched_error_is_problematic():
    got = outcome(OutcomeKind.ERROR, code="1146", message="Table 't9' doesn't exist")
    assert classify_execution(got, "ERROR 2027").value is ExecutionClassValue.PROBLEMATIC
    assert classify_execution(got, None).value is ExecutionClassValue.PROBLEMATIC


def test_clean_run_is_pending():
    assert classify_execution(outcome(OutcomeKind.CLEAN), None).value is (
        ExecutionClassValue.PENDING
    )


# -- knowledge base -----------------------------------------------------------


KB_TEXT = """
# comment lines and blanks are skipped

syntax error|near|unexpected token | syntax | quote the offending identifier
unknown variable|unrecognized configuration parameter | configuration | set or rename the variable
doesn't exist|not found | semantic | create the missing object first
"""


def test_kb_parse_splits_on_rightmost_pipes():
    kb = KnowledgeBase.parse(KB_TEXT, table_name="demo")
    assert len(kb.rules) == 3
    pattern, category, guidance, rule_id = kb.rules[0]
    assert pattern == "syntax error|near|unexpected token"
    assert category is DiagnosisCategory.SYNTAX
    assert guidance == "quote the offending identifier"
    assert rule_id == "demo#4"


def test_kb_parse_rejects_malformed_lines():
    with pytest.raises(ValueError):
        KnowledgeBase.parse("just one field")
    with pytest.raises(ValueError):
        KnowledgeBase.parse("pattern | not-a-category | guidance")
    with pytest.raises(re.error):
        KnowledgeBase.parse("([unclosed | syntax | guidance")


def test_kb_diagnose_prefers_syntax_over_semantic():
    kb = KnowledgeBase.parse(
        "boom | semantic | semantic route\nboom | syntax | syntax route"
    )
    diagnosis = kb.diagnose("ERROR 1064: boom")
    assert diagnosis.category is DiagnosisCategory.SYNTAX
    assert diagnosis.guidance == "syntax route"


def test_kb_diagnose_unknown_keeps_feedback_verbatim():
    kb = KnowledgeBase.parse(KB_TEXT)
    diagnosis = diagnose("ERROR 9999: unheard-of failure", kb)
    assert diagnosis.category is DiagnosisCategory.UNKNOWN
    assert diagnosis.raw_feedback == "ERROR 9999: unheard-of failure"
    assert diagnosis.matched_rule is None


def test_kb_for_dbms_falls_back_to_generic():
    named = KnowledgeBase.for_dbms("mysql")
    fallback = KnowledgeBase.for_dbms("no-such-engine")
    assert named.rules
    assert fallback.rules
    assert fallback.rules[0][3].startswith("generic#")


# -- repair step --------------------------------------------------------------


def blind_diagnosis(feedback: str = "ERROR 1146: Table 't9' doesn't exist") -> Diagnosis:
    return Diagnosis(category=DiagnosisCategory.SEMANTIC, raw_feedback=feedback)


def test_repair_step_parses_statements_and_renames():
    client = ScriptedClient(
        {
            "default": (
                "STATEMENTS:\n"
                "RENAME: t9 -> t10\n"
                "CREATE TABLE t10 (a INT);\n"
                "SELECT a FROM t10;"
            )
        }
    )
    candidate = repair_step(["SELECT a FROM t9"], blind_diagnosis(), client)
    assert candidate.statements == ["CREATE TABLE t10 (a INT)", "SELECT a FROM t10"]
    assert candidate.renames == {"t9": "t10"}


def test_repair_step_retries_free_text_once():
    client = ScriptedClient(
        {
            "by_pattern": [
                {
                    "pattern": r"did not follow the required format",
                    "responses": ["STATEMENTS:\nSELECT 1;"],
                },
                {"pattern": r"Current statements", "responses": ["I думаю you should add a table."]},
            ]
        }
    )
    candidate = repair_step(["SELECT 1"], blind_diagnosis(), client)
    assert candidate.statements == ["SELECT 1"]
    assert len(client.call_history) == 2


def test_repair_step_raises_after_two_unusable_answers():
    client = ScriptedClient({"default": "cannot help with that"})
    with pytest.raises(UnparseableRepair, match="unusable after retry"):
        repair_step(["SELECT 1"], blind_diagnosis(), client)


def test_repair_step_rejects_decline_envelopes():
    client = ScriptedClient({"default": "NON_EXTRACTABLE: nothing to repair"})
    with pytest.raises(UnparseableRepair, match="expected statements"):
        repair_step(["SELECT 1"], blind_diagnosis(), client)


def test_repair_prompt_carries_diagnosis_and_origin():
    client = ScriptedClient({"default": "STATEMENTS:\nSELECT 1;"})
    repair_step(
        ["SELECT 1"],
        Diagnosis(
            category=DiagnosisCategory.CONFIGURATION,
            raw_feedback="ERROR 1418",
            guidance="enable the trust flag",
        ),
        client,
        origin="mysql-7",
    )
    prompt = client.call_history[0]["messages"][-1]["content"]
    assert "Origin report: mysql-7" in prompt
    assert "Diagnosis: configuration" in prompt
    assert "Guidance: enable the trust flag" in prompt
    assert "Feedback: ERROR 1418" in prompt


# -- adaptation loop ----------------------------------------------------------


FUNCTION_POC_STATEMENTS = [
    "CREATE TABLE t1 (c1 INT)",
    "INSERT INTO t1 VALUES (1)",
    "CREATE FUNCTION f1() RETURNS INT RETURN (SELECT c1 FROM t1 LIMIT 1)",
    "SELECT f1()",
]

FUNCTION_PROGRAM = {
    "rules": [
        {
            "match": r"create\s+function\s+f1",
            "unless_global": {"var": "log_bin_trust_function_creators", "value": "1"},
            "result": {
                "status": "error",
                "code": "1418",
                "message": "This function has none of DETERMINISTIC, NO SQL",
            },
        },
        {
            "match": r"select\s+f1\(\)",
            "requires_global": {"var": "log_bin_trust_function_creators", "value": "1"},
            "result": {"status": "error", "code": "2027", "message": "Malformed packet"},
        },
    ]
}

FUNCTION_REPAIR = (
    "STATEMENTS:\n"
    "SET GLOBAL log_bin_trust_function_creators = 1;\n"
    "CREATE TABLE t1 (c1 INT);\n"
    "INSERT INTO t1 VALUES (1);\n"
    "CREATE FUNCTION f1() RETURNS INT RETURN (SELECT c1 FROM t1 LIMIT 1);\n"
    "SELECT f1();"
)


def test_adapt_converges_on_configuration_repair():
    poc = make_poc(FUNCTION_POC_STATEMENTS, "ERROR 2027 (HY000): Malformed packet")
    client = ScriptedClient({"default": FUNCTION_REPAIR})
    result = adapt(poc, fresh_backend(FUNCTION_PROGRAM), client)
    assert result.failure is None
    assert result.iterations == 2
    case = result.case
    assert "SET GLOBAL log_bin_trust_function_creators = 1" in case.statements
    assert case.expectation.kind is ExpectationKind.EXPECT_BUG
    assert "ERROR 2027" in case.expectation.symptom
    assert case.constraint_report.overall
    assert [r.adopted for r in case.adaptation_log] == [True]


def test_adapt_accepts_clean_outcome_as_expect_clean():
    poc = make_poc(["CREATE TABLE t1 (a INT)", "SELECT a FROM t1"])
    result = adapt(poc, fresh_backend(), ScriptedClient())
    assert result.failure is None
    assert result.iterations == 1
    assert result.case.expectation.kind is ExpectationKind.EXPECT_CLEAN
    assert result.case.adaptation_log == []


def test_adapt_gate_rejects_then_reprompts_successfully():
    poc = make_poc(FUNCTION_POC_STATEMENTS, "ERROR 2027 (HY000): Malformed packet")
    client = ScriptedClient(
        {
            "by_pattern": [
                {
                    "pattern": r"violated the preservation constraints",
                    "responses": [FUNCTION_REPAIR],
                },
                {"pattern": r"Origin report: r-1\b", "responses": ["STATEMENTS:\nSELECT 1;"]},
            ]
        }
    )
    result = adapt(poc, fresh_backend(FUNCTION_PROGRAM), client)
    assert result.failure is None
    assert result.case.expectation.kind is ExpectationKind.EXPECT_BUG
    reprompt = client.call_history[1]["messages"][-1]["content"]
    assert "violated the preservation constraints" in reprompt
    assert "anchor_match" in reprompt


def test_adapt_logs_rejected_repairs_and_fails_closed():
    poc = make_poc(FUNCTION_POC_STATEMENTS, "ERROR 2027 (HY000): Malformed packet")
    client = ScriptedClient({"default": "STATEMENTS:\nSELECT 1;"})
    result = adapt(poc, fresh_backend(FUNCTION_PROGRAM), client, max_iters=2)
    assert result.case is None
    failure = result.failure
    assert failure.iterations == 2
    assert "no acceptable outcome within 2 iterations" in failure.reason
    assert failure.adaptation_log
    assert all(not r.adopted for r in failure.adaptation_log)
    assert all(r.violations for r in failure.adaptation_log)


def test_adapt_fails_on_unusable_repair_answers():
    poc = make_poc(FUNCTION_POC_STATEMENTS, "ERROR 2027 (HY000): Malformed packet")
    client = ScriptedClient({"default": "sorry, no idea"})
    result = adapt(poc, fresh_backend(FUNCTION_PROGRAM), client)
    assert result.case is None
    assert "unusable after retry" in result.failure.reason
    assert result.failure.iterations == 1


def test_adapt_merges_declared_renames_into_the_gate():
    program = {
        "rules": [
            {
                "match": r"set\s+enable_frobnicate",
                "result": {
                    "status": "error",
                    "code": "42704",
                    "message": 'unrecognized configuration parameter "enable_frobnicate"',
                },
            }
        ]
    }
    poc = make_poc(
        ["SET enable_frobnicate = on", "CREATE TABLE t2 (a INT)", "SELECT a FROM t2"]
    )
    client = ScriptedClient(
        {
            "default": (
                "STATEMENTS:\n"
                "RENAME: enable_frobnicate -> enable_seqscan\n"
                "SET enable_seqscan = on;\n"
                "CREATE TABLE t2 (a INT);\n"
                "SELECT a FROM t2;"
            )
        }
    )
    result = adapt(poc, fresh_backend(program), client)
    assert result.failure is None
    assert result.case.statements[0] == "SET enable_seqscan = on"
    assert result.case.constraint_report.overall
    assert result.case.adaptation_log[0].renames == {"enable_frobnicate": "enable_seqscan"}


# -- strategy comparison -------------------------------------------------------


def test_strategy_report_validates_inputs():
    backend = fresh_backend()
    with pytest.raises(ValueError, match="unknown strategy mode"):
        strategy_report([make_poc(["SELECT 1"])], "Q", backend, ScriptedClient())
    with pytest.raises(ValueError, match="non-empty sample"):
        strategy_report([], "F", backend, ScriptedClient())


def test_single_pass_prompt_withholds_execution_feedback():
    program = {
        "rules": [
            {"match": r"select\s+broken", "result": {"status": "error", "code": "1064", "message": "syntax"}}
        ]
    }
    client = ScriptedClient({"default": "STATEMENTS:\nSELECT broken;"})
    poc = make_poc(["SELECT broken"])
    strategy_report([poc], "S", fresh_backend(program), client)
    prompt = client.call_history[0]["messages"][-1]["content"]
    assert "execution feedback withheld" in prompt
    assert "1064" not in prompt


def test_feedback_prompt_carries_real_diagnosis():
    program = {
        "rules": [
            {"match": r"select\s+broken", "result": {"status": "error", "code": "1064", "message": "syntax"}}
        ]
    }
    client = ScriptedClient({"default": "STATEMENTS:\nSELECT broken;"})
    poc = make_poc(["SELECT broken"])
    strategy_report([poc], "F", fresh_backend(program), client, max_iters=1)
    prompt = client.call_history[0]["messages"][-1]["content"]
    assert "ERROR 1064" in prompt


def test_strategy_report_rates_reflect_final_outcomes():
    # one PoC that crashes outright (bug class), one that keeps erroring
    program = {
        "rules": [
            {"match": r"select\s+crash", "result": {"status": "crash", "signal": 11}},
            {"match": r"select\s+broken", "result": {"status": "error", "code": "1064", "message": "syntax"}},
        ]
    }
    pocs = [make_poc(["SELECT crash"], rid="p-1"), make_poc(["SELECT broken"], rid="p-2")]
    client = ScriptedClient({"default": "STATEMENTS:\nSELECT broken;"})
    report = strategy_report(pocs, "F+S", fresh_backend(program), client)
    assert report["mode"] == "F+S"
    assert report["cases"] == 2
    assert report["executable_rate"] == 0.5
    assert report["richness_rate"] == 1.0
