"""Manual smoke run of the adaptation loop on the binary-log scenario."""

import json

from pocmill.adapter import KnowledgeBase, adapt, classify_execution
from pocmill.harness import FakeBackend
from pocmill.models import (
    CaptureStage,
    ExpectationKind,
    Fragment,
    RawPoC,
)
from pocmill.textgen import ScriptedClient

PROGRAM = {
    "version": "fake-program-1",
    "backend_version": "8.0.23",
    "rules": [
        {
            "match": r"create\s+function\s+f1",
            "unless_global": {"var": "log_bin_trust_function_creators", "value": "1"},
            "result": {
                "status": "error",
                "code": "1418",
                "message": (
                    "This function has none of DETERMINISTIC, NO SQL, or READS SQL "
                    "DATA in its declaration and binary logging is enabled"
                ),
            },
        },
        {
            "match": r"select\s+f1\s*\(\s*\)",
            "requires_prior": r"create\s+function\s+f1",
            "result": {"status": "error", "code": "2027", "message": "Malformed packet"},
        },
    ],
    "default": {"status": "ok"},
}

STATEMENTS = [
    "CREATE TABLE t1 (c1 INT)",
    "INSERT INTO t1 VALUES (1)",
    "CREATE FUNCTION f1() RETURNS INT RETURN (SELECT c1 FROM t1 LIMIT 1)",
    "SELECT f1()",
]

REPAIRED = (
    "STATEMENTS:\n"
    "SET GLOBAL log_bin_trust_function_creators=1;\n"
    + ";\n".join(STATEMENTS)
    + ";\n"
)

poc = RawPoC(
    report_id="mysql-102205",
    statements=list(STATEMENTS),
    provenance={i: 0 for i in range(len(STATEMENTS))},
    expected_behavior="ERROR 2027 (HY000): Malformed packet",
    expected_source="rule",
)

backend = FakeBackend("mysql-fake", PROGRAM, dialect="mysql")
backend.provision()

client = ScriptedClient({"by_pattern": [{"pattern": r"\b1418\b", "response": REPAIRED}]})
kb = KnowledgeBase.for_dbms("mysql")
result = adapt(poc, backend, client, kb=kb)

assert result.case is not None, result.failure
case = result.case
print("iterations:", result.iterations)
print("expectation:", case.expectation.kind.value, "|", case.expectation.symptom)
print("first statement:", case.statements[0])
print("constraints pass:", case.constraint_report.overall)
print("repairs:", [(r.adopted, r.diagnosis.category.value, r.diagnosis.matched_rule) for r in case.adaptation_log])
print("risk tier:", case.risk_tier.value.value)
assert result.iterations <= 3
assert case.expectation.kind is ExpectationKind.EXPECT_BUG
assert "2027" in case.expectation.symptom
assert case.statements[0].lower().startswith("set global log_bin_trust_function_creators")
assert case.constraint_report.overall

# isolation: the adopted script touched a global, cleanup must restore it
assert backend.observable_state() == backend.post_provision_state(), backend.observable_state()
print("post-run state restored:", True)
print("OK")
