"""Manual smoke run of the replay campaigns on the fixture scenarios."""

from pocmill.campaigns import (
    ReplayBackend,
    cross_replay,
    crash_signature,
    dedupe_findings,
    dialect_compatible,
    regression_replay,
)
from pocmill.harness import FakeBackend
from pocmill.models import (
    ConstraintReport,
    Expectation,
    ExpectationKind,
    ReportStatus,
    RiskClass,
    RiskLevel,
    TestCase,
    Verdict,
)

PASSING = ConstraintReport(
    anchor_match={"required": [], "present": [], "pass": True},
    key_coverage={"required": {}, "present": {}, "pass": True},
    rewrite_bound={"distance": 0.0, "beta": 0.4, "pass": True},
    overall=True,
)


def make_case(report_id, statements, symptom):
    return TestCase(
        statements=statements,
        origin_report_id=report_id,
        expectation=Expectation(kind=ExpectationKind.EXPECT_BUG, symptom=symptom),
        constraint_report=PASSING,
        risk_tier=RiskClass(value=RiskLevel.LOW, triggering_statements=[]),
    )


# Scenario 1: GROUP BY + ANY comparison crashes the latest build and the
# build the fix shipped in, so the fix regressed.
monet_case = make_case(
    "monetdb-7387",
    [
        "CREATE TABLE t0 (c0 INT)",
        "INSERT INTO t0 VALUES (1), (2)",
        "SELECT c0 FROM t0 GROUP BY c0 HAVING c0 > ANY (SELECT 1)",
    ],
    "server crash (assertion failure)",
)

crash_rule = {
    "match": r"group\s+by.*any",
    "result": {
        "status": "crash",
        "signal": 6,
        "frames": [
            "#0 0x00007f3b in exps_any_push_down (sql=0x55a1) at rel_optimizer.c:4413",
            "#1 0x00007f3c in rel_optimize (sql=0x55a1) at rel_optimizer.c:9200",
            "#2 0x00007f3d in SQLoptimize (c=0x55a2) at sql_gencode.c:101",
        ],
    },
}

latest = FakeBackend("monetdb-latest", {"backend_version": "11.47.0", "rules": [crash_rule]}, dialect="monetdb")
fixed = FakeBackend("monetdb-fixed", {"backend_version": "11.45.0", "rules": [crash_rule]}, dialect="monetdb")
clean = FakeBackend("monetdb-old", {"backend_version": "11.43.0"}, dialect="monetdb")
for b in (latest, fixed, clean):
    b.provision()

findings = regression_replay(
    [(monet_case, ReportStatus.FIXED)],
    [
        ReplayBackend(latest, frozenset({"latest"})),
        ReplayBackend(fixed, frozenset({"fixed"})),
        ReplayBackend(clean, frozenset()),
    ],
)
for f in findings:
    print(f.replay_backend, f.verdict.value, f.signature, f.notes)
assert [f.verdict for f in findings] == [Verdict.REGRESSION, Verdict.REGRESSION, Verdict.STILL_FIXED]
assert findings[0].signature.startswith("crash:exps_any_push_down|rel_optimize|SQLoptimize")

# Scenario 2: reproduces on latest only -> inconclusive, not a regression.
latest2 = FakeBackend("m-latest", {"backend_version": "11.47.0", "rules": [crash_rule]}, dialect="monetdb")
fixed2 = FakeBackend("m-fixed", {"backend_version": "11.45.0"}, dialect="monetdb")
latest2.provision()
fixed2.provision()
findings2 = regression_replay(
    [(monet_case, ReportStatus.FIXED)],
    [ReplayBackend(latest2, frozenset({"latest"})), ReplayBackend(fixed2, frozenset({"fixed"}))],
)
for f in findings2:
    print(f.replay_backend, f.verdict.value, f.notes)
assert findings2[0].verdict is Verdict.INCONCLUSIVE
assert findings2[0].notes == "not_reproduced_on_fixed_version"
assert findings2[1].verdict is Verdict.STILL_FIXED

# Scenario 3: trigger-on-view case replayed cross-engine crashes -> cross_hit.
maria_case = make_case(
    "mariadb-20661",
    [
        "CREATE TABLE t1 (a INT)",
        "CREATE VIEW v1 AS SELECT a FROM t1",
        "CREATE TRIGGER tr1 AFTER INSERT ON t1 FOR EACH ROW INSERT INTO v1 VALUES (1)",
        "DROP VIEW v1",
        "CREATE TABLE v1 (a INT)",
        "INSERT INTO t1 VALUES (1)",
    ],
    "server crash on trigger fire",
)
mysql_fake = FakeBackend(
    "mysql-sibling",
    {
        "backend_version": "8.0.23",
        "rules": [
            {
                "match": r"insert\s+into\s+t1",
                "requires_prior": r"create\s+table\s+v1",
                "result": {
                    "status": "crash",
                    "signal": 11,
                    "frames": ["#0 0x0000564 in Table_trigger_dispatcher::process_triggers () at trigger.cc:510"],
                },
            }
        ],
    },
    dialect="mysql",
)
mysql_fake.provision()
cross = cross_replay([maria_case], "mariadb", mysql_fake)
print(cross[0].verdict.value, cross[0].signature)
assert cross[0].verdict is Verdict.CROSS_HIT
assert cross[0].signature.startswith("crash:Table_trigger_dispatcher")

# Scenario 4: VACUUM is not a MySQL statement -> dialect mismatch.
pg_case = make_case("postgresql-99", ["CREATE TABLE t2 (x INT)", "VACUUM t2"], "ERROR XX001: data corruption")
assert dialect_compatible(pg_case.statements, "postgresql")
assert not dialect_compatible(pg_case.statements, "mysql")
mysql_fake2 = FakeBackend("mysql-sibling-2", {}, dialect="mysql")
mysql_fake2.provision()
cross2 = cross_replay([pg_case], "postgresql", mysql_fake2)
print(cross2[0].verdict.value, cross2[0].notes)
assert cross2[0].verdict is Verdict.INCONCLUSIVE and cross2[0].notes == "dialect_mismatch"

# Dedupe: the two regression crashes share a signature.
groups = dedupe_findings(findings)
sig_groups = [g for g in groups if g.signature.startswith("crash:")]
assert len(sig_groups) == 1 and sig_groups[0].count == 2
print("groups:", [(g.signature, g.count) for g in groups])
print("OK")
