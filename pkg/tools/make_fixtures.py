"""Generate the checked-in test fixtures.

Writes, under tests/fixtures/:
- reports/            20 bug-report payloads across four engines
- backends/           fake-backend programs for those engines
- client_script.json  scripted text-gen responses (extraction + repair)
- pocmill.yaml        pipeline config wiring it together
- fragmenter/suite.json   30 synthetic reports with planted ground truth
- strategy/           12-case sample, backend program and client script

Deterministic by construction: fixed strings and a seeded RNG only.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"


def dump(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", "utf-8")


# ----------------------------------------------------------------------
# The 20-report fixture corpus.
#
# Outcome plan (realizing corpus stats 20 reports / 18 raw PoCs / 15 cases):
#   adapted (15): mysql-102205, mysql-98123, mysql-99877, mysql-101440,
#     mariadb-20661, mariadb-19812, mariadb-22107, postgresql-16889,
#     postgresql-17231, postgresql-17544, postgresql-16440, monetdb-7387,
#     monetdb-7156, monetdb-7022, monetdb-7280
#   adaptation_failed (3): mysql-103311 (repairs adopted, never effective),
#     mariadb-21005 (unparseable repair), postgresql-18001 (repairs gated out)
#   non_extractable (2): mysql-100021 (model declines),
#     postgresql-15777 (no fragments at all)
# ----------------------------------------------------------------------

REPORTS = [
    {
        "id": "mysql-102205",
        "dbms": "mysql",
        "title": "Malformed packet error after invoking a stored function",
        "status": "confirmed",
        "versions": ["8.0.23"],
        "created_at": "2021-01-12T08:30:00Z",
        "last_modified": "2021-02-02T16:45:00Z",
        "body": [
            "Calling a stored function right after creating it kills the client with a packet error.",
            "How to repeat:",
            "```",
            "CREATE TABLE t1 (c1 INT);",
            "INSERT INTO t1 VALUES (1);",
            "CREATE FUNCTION f1() RETURNS INT RETURN (SELECT c1 FROM t1 LIMIT 1);",
            "SELECT f1();",
            "```",
            "On 8.0.23 with the binary log enabled the final SELECT fails:",
            "",
            "ERROR 2027 (HY000): Malformed packet",
            "The function itself was created on the primary without errors.",
            "Suggested fix: none yet, the packet layout is under investigation.",
            "(filed from the replication test harness)",
        ],
        "statements": [
            "CREATE TABLE t1 (c1 INT)",
            "INSERT INTO t1 VALUES (1)",
            "CREATE FUNCTION f1() RETURNS INT RETURN (SELECT c1 FROM t1 LIMIT 1)",
            "SELECT f1()",
        ],
    },
    {
        "id": "mysql-98123",
        "dbms": "mysql",
        "title": "Equality filter returns non-matching rows under ORDER BY",
        "status": "confirmed",
        "versions": ["8.0.19"],
        "created_at": "2020-01-07T10:00:00Z",
        "last_modified": "2020-01-21T09:12:00Z",
        "body": [
            "A simple equality predicate brings back rows it should not.",
            "```",
            "CREATE TABLE w1 (s VARCHAR(10));",
            "INSERT INTO w1 VALUES ('a'), ('B');",
            "SELECT s FROM w1 WHERE s = 'a' ORDER BY s;",
            "```",
            "wrong result: both rows come back although only one matches",
        ],
        "statements": [
            "CREATE TABLE w1 (s VARCHAR(10))",
            "INSERT INTO w1 VALUES ('a'), ('B')",
            "SELECT s FROM w1 WHERE s = 'a' ORDER BY s",
        ],
    },
    {
        "id": "mysql-99877",
        "dbms": "mysql",
        "title": "Window aggregate over two columns brings the server down",
        "status": "fixed",
        "versions": ["8.0.21"],
        "created_at": "2020-06-15T14:20:00Z",
        "last_modified": "2020-09-01T11:00:00Z",
        "body": [
            "After we run CREATE TABLE win1 (a INT, b INT); and then INSERT INTO win1 VALUES (1, 2); the data is in place.",
            "Running SELECT a, SUM(b) OVER (ORDER BY a) FROM win1; reproduces it every time, the server crashed on each attempt.",
            "Stack from the error log:",
            "#0 0x0000561f in Item_sum_sum::val_real () at item_sum.cc:1644",
            "#1 0x0000561f in Window_frame::evaluate () at window.cc:233",
            "Thread 7 received signal SIGSEGV.",
        ],
        "statements": [
            "CREATE TABLE win1 (a INT, b INT)",
            "INSERT INTO win1 VALUES (1, 2)",
            "SELECT a, SUM(b) OVER (ORDER BY a) FROM win1",
        ],
    },
    {
        "id": "mysql-101440",
        "dbms": "mysql",
        "title": "COUNT over freshly loaded rows fails on a restored replica",
        "status": "confirmed",
        "versions": ["8.0.22"],
        "created_at": "2020-11-02T09:05:00Z",
        "last_modified": "2020-11-19T17:40:00Z",
        "body": [
            "Our replay tooling captured only the tail of the session:",
            "```",
            "INSERT INTO t3 VALUES (1), (2);",
            "SELECT COUNT(*) FROM t3 WHERE id > 0;",
            "```",
            "The table t3 was created as CREATE TABLE t3 (id INT); in an earlier session on the primary.",
            "On the restored replica the tail fails because the table is gone.",
        ],
        "statements": [
            "INSERT INTO t3 VALUES (1), (2)",
            "SELECT COUNT(*) FROM t3 WHERE id > 0",
        ],
    },
    {
        "id": "mysql-103311",
        "dbms": "mysql",
        "title": "JSON_TABLE with COLUMNS clause rejected on every 8.0.30 build",
        "status": "fixed",
        "versions": ["8.0.30"],
        "created_at": "2022-03-28T12:00:00Z",
        "last_modified": "2022-05-10T08:25:00Z",
        "body": [
            "The statement below is rejected although the manual says it is legal.",
            "```",
            "SELECT JSON_TABLE('[1]', '$[*]' COLUMNS (x INT PATH '$')) AS jt FROM DUAL;",
            "```",
            "We believe the parser rejection is itself the bug; the syntax follows the docs.",
        ],
        "statements": [
            "SELECT JSON_TABLE('[1]', '$[*]' COLUMNS (x INT PATH '$')) AS jt FROM DUAL",
        ],
    },
    {
        "id": "mysql-100021",
        "dbms": "mysql",
        "title": "Buffer pool sizing advice for write-heavy workloads",
        "status": "confirmed",
        "versions": ["8.0.20"],
        "created_at": "2020-08-09T07:45:00Z",
        "last_modified": "2020-08-11T19:30:00Z",
        "body": [
            "Not sure this is a bug; flush storms appear under write bursts.",
            "At startup we run:",
            "```",
            "SET GLOBAL innodb_buffer_pool_size=134217728;",
            "```",
            "Raising it helps for a while, then the storms return.",
            "Is there a recommended ratio between the pool and the redo log?",
        ],
        "statements": None,
    },
    {
        "id": "mariadb-20661",
        "dbms": "mariadb",
        "title": "Crash when a trigger references a view recreated as a table",
        "status": "fixed",
        "versions": ["10.5.9"],
        "created_at": "2021-04-18T13:10:00Z",
        "last_modified": "2021-07-30T10:55:00Z",
        "body": [
            "Recreating a referenced view as a base table confuses the trigger runtime.",
            "```",
            "CREATE TABLE t1 (a INT);",
            "CREATE VIEW v1 AS SELECT a FROM t1;",
            "CREATE TRIGGER tr1 AFTER INSERT ON t1 FOR EACH ROW INSERT INTO v1 VALUES (1);",
            "DROP VIEW v1;",
            "CREATE TABLE v1 (a INT);",
            "INSERT INTO t1 VALUES (1);",
            "```",
            "On 10.5.9 the server crashes in the trigger dispatcher on the final INSERT.",
        ],
        "statements": [
            "CREATE TABLE t1 (a INT)",
            "CREATE VIEW v1 AS SELECT a FROM t1",
            "CREATE TRIGGER tr1 AFTER INSERT ON t1 FOR EACH ROW INSERT INTO v1 VALUES (1)",
            "DROP VIEW v1",
            "CREATE TABLE v1 (a INT)",
            "INSERT INTO t1 VALUES (1)",
        ],
    },
    {
        "id": "mariadb-19812",
        "dbms": "mariadb",
        "title": "Indexed virtual column dies on first insert",
        "status": "fixed",
        "versions": ["10.4.11"],
        "created_at": "2019-12-20T15:35:00Z",
        "last_modified": "2020-03-14T12:00:00Z",
        "body": [
            "CREATE TABLE vc1 (a INT, b INT AS (a + 1) VIRTUAL, KEY (b)); is enough preparation.",
            "INSERT INTO vc1 (a) VALUES (1); kills the server with a segmentation fault in row_ins_index_entry.",
            "Removing the KEY makes the insert survive, so the index maintenance path is at fault.",
        ],
        "statements": [
            "CREATE TABLE vc1 (a INT, b INT AS (a + 1) VIRTUAL, KEY (b))",
            "INSERT INTO vc1 (a) VALUES (1)",
        ],
    },
    {
        "id": "mariadb-21005",
        "dbms": "mariadb",
        "title": "Updating the base column of a stored generated column misbehaves",
        "status": "fixed",
        "versions": ["10.5.12"],
        "created_at": "2021-09-02T11:25:00Z",
        "last_modified": "2021-10-08T14:50:00Z",
        "body": [
            "The update below reports a generated-column failure we do not understand.",
            "```",
            "CREATE TABLE g2 (a INT, b INT GENERATED ALWAYS AS (a * 2) STORED);",
            "UPDATE g2 SET a = 3;",
            "```",
            "The message mentions the generated column b although only a was written.",
        ],
        "statements": [
            "CREATE TABLE g2 (a INT, b INT GENERATED ALWAYS AS (a * 2) STORED)",
            "UPDATE g2 SET a = 3",
        ],
    },
    {
        "id": "mariadb-22107",
        "dbms": "mariadb",
        "title": "IN subquery over the same table duplicates rows",
        "status": "confirmed",
        "versions": ["10.6.4"],
        "created_at": "2022-01-25T09:55:00Z",
        "last_modified": "2022-02-03T18:05:00Z",
        "body": [
            "Our nightly job found that SELECT a FROM s1 WHERE a IN (SELECT a FROM s1); returns duplicates on 10.6.",
            "Setup is plain:",
            "```",
            "CREATE TABLE s1 (a INT);",
            "INSERT INTO s1 VALUES (1);",
            "```",
            "The duplicates disappear with the subquery materialization switched off.",
        ],
        "statements": [
            "CREATE TABLE s1 (a INT)",
            "INSERT INTO s1 VALUES (1)",
            "SELECT a FROM s1 WHERE a IN (SELECT a FROM s1)",
        ],
    },
    {
        "id": "postgresql-16889",
        "dbms": "postgresql",
        "title": "Parallel aggregate loses its connection on a fresh table",
        "status": "confirmed",
        "versions": ["13.1"],
        "created_at": "2021-02-11T16:40:00Z",
        "last_modified": "2021-02-24T10:15:00Z",
        "body": [
            "With parallel workers enabled the count below never finishes.",
            "```",
            "SET max_parallel_workers_per_gather = 2;",
            "CREATE TABLE p1 AS SELECT g AS x FROM generate_series(1, 100000) g;",
            "SELECT count(*) FROM p1 WHERE x % 3 = 0;",
            "```",
            "connection lost each time; the backend reports: server closed the connection unexpectedly",
        ],
        "statements": [
            "SET max_parallel_workers_per_gather = 2",
            "CREATE TABLE p1 AS SELECT g AS x FROM generate_series(1, 100000) g",
            "SELECT count(*) FROM p1 WHERE x % 3 = 0",
        ],
    },
    {
        "id": "postgresql-17231",
        "dbms": "postgresql",
        "title": "Read failure on a block that was never written",
        "status": "confirmed",
        "versions": ["13.4"],
        "created_at": "2021-08-19T08:05:00Z",
        "last_modified": "2021-09-12T13:30:00Z",
        "body": [
            "Our tooling always sets enable_frobnicate first; on stock builds the server answers:",
            "ERROR: unrecognized configuration parameter \"enable_frobnicate\"",
            "With that hurdle out of the way the scan itself dies:",
            "```",
            "SET enable_frobnicate = on;",
            "CREATE TABLE r1 (x INT);",
            "INSERT INTO r1 VALUES (1);",
            "SELECT x FROM r1 WHERE x > 0;",
            "```",
            "ERROR: could not read block 0 in file base/16384",
        ],
        "statements": [
            "SET enable_frobnicate = on",
            "CREATE TABLE r1 (x INT)",
            "INSERT INTO r1 VALUES (1)",
            "SELECT x FROM r1 WHERE x > 0",
        ],
        "expected_line": "ERROR: could not read block 0 in file base/16384",
    },
    {
        "id": "postgresql-17544",
        "dbms": "postgresql",
        "title": "Btree index makes a range scan skip a row",
        "status": "confirmed",
        "versions": ["14.0"],
        "created_at": "2021-11-30T12:45:00Z",
        "last_modified": "2021-12-15T09:20:00Z",
        "body": [
            "The same query answers differently with and without the index.",
            "```",
            "CREATE TABLE b1 (k INT);",
            "INSERT INTO b1 VALUES (1), (2), (3);",
            "CREATE INDEX i1 ON b1 (k);",
            "SELECT k FROM b1 WHERE k > 1 ORDER BY k;",
            "```",
            "wrong result: the row with k=2 is missing from the indexed scan",
        ],
        "statements": [
            "CREATE TABLE b1 (k INT)",
            "INSERT INTO b1 VALUES (1), (2), (3)",
            "CREATE INDEX i1 ON b1 (k)",
            "SELECT k FROM b1 WHERE k > 1 ORDER BY k",
        ],
    },
    {
        "id": "postgresql-18001",
        "dbms": "postgresql",
        "title": "Bulk copy between sibling tables stopped working after restore",
        "status": "fixed",
        "versions": ["14.2"],
        "created_at": "2022-02-14T10:30:00Z",
        "last_modified": "2022-04-01T15:10:00Z",
        "body": [
            "Since the restore the nightly copy step fails immediately.",
            "```",
            "INSERT INTO t9 SELECT * FROM t9_backup;",
            "```",
            "We lost the setup script for t9 and t9_backup, so we cannot say how they were defined.",
        ],
        "statements": [
            "INSERT INTO t9 SELECT * FROM t9_backup",
        ],
    },
    {
        "id": "postgresql-15777",
        "dbms": "postgresql",
        "title": "Replication lag climbs during autovacuum on the standby",
        "status": "confirmed",
        "versions": ["12.5"],
        "created_at": "2020-10-05T06:50:00Z",
        "last_modified": "2020-10-22T20:40:00Z",
        "body": [
            "Lag on the standby climbs whenever autovacuum wakes up on the primary.",
            "Nothing interesting in the logs on either side, just the lag graph.",
            "Happy to collect timing data if someone tells me which knobs matter.",
        ],
        "statements": None,
    },
    {
        "id": "postgresql-16440",
        "dbms": "postgresql",
        "title": "Bloat estimate stays high right after a manual vacuum",
        "status": "confirmed",
        "versions": ["14.1"],
        "created_at": "2021-05-27T14:15:00Z",
        "last_modified": "2021-06-10T11:35:00Z",
        "body": [
            "Even a fresh table shows the effect:",
            "```",
            "CREATE TABLE pv1 (x INT);",
            "INSERT INTO pv1 VALUES (1);",
            "VACUUM pv1;",
            "SELECT x FROM pv1;",
            "```",
            "After the vacuum the select is fine, but the bloat estimate never drops.",
        ],
        "statements": [
            "CREATE TABLE pv1 (x INT)",
            "INSERT INTO pv1 VALUES (1)",
            "VACUUM pv1",
            "SELECT x FROM pv1",
        ],
    },
    {
        "id": "monetdb-7387",
        "dbms": "monetdb",
        "title": "GROUP BY combined with an ANY comparison asserts in the optimizer",
        "status": "fixed",
        "versions": ["11.45.0"],
        "created_at": "2022-06-08T09:00:00Z",
        "last_modified": "2022-08-17T16:20:00Z",
        "body": [
            "Minimal script:",
            "```",
            "CREATE TABLE g1 (c0 INT);",
            "INSERT INTO g1 VALUES (1), (2);",
            "SELECT c0 FROM g1 GROUP BY c0 HAVING c0 > ANY (SELECT 1);",
            "```",
            "Assertion `!exps' failed at rel_optimizer.c:4413 on 11.45; marked fixed in 11.46.",
        ],
        "statements": [
            "CREATE TABLE g1 (c0 INT)",
            "INSERT INTO g1 VALUES (1), (2)",
            "SELECT c0 FROM g1 GROUP BY c0 HAVING c0 > ANY (SELECT 1)",
        ],
    },
    {
        "id": "monetdb-7156",
        "dbms": "monetdb",
        "title": "Added column reads stale defaults after an update",
        "status": "confirmed",
        "versions": ["11.43.5"],
        "created_at": "2022-02-01T10:10:00Z",
        "last_modified": "2022-02-18T12:30:00Z",
        "body": [
            "```",
            "CREATE TABLE a1 (x INT);",
            "INSERT INTO a1 VALUES (1);",
            "ALTER TABLE a1 ADD COLUMN y INT DEFAULT 0;",
            "UPDATE a1 SET y = 5 WHERE x = 1;",
            "SELECT y FROM a1;",
            "```",
            "wrong result: y still reads 0 after the update",
        ],
        "statements": [
            "CREATE TABLE a1 (x INT)",
            "INSERT INTO a1 VALUES (1)",
            "ALTER TABLE a1 ADD COLUMN y INT DEFAULT 0",
            "UPDATE a1 SET y = 5 WHERE x = 1",
            "SELECT y FROM a1",
        ],
    },
    {
        "id": "monetdb-7022",
        "dbms": "monetdb",
        "title": "LIKE pattern of bare wildcards stops the daemon",
        "status": "fixed",
        "versions": ["11.41.11"],
        "created_at": "2021-07-14T13:55:00Z",
        "last_modified": "2021-11-29T09:45:00Z",
        "body": [
            "CREATE TABLE m2 (v VARCHAR(8)); then INSERT INTO m2 VALUES ('x'); prepare the data.",
            "SELECT v FROM m2 WHERE v LIKE '%%%'; brings the daemon down.",
            "Assertion `pat' failed at gdk_select.c:901",
        ],
        "statements": [
            "CREATE TABLE m2 (v VARCHAR(8))",
            "INSERT INTO m2 VALUES ('x')",
            "SELECT v FROM m2 WHERE v LIKE '%%%'",
        ],
    },
    {
        "id": "monetdb-7280",
        "dbms": "monetdb",
        "title": "Memory climbs across repeated view create/drop cycles",
        "status": "confirmed",
        "versions": ["11.44.2"],
        "created_at": "2022-04-20T08:35:00Z",
        "last_modified": "2022-05-05T17:00:00Z",
        "body": [
            "One cycle of the loop we run:",
            "```",
            "CREATE TABLE d1 (a INT);",
            "CREATE VIEW dv1 AS SELECT a FROM d1;",
            "DROP VIEW dv1;",
            "DROP TABLE d1;",
            "```",
            "No failure, but resident memory climbs a little on every cycle.",
        ],
        "statements": [
            "CREATE TABLE d1 (a INT)",
            "CREATE VIEW dv1 AS SELECT a FROM d1",
            "DROP VIEW dv1",
            "DROP TABLE d1",
        ],
    },
]


def statements_block(statements: list[str], extra: list[str] | None = None) -> str:
    lines = ["STATEMENTS:"]
    lines += [f"{s};" for s in statements]
    lines += extra or []
    return "\n".join(lines)


def make_reports() -> None:
    for report in REPORTS:
        payload = {k: v for k, v in report.items() if k not in ("statements", "expected_line")}
        dump(FIXTURES / "reports" / f"{report['id']}.json", payload)


def make_client_script() -> None:
    by_pattern = []

    # Repair responses first: their prompts contain "Origin report: <id>",
    # which would also satisfy a bare report-id pattern, so these entries
    # must come before the extraction entries.
    repairs = {
        "mysql-102205": statements_block(
            ["SET GLOBAL log_bin_trust_function_creators=1"]
            + next(r["statements"] for r in REPORTS if r["id"] == "mysql-102205")
        ),
        "mysql-101440": statements_block(
            ["CREATE TABLE t3 (id INT)"]
            + next(r["statements"] for r in REPORTS if r["id"] == "mysql-101440")
        ),
        "mysql-103311": statements_block(
            next(r["statements"] for r in REPORTS if r["id"] == "mysql-103311")
        ),
        "postgresql-17231": statements_block(
            [
                "SET enable_seqscan = on",
                "CREATE TABLE r1 (x INT)",
                "INSERT INTO r1 VALUES (1)",
                "SELECT x FROM r1 WHERE x > 0",
            ],
        ).replace(
            "STATEMENTS:",
            "STATEMENTS:\nRENAME: enable_frobnicate -> enable_seqscan",
        ),
        "postgresql-18001": statements_block(["SELECT 1"]),
    }
    for report_id, response in repairs.items():
        by_pattern.append({"pattern": f"Origin report: {report_id}\\b", "response": response})
    by_pattern.append(
        {
            "pattern": "Origin report: mariadb-21005\\b",
            "response": "Maybe the generated column definition should be checked first.",
        }
    )

    # Extraction responses, one per PoC-bearing report.
    for report in REPORTS:
        if report["id"] in ("postgresql-15777",):
            continue
        if report["statements"] is None:
            if report["id"] == "mysql-100021":
                by_pattern.append(
                    {
                        "pattern": "Report: mysql-100021\\b",
                        "response": "NON_EXTRACTABLE: configuration tuning discussion, no reproducible bug script",
                    }
                )
            continue
        extra = None
        if report.get("expected_line"):
            extra = [f"EXPECTED: {report['expected_line']}"]
        by_pattern.append(
            {
                "pattern": f"Report: {report['id']}\\b",
                "response": statements_block(report["statements"], extra),
            }
        )
    dump(FIXTURES / "client_script.json", {"by_pattern": by_pattern})


def make_backend_programs() -> None:
    mysql_rules = [
        {
            "match": r"create\s+function\s+f1",
            "unless_global": {"var": "log_bin_trust_function_creators", "value": "1"},
            "result": {
                "status": "error",
                "code": "1418",
                "message": "This function has none of DETERMINISTIC, NO SQL, or READS SQL DATA in its declaration and binary logging is enabled",
            },
        },
        {
            "match": r"select\s+f1\s*\(\s*\)",
            "requires_prior": r"create\s+function\s+f1",
            "result": {"status": "error", "code": "2027", "message": "Malformed packet"},
        },
        {
            "match": r"sum\s*\(\s*b\s*\)\s*over",
            "result": {
                "status": "crash",
                "signal": 11,
                "frames": [
                    "#0 0x0000561f in Item_sum_sum::val_real () at item_sum.cc:1644",
                    "#1 0x0000561f in Window_frame::evaluate () at window.cc:233",
                ],
            },
        },
        {
            "match": r"insert\s+into\s+t3\b",
            "unless_prior": r"create\s+table\s+t3\b",
            "result": {"status": "error", "code": "1146", "message": "Table 'test.t3' doesn't exist"},
        },
        {
            "match": r"json_table",
            "result": {
                "status": "error",
                "code": "1064",
                "message": "You have an error in your SQL syntax; check the manual near 'COLUMNS'",
            },
        },
        {
            "match": r"insert\s+into\s+t1\b",
            "requires_prior": r"create\s+table\s+v1\b",
            "result": {
                "status": "crash",
                "signal": 11,
                "frames": [
                    "#0 0x00005642 in Table_trigger_dispatcher::process_triggers () at trigger.cc:510",
                ],
            },
        },
    ]
    mariadb_rules = [
        {
            "match": r"insert\s+into\s+t1\b",
            "requires_prior": r"create\s+table\s+v1\b",
            "result": {
                "status": "crash",
                "signal": 11,
                "frames": [
                    "#0 0x00005642 in Table_trigger_dispatcher::process_triggers () at trigger.cc:510",
                ],
            },
        },
        {
            "match": r"insert\s+into\s+vc1\b",
            "result": {
                "status": "crash",
                "signal": 11,
                "frames": ["#0 0x000055d0 in row_ins_index_entry () at row0ins.cc:3312"],
            },
        },
        {
            "match": r"update\s+g2\b",
            "result": {
                "status": "error",
                "code": "1906",
                "message": "The value specified for generated column 'b' in table 'g2' has been ignored",
            },
        },
    ]
    postgresql_rules = [
        {
            "match": r"set\s+enable_frobnicate",
            "result": {
                "status": "error",
                "code": "42704",
                "message": 'unrecognized configuration parameter "enable_frobnicate"',
            },
        },
        {
            "match": r"select\s+count\s*\(\s*\*\s*\)\s+from\s+p1\b",
            "result": {
                "status": "connection_lost",
                "message": "server closed the connection unexpectedly",
            },
        },
        {
            "match": r"select\s+x\s+from\s+r1\b",
            "result": {
                "status": "error",
                "code": "XX001",
                "message": "could not read block 0 in file base/16384",
            },
        },
        {
            "match": r"insert\s+into\s+t9\b",
            "result": {
                "status": "error",
                "code": "42P01",
                "message": 'relation "t9" does not exist',
            },
        },
    ]
    monetdb_crash_7387 = {
        "match": r"group\s+by\s+c0\s+having\s+c0\s*>\s*any",
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
    monetdb_rules = [
        monetdb_crash_7387,
        {
            "match": r"like\s+'%%%'",
            "result": {
                "status": "crash",
                "signal": 6,
                "frames": ["#0 0x00007f10 in GDKselect (b=0x7f) at gdk_select.c:901"],
            },
        },
    ]
    programs = {
        "mysql.json": {"backend_version": "8.0.23", "rules": mysql_rules},
        "mariadb.json": {"backend_version": "10.5.9", "rules": mariadb_rules},
        "postgresql.json": {"backend_version": "13.4", "rules": postgresql_rules},
        "monetdb.json": {"backend_version": "11.45.0", "rules": monetdb_rules},
        # Replay fakes for the regression campaign: the crash regressed, so
        # the build marked fixed and the latest build both still crash.
        "monetdb_latest.json": {"backend_version": "11.47.0", "rules": [monetdb_crash_7387]},
        "monetdb_fixed.json": {"backend_version": "11.46.0", "rules": [monetdb_crash_7387]},
    }
    for name, program in programs.items():
        program = {"version": "fake-program-1", **program, "default": {"status": "ok"}}
        dump(FIXTURES / "backends" / name, program)


def make_config() -> None:
    text = """\
# Pipeline configuration for the fixture corpus.  Paths are relative to
# this file; override the corpus location with --corpus-dir at run time.
corpus_dir: corpus

client:
  kind: scripted
  script: client_script.json

backends:
  - name: mysql-fake
    kind: scripted_fake
    dialect: mysql
    program: backends/mysql.json
  - name: mariadb-fake
    kind: scripted_fake
    dialect: mariadb
    program: backends/mariadb.json
  - name: postgresql-fake
    kind: scripted_fake
    dialect: postgresql
    program: backends/postgresql.json
  - name: monetdb-fake
    kind: scripted_fake
    dialect: monetdb
    program: backends/monetdb.json
  - name: monetdb-latest
    kind: scripted_fake
    dialect: monetdb
    program: backends/monetdb_latest.json
    roles: [latest]
  - name: monetdb-fixed
    kind: scripted_fake
    dialect: monetdb
    program: backends/monetdb_fixed.json
    roles: [fixed]

adaptation:
  beta: 0.4
  max_iters: 5
  timeout: 30.0

extraction:
  max_rounds: 3
  expansion_lines: 8
  token_budget: 4000
  retrieval_k: 4
"""
    path = FIXTURES / "pocmill.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, "utf-8")


# ----------------------------------------------------------------------
# Fragmenter acceptance suite: 30 reports with planted ground truth.
# ----------------------------------------------------------------------

TRACE_LINES = [
    "#0 0x00007ffff7a9d4a2 in raise () from /lib64/libc.so.6",
    "#1 0x00005555558d21f0 in handle_fatal_signal (sig=11) at signal_handler.cc:168",
    "#2 0x0000555555e01a3c in my_print_stacktrace () at stacktrace.cc:310",
    "Thread 12 (Thread 0x7fff9cff9700 (LWP 32021)):",
    "(gdb) bt full",
    "Program received signal SIGSEGV, Segmentation fault.",
]

PROSE_FILLER = [
    "The workload is a plain OLTP mix, nothing exotic.",
    "It reproduces on two different machines for us.",
    "Happy to provide more detail if needed.",
    "The same thing happens with the optimizer switch toggled.",
    "We first saw this after the last minor upgrade.",
    "Downgrading makes the problem disappear.",
]


def make_fragmenter_suite() -> None:
    rng = random.Random(20240817)
    reports = []

    def table(i: int) -> str:
        return f"ft{i}"

    # 10 fenced-block reports: the block content is the ground truth.
    for i in range(10):
        stmts = [
            f"CREATE TABLE {table(i)} (a INT, b INT);",
            f"INSERT INTO {table(i)} VALUES ({i}, {i + 1});",
            f"SELECT a, b FROM {table(i)} WHERE a >= {i} ORDER BY b;",
        ]
        body = [
            f"Report {i}: the query below misbehaves.",
            rng.choice(PROSE_FILLER),
            "```",
            *stmts,
            "```",
            rng.choice(PROSE_FILLER),
        ]
        if i % 2 == 0:
            body += ["Relevant part of the backtrace:", *rng.sample(TRACE_LINES, 3)]
        reports.append(
            {
                "id": f"frag-fenced-{i}",
                "kind": "fenced",
                "body": body,
                "planted": stmts,
            }
        )

    # 10 prose-embedded reports: one statement per sentence-like line.
    for i in range(10):
        t = f"fp{i}"
        stmts = [
            f"CREATE TABLE {t} (x INT);",
            f"INSERT INTO {t} VALUES ({i});",
            f"UPDATE {t} SET x = x + 1 WHERE x = {i};",
        ]
        body = [
            f"While testing scenario {i} we hit a wrong result.",
            f"{stmts[0]} is how the table is made.",
            rng.choice(PROSE_FILLER),
            f"{stmts[1]} loads the single row we need.",
            f"{stmts[2]} then flips the value unexpectedly.",
            rng.choice(PROSE_FILLER),
        ]
        if i % 3 == 0:
            body += [*rng.sample(TRACE_LINES, 2)]
        reports.append(
            {
                "id": f"frag-prose-{i}",
                "kind": "prose",
                "body": body,
                "planted": stmts,
            }
        )

    # 10 multi-line parenthesized DDL reports.
    for i in range(10):
        t = f"fd{i}"
        ddl = [
            f"CREATE TABLE {t} (",
            "  id INT NOT NULL,",
            f"  payload VARCHAR({8 + i}),",
            "  PRIMARY KEY (id)",
            ");",
        ]
        follow = f"INSERT INTO {t} VALUES ({i}, 'row');"
        body = [
            f"Scenario {i}: loading fails on a narrow table.",
            rng.choice(PROSE_FILLER),
            *ddl,
            follow,
            rng.choice(PROSE_FILLER),
        ]
        if i % 2 == 1:
            body += ["Captured stack:", *rng.sample(TRACE_LINES, 3)]
        reports.append(
            {
                "id": f"frag-ddl-{i}",
                "kind": "ddl",
                "body": body,
                "planted": ["\n".join(ddl), follow],
            }
        )

    dump(FIXTURES / "fragmenter" / "suite.json", {"reports": reports})


# ----------------------------------------------------------------------
# Strategy-comparison fixture: 12 raw PoCs in four archetypes.
#
# A (3): crash on first run           -> every mode succeeds untouched
# B (3): needs a config repair        -> feedback fixes it; the blind
#        single-shot guess is right for b1/b2 and gated out for b3
# C (3): fixable only by dropping the INSERT -> ungated feedback takes the
#        destructive fix, the gate refuses it
# D (3): unfixable; proposed repairs also drop the WHERE clause
# ----------------------------------------------------------------------


def make_strategy_fixture() -> None:
    pocs = []
    rules = []
    patterns = []

    def poc(report_id: str, statements: list[str], expected: str | None) -> None:
        pocs.append(
            {
                "report_id": report_id,
                "statements": statements,
                "provenance": {str(i): "model-inferred" for i in range(len(statements))},
                "expected_behavior": expected,
                "expected_source": "rules" if expected else "none",
            }
        )

    for i in (1, 2, 3):
        poc(
            f"strat-a{i}",
            [f"CREATE TABLE sa{i} (a INT)", f"SELECT a FROM sa{i} WHERE a > 0"],
            None,
        )
        rules.append(
            {
                "match": rf"select\s+a\s+from\s+sa{i}\b",
                "result": {
                    "status": "crash",
                    "signal": 11,
                    "frames": [f"#0 0x0000BEEF in scan_sa{i} () at scan.c:{100 + i}"],
                },
            }
        )

    for i in (1, 2, 3):
        statements = [
            f"CREATE TABLE sb{i} (a INT)",
            f"CREATE FUNCTION fb{i}() RETURNS INT RETURN 1",
            f"SELECT fb{i}()",
        ]
        poc(f"strat-b{i}", statements, "ERROR 9027: malformed reply packet")
        rules.append(
            {
                "match": rf"create\s+function\s+fb{i}\b",
                "unless_global": {"var": "trust_fb", "value": "1"},
                "result": {
                    "status": "error",
                    "code": "9418",
                    "message": "function creation blocked by policy",
                },
            }
        )
        rules.append(
            {
                "match": rf"select\s+fb{i}\s*\(\s*\)",
                "requires_prior": rf"create\s+function\s+fb{i}\b",
                "result": {"status": "error", "code": "9027", "message": "malformed reply packet"},
            }
        )
        correct = statements_block(["SET GLOBAL trust_fb=1"] + statements)
        if i == 3:
            # The blind single-shot guess for b3 simplifies the script in a
            # way the constraint gate refuses.
            blind = statements_block([f"CREATE TABLE sb{i} (a INT)", f"SELECT a FROM sb{i}"])
        else:
            blind = correct
        patterns.append(
            {
                "pattern": rf"Origin report: strat-b{i}\b[\s\S]*execution feedback withheld",
                "response": blind,
            }
        )
        patterns.append({"pattern": rf"Origin report: strat-b{i}\b", "response": correct})

    for i in (1, 2, 3):
        statements = [
            f"CREATE TABLE sc{i} (a INT, b INT)",
            f"INSERT INTO sc{i} VALUES (1, 2)",
            f"SELECT a, b FROM sc{i} GROUP BY a",
        ]
        poc(f"strat-c{i}", statements, None)
        rules.append(
            {
                "match": rf"insert\s+into\s+sc{i}\b",
                "result": {
                    "status": "error",
                    "code": "9077",
                    "message": "insert violates internal row-format invariant",
                },
            }
        )
        destructive = statements_block(
            [f"CREATE TABLE sc{i} (a INT, b INT)", f"SELECT a, b FROM sc{i} GROUP BY a"]
        )
        patterns.append({"pattern": rf"Origin report: strat-c{i}\b", "response": destructive})

    for i in (1, 2, 3):
        statements = [
            f"CREATE TABLE sd{i} (a INT)",
            f"UPDATE sd{i} SET a = a + 1 WHERE a < 10",
        ]
        poc(f"strat-d{i}", statements, None)
        rules.append(
            {
                "match": rf"update\s+sd{i}\b",
                "result": {
                    "status": "error",
                    "code": "9199",
                    "message": "internal error: update path unsupported",
                },
            }
        )
        hopeless = statements_block([f"CREATE TABLE sd{i} (a INT)", f"UPDATE sd{i} SET a = 1"])
        patterns.append({"pattern": rf"Origin report: strat-d{i}\b", "response": hopeless})

    dump(FIXTURES / "strategy" / "sample.json", {"pocs": pocs})
    dump(
        FIXTURES / "strategy" / "backend.json",
        {"version": "fake-program-1", "backend_version": "strategy-1", "rules": rules, "default": {"status": "ok"}},
    )
    dump(FIXTURES / "strategy" / "client.json", {"by_pattern": patterns})
    config = """\
corpus_dir: corpus

client:
  kind: scripted
  script: client.json

backends:
  - name: strategy-fake
    kind: scripted_fake
    dialect: generic
    program: backend.json

adaptation:
  beta: 0.4
  max_iters: 5
  timeout: 30.0
"""
    (FIXTURES / "strategy" / "pocmill.yaml").write_text(config, "utf-8")


def main() -> None:
    make_reports()
    make_client_script()
    make_backend_programs()
    make_config()
    make_fragmenter_suite()
    make_strategy_fixture()
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
