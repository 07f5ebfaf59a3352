"""End-to-end CLI runs over the fixture corpus."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from pocmill.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
CONFIG = str(FIXTURES / "pocmill.yaml")
REPORTS = str(FIXTURES / "reports")
STRATEGY_CONFIG = str(FIXTURES / "strategy" / "pocmill.yaml")
STRATEGY_SAMPLE = str(FIXTURES / "strategy" / "sample.json")


def run(*args: str, expect: int = 0) -> "Result":
    result = CliRunner().invoke(main, list(args))
    if result.exception and not isinstance(result.exception, SystemExit):
        raise result.exception
    assert result.exit_code == expect, result.output
    return result


def records(result) -> list[dict]:
    return [json.loads(line) for line in result.stdout.splitlines() if line.strip()]


@pytest.fixture(scope="module")
def built_corpus(tmp_path_factory) -> str:
    """Full pipeline over the fixture reports, shared by the read-only tests."""
    corpus_dir = str(tmp_path_factory.mktemp("corpus"))
    base = ("--config", CONFIG, "--corpus-dir", corpus_dir)
    run(*base, "collect", REPORTS)
    run(*base, "fragment")
    run(*base, "extract")
    run(*base, "adapt")
    return corpus_dir


def test_pipeline_stage_reports_and_stats(built_corpus):
    result = run(
        "--config", CONFIG, "--corpus-dir", built_corpus, "--format", "records", "stats"
    )
    counts = records(result)[0]
    assert counts["reports"] == 20
    assert counts["raw_pocs"] == 18
    assert counts["test_cases"] == 15
    assert counts["per_dbms"]["mysql"] == {"reports": 6, "raw_pocs": 5, "test_cases": 4}


def test_rerun_skips_completed_stages(built_corpus):
    result = run("--config", CONFIG, "--corpus-dir", built_corpus, "fragment")
    assert "20 skipped" in result.output
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "--format",
        "records",
        "collect",
        REPORTS,
    )
    summary = records(result)[-1]
    assert summary["skipped"] == 20
    assert summary["processed"] == 0


def test_force_refragments_one_report(built_corpus, tmp_path):
    # work on a scratch copy so the shared corpus stays adapted
    corpus_dir = str(tmp_path / "corpus")
    base = ("--config", CONFIG, "--corpus-dir", corpus_dir)
    run(*base, "collect", str(FIXTURES / "reports" / "mysql-102205.json"))
    run(*base, "fragment", "--report", "mysql-102205")
    result = run(*base, "--format", "records", "fragment", "--report", "mysql-102205")
    assert records(result)[0]["action"] == "skipped"
    result = run(
        *base, "--format", "records", "fragment", "--report", "mysql-102205", "--force"
    )
    assert records(result)[0]["action"] == "processed"


def test_collect_quarantines_malformed_payloads(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"not": "a report"}', "utf-8")
    corpus_dir = str(tmp_path / "corpus")
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        corpus_dir,
        "--format",
        "records",
        "collect",
        str(bad),
        expect=4,
    )
    summary = records(result)[-1]
    assert summary["failed"] == 1
    assert list((Path(corpus_dir) / "quarantine").glob("*.json"))


def test_missing_config_exits_with_config_code(tmp_path):
    run("--config", str(tmp_path / "nope.yaml"), "stats", expect=2)


def test_adapt_detail_lines_name_expectations(built_corpus):
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "--format",
        "records",
        "adapt",
    )
    rows = {r["report_id"]: r for r in records(result) if not r.get("summary")}
    assert all(row["action"] == "skipped" for row in rows.values())


def test_export_writes_seeds_and_manifest(built_corpus, tmp_path):
    out = tmp_path / "seeds"
    run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "export",
        "--target",
        "mysql",
        "--out",
        str(out),
    )
    seeds = sorted(p.name for p in out.glob("*.sql"))
    assert len(seeds) == 4
    manifest = json.loads((out / "manifest.json").read_text("utf-8"))
    assert set(manifest) == set(seeds)
    assert all("__mysql-" in name for name in seeds)


def test_export_with_no_matching_cases_fails(built_corpus, tmp_path):
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "export",
        "--target",
        "sqlite",
        "--out",
        str(tmp_path / "seeds"),
        expect=3,
    )
    assert "no adapted cases" in result.output


def test_regress_finds_the_reintroduced_crash(built_corpus):
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "--format",
        "records",
        "regress",
        "--dbms",
        "monetdb",
    )
    findings = records(result)
    by_report: dict[str, set[str]] = {}
    for finding in findings:
        by_report.setdefault(finding["origin_report_id"], set()).add(finding["verdict"])
    assert by_report["monetdb-7387"] == {"regression"}
    assert by_report["monetdb-7022"] == {"still_fixed"}


def test_regress_without_tagged_backends_for_dbms_is_config_error(built_corpus):
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "regress",
        "--dbms",
        "mysql",
        expect=2,
    )
    assert "no latest/fixed-tagged backends" in result.output


def test_regress_without_filter_notes_skipped_engines(built_corpus):
    result = run(
        "--config", CONFIG, "--corpus-dir", built_corpus, "--format", "records", "regress"
    )
    assert "skipped" in result.stderr
    engines = {r["origin_report_id"].split("-")[0] for r in records(result)}
    assert engines == {"monetdb"}


def test_cross_replay_hits_the_sibling_engine(built_corpus):
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "--format",
        "records",
        "cross",
        "--origin",
        "mariadb",
    )
    verdicts = {r["origin_report_id"]: r["verdict"] for r in records(result)}
    assert verdicts["mariadb-20661"] == "cross_hit"
    assert set(verdicts.values()) <= {"cross_hit", "inconclusive"}


def test_cross_replay_flags_dialect_mismatches(built_corpus):
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "--format",
        "records",
        "cross",
        "--origin",
        "postgresql",
    )
    findings = {r["origin_report_id"]: r for r in records(result)}
    mismatch = findings["postgresql-16440"]
    assert mismatch["verdict"] == "inconclusive"
    assert mismatch["notes"] == "dialect_mismatch"
    assert mismatch["signature"] == "not_executed"


def test_cross_replay_rejects_same_engine_backend(built_corpus):
    result = run(
        "--config",
        CONFIG,
        "--corpus-dir",
        built_corpus,
        "cross",
        "--origin",
        "mysql",
        "--backend",
        "mysql-fake",
        expect=2,
    )
    assert "different engine" in result.output


def test_stats_human_table_has_total_row(built_corpus):
    result = run("--config", CONFIG, "--corpus-dir", built_corpus, "stats")
    lines = result.stdout.splitlines()
    assert lines[0].split() == ["dbms", "reports", "raw_pocs", "test_cases"]
    assert lines[-1].startswith("total")


def test_strategy_report_command_reports_rates():
    result = run(
        "--config",
        STRATEGY_CONFIG,
        "--format",
        "records",
        "strategy-report",
        "--sample",
        STRATEGY_SAMPLE,
        "--mode",
        "F",
    )
    rates = records(result)[0]
    assert rates["mode"] == "F"
    assert rates["cases"] == 12
    assert 0.0 <= rates["executable_rate"] <= 1.0
    assert 0.0 <= rates["richness_rate"] <= 1.0
