"""Corpus storage, ingestion adapters and sync planning."""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import pytest

from pocmill.errors import CorpusError, MalformedPayload, UnknownAdapter
from pocmill.models import PipelineStage, ReportStatus, UpstreamSnapshot
from pocmill.repository import (
    Corpus,
    adapter_names,
    detect_change,
    extraction_candidates,
    ingest_report,
    record_filename,
    refresh_interval,
)


def payload(report_id="mysql-1", status="confirmed", body="SELECT 1;", modified="2021-01-02T00:00:00Z"):
    return json.dumps(
        {
            "id": report_id,
            "dbms": report_id.split("-")[0],
            "title": f"report {report_id}",
            "status": status,
            "body": body,
            "created_at": "2021-01-01T00:00:00Z",
            "last_modified": modified,
        }
    ).encode()


def test_adapter_registry_has_builtin_adapters():
    names = adapter_names()
    assert "fixture" in names and "http-generic" in names


def test_ingest_report_normalizes_fields():
    report = ingest_report(payload("MySQL-9", body=["line1", "line2"]), "fixture")
    assert report.dbms == "mysql"
    assert report.body == ["line1", "line2"]
    assert report.status is ReportStatus.CONFIRMED
    assert report.created_at.tzinfo is not None


def test_ingest_report_unknown_adapter():
    with pytest.raises(UnknownAdapter):
        ingest_report(payload(), "no-such-adapter")


def test_ingest_report_malformed_payload():
    with pytest.raises(MalformedPayload):
        ingest_report(b"not json", "fixture")
    with pytest.raises(MalformedPayload):
        ingest_report(b'{"id": "x"}', "fixture")


def test_corpus_ingest_and_reingest(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    record, changed = corpus.ingest(payload(), "fixture")
    assert changed and record.pipeline_stage is PipelineStage.COLLECTED

    again, changed = corpus.ingest(payload(), "fixture")
    assert not changed
    assert again.report.id == record.report.id


def test_corpus_reingest_with_new_content_resets_stage(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    record, _ = corpus.ingest(payload(), "fixture")
    record.pipeline_stage = PipelineStage.FRAGMENTED
    record.fragments = []
    corpus.save(record, force=True)

    updated, changed = corpus.ingest(payload(modified="2021-02-02T00:00:00Z"), "fixture")
    assert changed
    assert updated.pipeline_stage is PipelineStage.COLLECTED
    assert updated.fragments is None


def test_corpus_quarantines_malformed_payloads(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    with pytest.raises(MalformedPayload):
        corpus.ingest(b"{broken", "fixture")
    entries = list((tmp_path / "corpus" / "quarantine").iterdir())
    assert len(entries) == 1
    stored = json.loads(entries[0].read_text("utf-8"))
    assert stored["adapter"] == "fixture"
    assert "payload_sha256" in stored


def test_corpus_persists_across_open(tmp_path):
    root = tmp_path / "corpus"
    corpus = Corpus.open(root)
    corpus.ingest(payload("mysql-5"), "fixture")

    reopened = Corpus.open(root, create=False)
    assert reopened.ids() == ["mysql-5"]
    assert reopened.get("mysql-5").report.title == "report mysql-5"


def test_corpus_get_missing_record(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    with pytest.raises(CorpusError):
        corpus.get("nope-1")


def test_records_sorted_by_id(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    for rid in ("mysql-2", "mariadb-1", "mysql-10"):
        corpus.ingest(payload(rid), "fixture")
    assert [r.report.id for r in corpus.records()] == ["mariadb-1", "mysql-10", "mysql-2"]


def test_record_filename_is_safe():
    assert record_filename("mysql-102205") == "mysql-102205.json"
    assert "/" not in record_filename("weird/../id")


def test_detect_change():
    report = ingest_report(payload(), "fixture")
    same = UpstreamSnapshot(
        report_id=report.id, status=report.status, last_modified=report.last_modified
    )
    assert not detect_change(same, report)
    moved = UpstreamSnapshot(
        report_id=report.id,
        status=ReportStatus.FIXED,
        last_modified=report.last_modified,
    )
    assert detect_change(moved, report)
    with pytest.raises(ValueError):
        detect_change(
            UpstreamSnapshot(
                report_id="other-1", status=report.status, last_modified=report.last_modified
            ),
            report,
        )


def test_refresh_interval_steps_are_monotonic():
    ages = [timedelta(days=d) for d in (1, 10, 40, 200, 2000)]
    intervals = [refresh_interval(age) for age in ages]
    assert intervals == sorted(intervals)
    assert intervals[0] < intervals[-1]


def test_plan_sync_uses_injected_clock(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    record, _ = corpus.ingest(payload(), "fixture")
    record.report.last_collected_at = datetime(2021, 1, 1, tzinfo=timezone.utc)
    corpus.save(record, force=True)

    soon = datetime(2021, 1, 1, 0, 30, tzinfo=timezone.utc)
    later = datetime(2022, 1, 1, tzinfo=timezone.utc)
    assert corpus.plan_sync(now=soon).probe_ids == []
    assert corpus.plan_sync(now=later).probe_ids == ["mysql-1"]


def test_stats_counts_by_dbms(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    corpus.ingest(payload("mysql-1"), "fixture")
    corpus.ingest(payload("monetdb-1"), "fixture")
    stats = corpus.stats()
    assert stats.reports == 2
    assert stats.raw_pocs == 0
    assert stats.per_dbms["mysql"]["reports"] == 1
    assert stats.per_dbms["monetdb"]["reports"] == 1


def test_extraction_candidates_filter_status(tmp_path):
    corpus = Corpus.open(tmp_path / "corpus")
    for rid, status in (
        ("mysql-1", "confirmed"),
        ("mysql-2", "open"),
        ("mysql-3", "fixed"),
        ("mysql-4", "wont_fix"),
    ):
        record, _ = corpus.ingest(payload(rid, status=status), "fixture")
        record.pipeline_stage = PipelineStage.FRAGMENTED
        record.fragments = []
        corpus.save(record, force=True)
    assert extraction_candidates(corpus) == ["mysql-1", "mysql-3"]
    assert extraction_candidates(corpus, include_unconfirmed=True) == [
        "mysql-1",
        "mysql-2",
        "mysql-3",
        "mysql-4",
    ]


def test_http_generic_adapter_unwraps_fetch_envelope():
    raw = json.dumps(
        {
            "url": "https://tracker.example/PG-77",
            "fetched_at": "2021-01-06T00:00:00Z",
            "report": {
                "id": "PG-77",
                "dbms": "postgresql",
                "title": "crash on vacuum",
                "status": "open",
                "body": "steps...",
                "created_at": "2021-01-01T00:00:00Z",
                "last_modified": "2021-01-05T00:00:00Z",
            },
        }
    ).encode()
    report = ingest_report(raw, "http-generic")
    assert report.id == "PG-77"
    assert report.dbms == "postgresql"
    # Unknown tracker states coerce to OTHER rather than failing ingestion.
    assert report.status is ReportStatus.OTHER
    assert report.last_collected_at is not None
    assert report.last_collected_at.year == 2021


def test_http_generic_adapter_requires_report_object():
    with pytest.raises(MalformedPayload):
        ingest_report(b'{"url": "x"}', "http-generic")
