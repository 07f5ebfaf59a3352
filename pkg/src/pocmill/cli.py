"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration problems, 3 a whole stage failed,
4 partial success (some records failed; details in the report stream).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .campaigns import (
    ReplayBackend,
    cross_replay,
    dedupe_findings,
    export_seeds,
    findings_table,
    findings_to_jsonl,
    regression_replay,
)
from .config import PipelineConfig, default_config
from .errors import ConfigError, EmptySelection, PocmillError
from .models import PipelineStage, RawPoC, ReportStatus
from .pipeline import StageReport, adapt_stage, collect_stage, extract_stage, fragment_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_PARTIAL = 4


class Runtime:
    """Lazily loaded configuration shared by the subcommands."""

    def __init__(self, config_path: str | None, corpus_dir: str | None, fmt: str):
        self.config_path = config_path
        self.corpus_dir = corpus_dir
        self.fmt = fmt
        self._config: PipelineConfig | None = None

    @property
    def config(self) -> PipelineConfig:
        if self._config is None:
            if self.config_path is not None:
                cfg = PipelineConfig.load(self.config_path)
            elif Path("pocmill.yaml").is_file():
                cfg = PipelineConfig.load("pocmill.yaml")
            else:
                cfg = default_config(self.corpus_dir or "corpus")
            if self.corpus_dir is not None:
                cfg.corpus_dir = Path(self.corpus_dir).resolve()
            self._config = cfg
        return self._config

    def emit(self, report: StageReport) -> None:
        if self.fmt == "records":
            click.echo(report.to_records(), nl=False)
        else:
            click.echo(report.to_table(), nl=False)

    def fail(self, code: int, message: str) -> None:
        if self.fmt == "records":
            click.echo(json.dumps({"error": message}, sort_keys=True))
        else:
            click.echo(f"error: {message}", err=True)
        sys.exit(code)


pass_runtime = click.make_pass_decorator(Runtime)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Path to the YAML config (default: ./pocmill.yaml when present).")
@click.option("--corpus-dir", default=None, help="Override the corpus directory.")
@click.option("--format", "fmt", type=click.Choice(["human", "records"]), default="human", help="Report stream format.")
@click.version_option(package_name="pocmill")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, corpus_dir: str | None, fmt: str) -> None:
    """Mine DBMS bug reports and forge their PoCs into test cases."""
    ctx.obj = Runtime(config_path, corpus_dir, fmt)


def _guard(rt: Runtime, fn, *args, **kwargs):
    """Run a stage body, mapping error families onto exit codes."""
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        rt.fail(EXIT_CONFIG, str(exc))
    except PocmillError as exc:
        rt.fail(EXIT_STAGE, str(exc))


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--adapter", "adapter_id", default="fixture", show_default=True, help="Source adapter for the payload format.")
@pass_runtime
def collect(rt: Runtime, paths: tuple[str, ...], adapter_id: str) -> None:
    """Ingest payload files (or directories of .json files) into the corpus."""

    def body() -> StageReport:
        corpus = rt.config.open_corpus()
        files: list[Path] = []
        for raw in paths:
            p = Path(raw)
            files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
        payloads = [f.read_bytes() for f in files]
        return collect_stage(corpus, payloads, adapter_id)

    report = _guard(rt, body)
    rt.emit(report)
    sys.exit(EXIT_PARTIAL if report.count("failed") else EXIT_OK)


@main.command()
@click.option("--report", "report_id", default=None, help="Limit to one report id.")
@click.option("--force", is_flag=True, help="Re-fragment records already past this stage.")
@click.option("--jobs", default=1, show_default=True, help="Worker threads for the scan.")
@pass_runtime
def fragment(rt: Runtime, report_id: str | None, force: bool, jobs: int) -> None:
    """Scan collected reports for PoC-like fragments."""

    def body() -> StageReport:
        corpus = rt.config.open_corpus()
        only = {report_id} if report_id else None
        return fragment_stage(corpus, rt.config.scoring, force=force, jobs=jobs, only=only)

    report = _guard(rt, body)
    rt.emit(report)
    sys.exit(report.exit_code)


@main.command()
@click.option("--report", "report_id", default=None, help="Limit to one report id.")
@click.option("--include-unconfirmed", is_flag=True, help="Also extract open/unconfirmed reports.")
@click.option("--force", is_flag=True, help="Re-extract records already past this stage.")
@pass_runtime
def extract(rt: Runtime, report_id: str | None, include_unconfirmed: bool, force: bool) -> None:
    """Extract raw PoCs from fragmented reports via the configured client."""

    def body() -> StageReport:
        cfg = rt.config
        corpus = cfg.open_corpus()
        client = cfg.make_client()
        library = cfg.open_library()
        only = {report_id} if report_id else None
        stage_report = extract_stage(
            corpus,
            client,
            library,
            cfg.budget,
            include_unconfirmed=include_unconfirmed,
            force=force,
            only=only,
        )
        cfg.save_library(library)
        return stage_report

    report = _guard(rt, body)
    rt.emit(report)
    sys.exit(report.exit_code)


@main.command()
@click.option("--report", "report_id", default=None, help="Limit to one report id.")
@click.option("--force", is_flag=True, help="Re-adapt records already past this stage.")
@pass_runtime
def adapt(rt: Runtime, report_id: str | None, force: bool) -> None:
    """Execute, diagnose and repair extracted PoCs into test cases."""

    def body() -> StageReport:
        cfg = rt.config
        corpus = cfg.open_corpus()
        client = cfg.make_client()
        backends: dict[str, object] = {}

        def resolver(dialect: str):
            if dialect not in backends:
                backends[dialect] = cfg.backend_for_dialect(dialect)
            return backends[dialect]

        only = {report_id} if report_id else None
        return adapt_stage(
            corpus,
            client,
            resolver,
            max_iters=cfg.max_iters,
            beta=cfg.beta,
            timeout=cfg.exec_timeout,
            force=force,
            only=only,
        )

    report = _guard(rt, body)
    rt.emit(report)
    sys.exit(report.exit_code)


@main.command()
@click.option("--target", required=True, help="DBMS whose adapted cases to export.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Seed directory to write.")
@pass_runtime
def export(rt: Runtime, target: str, out_dir: str) -> None:
    """Export adapted cases as fuzzing seed files plus a manifest."""

    def body():
        corpus = rt.config.open_corpus(create=False)
        try:
            return export_seeds(corpus, target, out_dir=out_dir)
        except EmptySelection as exc:
            rt.fail(EXIT_STAGE, str(exc))

    seeds = _guard(rt, body)
    if rt.fmt == "records":
        for name, _ in seeds.files:
            click.echo(json.dumps({"seed": name, **seeds.manifest[name]}, sort_keys=True))
    else:
        click.echo(f"wrote {len(seeds.files)} seeds for {seeds.target_dbms} to {out_dir}")
    sys.exit(EXIT_OK)


def _emit_findings(rt: Runtime, findings) -> None:
    if rt.fmt == "records":
        click.echo(findings_to_jsonl(findings), nl=False)
    else:
        click.echo(findings_table(findings), nl=False)
        groups = dedupe_findings(findings)
        click.echo(f"{len(findings)} findings in {len(groups)} signature groups")


@main.command()
@click.option("--dbms", default=None, help="Limit to one engine's cases.")
@pass_runtime
def regress(rt: Runtime, dbms: str | None) -> None:
    """Replay fixed bugs across the configured backend versions."""

    def body():
        cfg = rt.config
        corpus = cfg.open_corpus(create=False)
        groups: dict[str, list] = {}
        for record in corpus.records():
            if record.pipeline_stage is not PipelineStage.ADAPTED:
                continue
            if dbms and record.report.dbms.lower() != dbms.lower():
                continue
            if record.report.status is not ReportStatus.FIXED:
                continue
            groups.setdefault(record.report.dbms, []).append(
                (record.test_case, record.report.status)
            )
        if not groups:
            raise EmptySelection("no adapted fixed-status cases to replay")
        # Replay each engine's cases only on its own dialect, and only on
        # backends tagged with a latest/fixed role; the untagged adaptation
        # backend is not a statement about any particular build.
        tagged = [ReplayBackend(b, roles) for b, roles in cfg.make_backends() if roles]
        findings = []
        for engine in sorted(groups):
            backends = [rb for rb in tagged if rb.backend.dialect == engine]
            if not backends:
                if dbms:
                    raise ConfigError(f"no latest/fixed-tagged backends for dialect {engine!r}")
                click.echo(
                    f"regress: no latest/fixed-tagged backends for {engine}; "
                    f"skipped {len(groups[engine])} case(s)",
                    err=True,
                )
                continue
            findings.extend(regression_replay(groups[engine], backends, timeout=cfg.exec_timeout))
        if not findings:
            raise ConfigError("no latest/fixed-tagged backends matched any selected case")
        return findings

    findings = _guard(rt, body)
    _emit_findings(rt, findings)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--origin", required=True, help="Engine the cases came from.")
@click.option("--backend", "backend_name", default=None, help="Named backend to replay on (default: first with a different dialect).")
@pass_runtime
def cross(rt: Runtime, origin: str, backend_name: str | None) -> None:
    """Replay one engine's cases on a sibling engine."""

    def body():
        cfg = rt.config
        corpus = cfg.open_corpus(create=False)
        cases = [
            record.test_case
            for record in corpus.records()
            if record.pipeline_stage is PipelineStage.ADAPTED
            and record.report.dbms.lower() == origin.lower()
        ]
        if not cases:
            raise EmptySelection(f"no adapted cases from {origin!r} to replay")
        target = None
        for backend, _roles in cfg.make_backends():
            if backend_name is not None:
                if backend.backend_id == backend_name:
                    target = backend
                    break
            elif backend.dialect.lower() != origin.lower():
                target = backend
                break
        if target is None:
            raise ConfigError("no suitable replay backend configured")
        if target.dialect.lower() == origin.lower():
            raise ConfigError(
                f"backend {target.backend_id!r} speaks {target.dialect}; "
                "cross replay needs a backend for a different engine"
            )
        return cross_replay(cases, origin, target, timeout=cfg.exec_timeout)

    findings = _guard(rt, body)
    _emit_findings(rt, findings)
    sys.exit(EXIT_OK)


@main.command()
@pass_runtime
def stats(rt: Runtime) -> None:
    """Corpus counts per DBMS: reports, raw PoCs, test cases."""

    def body():
        return rt.config.open_corpus().stats()

    counts = _guard(rt, body)
    if rt.fmt == "records":
        click.echo(json.dumps(counts.to_dict(), sort_keys=True))
    else:
        click.echo(f"{'dbms':<14} {'reports':>8} {'raw_pocs':>9} {'test_cases':>11}")
        for name in sorted(counts.per_dbms):
            row = counts.per_dbms[name]
            click.echo(
                f"{name:<14} {row['reports']:>8} {row['raw_pocs']:>9} {row['test_cases']:>11}"
            )
        click.echo(
            f"{'total':<14} {counts.reports:>8} {counts.raw_pocs:>9} {counts.test_cases:>11}"
        )
    sys.exit(EXIT_OK)


@main.command(name="strategy-report")
@click.option("--sample", required=True, type=click.Path(exists=True), help="JSON file with raw PoC dicts to adapt.")
@click.option("--mode", required=True, type=click.Choice(["F", "S", "F+S"]), help="Adaptation strategy to measure.")
@click.option("--backend", "backend_name", default=None, help="Named backend to run on (default: the first).")
@pass_runtime
def strategy_report_cmd(rt: Runtime, sample: str, mode: str, backend_name: str | None) -> None:
    """Executable/richness rates of one adaptation strategy on a sample."""
    from .adapter import strategy_report

    def body():
        cfg = rt.config
        data = json.loads(Path(sample).read_text("utf-8"))
        entries = data["pocs"] if isinstance(data, dict) else data
        pocs = [RawPoC.from_dict(e) for e in entries]
        client = cfg.make_client()
        target = None
        for backend, _roles in cfg.make_backends():
            if backend_name is None or backend.backend_id == backend_name:
                target = backend
                break
        if target is None:
            raise ConfigError(f"backend {backend_name!r} is not configured")
        return strategy_report(
            pocs,
            mode,
            target,
            client,
            max_iters=cfg.max_iters,
            beta=cfg.beta,
            timeout=cfg.exec_timeout,
        )

    rates = _guard(rt, body)
    if rt.fmt == "records":
        click.echo(json.dumps(rates, sort_keys=True))
    else:
        click.echo(
            f"mode={rates['mode']} cases={rates['cases']} "
            f"executable={rates['executable_rate']:.4f} richness={rates['richness_rate']:.4f}"
        )
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
