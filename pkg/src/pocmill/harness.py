"""Execution harness: backends, risk assessment, cleanup, lifecycle.

Two backend families implement the same surface.  The scripted fake runs
entirely in process from a canned rule program and is what tests and
offline pipelines use; the containerized live backend drives a real DBMS
through container and client-shell commands described by a per-engine
template file (no wire-protocol client in this package).

Every script execution is followed by a cleanup action sized to the
script's risk tier, so one PoC's side effects never leak into the next.
"""

from __future__ import annotations

import json
import re
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Protocol

from .errors import (
    BackendUnhealthy,
    ConfigError,
    ExecutorUnavailable,
    HealthCheckFailed,
    LifecycleViolation,
    ProvisioningFailure,
)
from .models import (
    CleanupAction,
    ExecutionOutcome,
    OutcomeKind,
    RiskClass,
    RiskLevel,
    StatementResult,
)
from .sqltext import OBJECT_TYPE_WORDS, is_subject_line, statement_verb, tokenize

DEFAULT_TIMEOUT = 30.0

# Global variables whose mutation can wedge or fill up a server; touching
# them forces a container reinstall afterwards.
GLOBAL_VARIABLE_DENYLIST = frozenset(
    {
        "innodb_purge_stop_now",
        "innodb_fast_shutdown",
        "offline_mode",
        "read_only",
        "super_read_only",
    }
)

SYSTEM_OBJECT_RE = r"(?:\*\s*\.\s*\*|mysql\s*\.|pg_catalog|information_schema|sys\s*\.)"

# Ordered (pattern, tier) rules; the first hit wins per statement.
_DENY_ALTERNATION = "|".join(sorted(GLOBAL_VARIABLE_DENYLIST))
RISK_RULES: list[tuple[str, RiskLevel]] = [
    (r"^\s*(create|drop)\s+(role|user)\b", RiskLevel.HIGH),
    (r"^\s*(create|drop)\s+extension\b", RiskLevel.HIGH),
    (rf"^\s*(grant|revoke)\b.*\bon\b.*{SYSTEM_OBJECT_RE}", RiskLevel.HIGH),
    (rf"^\s*set\s+global\s+(?:{_DENY_ALTERNATION})\b", RiskLevel.HIGH),
    (r"^\s*alter\s+system\b", RiskLevel.MEDIUM),
    (r"^\s*set\s+global\b", RiskLevel.MEDIUM),
    (r"^\s*flush\b", RiskLevel.MEDIUM),
    (r"^\s*(install|uninstall)\s+(plugin|soname)\b", RiskLevel.MEDIUM),
]

_RISK_ORDER = {RiskLevel.LOW: 0, RiskLevel.MEDIUM: 1, RiskLevel.HIGH: 2}

CLEANUP_FOR_RISK = {
    RiskLevel.HIGH: CleanupAction.REINSTALL_CONTAINER,
    RiskLevel.MEDIUM: CleanupAction.RESTART_AND_VERIFY,
    RiskLevel.LOW: CleanupAction.CLEAN_DATABASE,
}

_CLEANUP_ORDER = {
    CleanupAction.CLEAN_DATABASE: 0,
    CleanupAction.RESTART_AND_VERIFY: 1,
    CleanupAction.REINSTALL_CONTAINER: 2,
}


def statement_risk(statement: str) -> RiskLevel:
    """Risk tier of a single statement under the rule table."""
    flat = " ".join(statement.split())
    for pattern, tier in RISK_RULES:
        if re.search(pattern, flat, re.IGNORECASE):
            return tier
    return RiskLevel.LOW


def assess_risk(statements: list[str]) -> RiskClass:
    """Aggregate risk of a script: the max over its statements."""
    tiers = [statement_risk(s) for s in statements]
    if not tiers:
        return RiskClass(value=RiskLevel.LOW, triggering_statements=[])
    top = max(tiers, key=lambda t: _RISK_ORDER[t])
    if top is RiskLevel.LOW:
        return RiskClass(value=RiskLevel.LOW, triggering_statements=[])
    culprits = [i for i, t in enumerate(tiers) if t is top]
    return RiskClass(value=top, triggering_statements=culprits)


def schedule_cleanup(risk: RiskClass) -> CleanupAction:
    """Cleanup action sized to a risk tier."""
    return CLEANUP_FOR_RISK[risk.value]


class BackendState(str, Enum):
    ABSENT = "absent"
    PROVISIONED = "provisioned"
    HEALTHY = "healthy"
    DEGRADED = "degraded"


class Backend(Protocol):
    """Surface both backend families implement."""

    backend_id: str
    version: str
    dialect: str
    state: BackendState

    def provision(self) -> None: ...
    def health_check(self) -> None: ...
    def run_script(self, statements: list[str], timeout: float) -> ExecutionOutcome: ...
    def apply_cleanup(self, action: CleanupAction) -> None: ...
    def teardown(self) -> None: ...


def _object_target(statement: str) -> tuple[str, str] | None:
    """(object kind, name) for CREATE/DROP statements, if parseable."""
    toks = [t for t in tokenize(statement) if t.kind in ("ident", "qident")]
    if not toks:
        return None
    verb = toks[0].value.lower()
    if verb not in ("create", "drop"):
        return None
    kind = None
    for idx in range(1, len(toks)):
        word = toks[idx].value.lower()
        if word in OBJECT_TYPE_WORDS:
            kind = word
            for cand in toks[idx + 1 :]:
                name = cand.value.lower().strip('`"')
                if cand.kind == "qident" or name not in (
                    "if",
                    "exists",
                    "not",
                    "or",
                    "replace",
                    "temporary",
                    "temp",
                    "unique",
                    "concurrently",
                ):
                    return kind, name
            return None
    return None


SET_GLOBAL_RE = re.compile(
    r"^\s*set\s+global\s+([A-Za-z_][\w.]*)\s*=\s*(.+?)\s*$", re.IGNORECASE
)
ALTER_SYSTEM_RE = re.compile(
    r"^\s*alter\s+system\s+set\s+([A-Za-z_][\w.]*)\s*(?:=|to)\s*(.+?)\s*$", re.IGNORECASE
)
INSERT_RE = re.compile(r"^\s*insert\s+into\s+([A-Za-z_][\w.]*)", re.IGNORECASE)


def _norm_value(value: str) -> str:
    return value.strip().strip("'\"").lower()


@dataclass
class _FakeState:
    """Mutable server-side state the fake models."""

    schema_objects: set[tuple[str, str]] = field(default_factory=set)
    rows: dict[str, int] = field(default_factory=dict)
    global_vars: dict[str, str] = field(default_factory=dict)
    persisted_config: dict[str, str] = field(default_factory=dict)
    roles: set[str] = field(default_factory=set)
    extensions: set[str] = field(default_factory=set)
    plugins: set[str] = field(default_factory=set)

    def snapshot(self) -> dict[str, Any]:
        return {
            "schema_objects": sorted(self.schema_objects),
            "rows": dict(sorted(self.rows.items())),
            "global_vars": dict(sorted(self.global_vars.items())),
            "persisted_config": dict(sorted(self.persisted_config.items())),
            "roles": sorted(self.roles),
            "extensions": sorted(self.extensions),
            "plugins": sorted(self.plugins),
        }


class FakeBackend:
    """In-process backend driven by a canned rule program.

    Program format (JSON)::

        {"version": "fake-program-1",
         "backend_version": "8.0.23",
         "rules": [
            {"match": "<regex over the whitespace-squashed statement>",
             "requires_prior": "<regex over earlier statements this run>",
             "unless_prior": "<regex>",
             "requires_global": {"var": "...", "value": "..."},
             "unless_global": {"var": "...", "value": "..."},
             "result": {"status": "ok|error|crash|timeout|connection_lost",
                        "code": "1418", "message": "...",
                        "signal": 11, "frames": ["..."]}}
         ],
         "default": {"status": "ok"}}

    Rules are tried in order; the first whose conditions hold decides the
    statement's result.  Statements that succeed also update the modelled
    server state (schema objects, globals, roles, ...), which is what the
    cleanup actions later restore.
    """

    kind = "scripted_fake"

    def __init__(
        self,
        backend_id: str,
        program: dict[str, Any] | None = None,
        dialect: str = "generic",
    ):
        program = program or {}
        self.backend_id = backend_id
        self.dialect = dialect
        self.version = str(program.get("backend_version", "fake-0"))
        self.stop_on_error = bool(program.get("stop_on_error", True))
        self._rules = [dict(rule) for rule in program.get("rules", [])]
        self._default = dict(program.get("default", {"status": "ok"}))
        self.state = BackendState.ABSENT
        self._server = _FakeState()
        self._baseline: dict[str, Any] | None = None

    @classmethod
    def from_program_file(cls, backend_id: str, path: Path | str, dialect: str = "generic") -> "FakeBackend":
        return cls(backend_id, json.loads(Path(path).read_text("utf-8")), dialect=dialect)

    # -- lifecycle --------------------------------------------------------

    def provision(self) -> None:
        if self.state is not BackendState.ABSENT:
            raise LifecycleViolation(f"{self.backend_id}: provision from {self.state.value}")
        self.state = BackendState.PROVISIONED
        self._server = _FakeState()
        self._baseline = self._server.snapshot()
        self.health_check()

    def health_check(self) -> None:
        if self.state is BackendState.ABSENT:
            raise LifecycleViolation(f"{self.backend_id}: health check on a torn-down backend")
        if self.state is BackendState.DEGRADED:
            raise HealthCheckFailed(f"{self.backend_id} is degraded; run a cleanup first")
        self.state = BackendState.HEALTHY

    def teardown(self) -> None:
        self.state = BackendState.ABSENT
        self._baseline = None

    def observable_state(self) -> dict[str, Any]:
        """Snapshot of the modelled server state, in normal form."""
        return self._server.snapshot()

    def post_provision_state(self) -> dict[str, Any]:
        if self._baseline is None:
            raise LifecycleViolation(f"{self.backend_id} has never been provisioned")
        return dict(self._baseline)

    # -- execution ---------------------------------------------------------

    def dry_run(self, statements: list[str]) -> list[dict[str, Any]]:
        """Syntax-only validation pass; nothing executes, no state moves."""
        report = []
        for idx, statement in enumerate(statements):
            ok = is_subject_line(statement.strip())
            report.append(
                {
                    "index": idx,
                    "ok": ok,
                    "issue": None if ok else "does not start with a statement keyword",
                }
            )
        return report

    def _rule_result(self, statement: str, executed: list[str]) -> dict[str, Any]:
        flat = " ".join(statement.split())
        history = "\n".join(executed)
        for rule in self._rules:
            if not re.search(rule["match"], flat, re.IGNORECASE):
                continue
            if rule.get("requires_prior") and not re.search(
                rule["requires_prior"], history, re.IGNORECASE
            ):
                continue
            if rule.get("unless_prior") and re.search(
                rule["unless_prior"], history, re.IGNORECASE
            ):
                continue
            cond = rule.get("requires_global")
            if cond and self._server.global_vars.get(cond["var"]) != _norm_value(
                str(cond["value"])
            ):
                continue
            cond = rule.get("unless_global")
            if cond and self._server.global_vars.get(cond["var"]) == _norm_value(
                str(cond["value"])
            ):
                continue
            return dict(rule["result"])
        return dict(self._default)

    def _apply_effect(self, statement: str) -> None:
        verb = statement_verb(statement)
        if verb is None:
            return
        m = SET_GLOBAL_RE.match(statement)
        if m:
            self._server.global_vars[m.group(1).lower()] = _norm_value(m.group(2))
            return
        m = ALTER_SYSTEM_RE.match(statement)
        if m:
            self._server.persisted_config[m.group(1).lower()] = _norm_value(m.group(2))
            return
        m = INSERT_RE.match(statement)
        if m:
            table = m.group(1).lower()
            if ("table", table) in self._server.schema_objects:
                self._server.rows[table] = self._server.rows.get(table, 0) + 1
            return
        target = _object_target(statement)
        if target is None:
            return
        kind, name = target
        if kind in ("role", "user"):
            bucket: set[Any] = self._server.roles
            key: Any = name
        elif kind == "extension":
            bucket = self._server.extensions
            key = name
        else:
            bucket = self._server.schema_objects
            key = (kind, name)
        if verb == "create":
            bucket.add(key)
        elif verb == "drop":
            bucket.discard(key)
            if kind == "table":
                self._server.rows.pop(name, None)

    def run_script(self, statements: list[str], timeout: float = DEFAULT_TIMEOUT) -> ExecutionOutcome:
        if self.state is not BackendState.HEALTHY:
            raise BackendUnhealthy(f"{self.backend_id} is {self.state.value}, not healthy")
        started = time.monotonic()
        results: list[StatementResult] = []
        executed: list[str] = []
        kind = OutcomeKind.CLEAN
        code = message = None
        signal = None
        frames: list[str] = []
        for idx, statement in enumerate(statements):
            result = self._rule_result(statement, executed)
            status = result.get("status", "ok")
            if status == "ok":
                results.append(StatementResult(index=idx, statement=statement, status="ok"))
                self._apply_effect(statement)
                executed.append(statement)
                continue
            results.append(
                StatementResult(
                    index=idx,
                    statement=statement,
                    status="error" if status == "error" else status,
                    code=str(result["code"]) if result.get("code") is not None else None,
                    message=result.get("message"),
                )
            )
            code = str(result["code"]) if result.get("code") is not None else None
            message = result.get("message")
            if status == "error":
                kind = OutcomeKind.ERROR
                if self.stop_on_error:
                    break
                executed.append(statement)
                continue
            if status == "crash":
                kind = OutcomeKind.CRASH
                signal = result.get("signal")
                frames = list(result.get("frames", []))
                self.state = BackendState.DEGRADED
            elif status == "timeout":
                kind = OutcomeKind.TIMEOUT
            elif status == "connection_lost":
                kind = OutcomeKind.CONNECTION_LOST
                self.state = BackendState.DEGRADED
            else:
                raise ConfigError(f"fake program produced unknown status {status!r}")
            break
        return ExecutionOutcome(
            kind=kind,
            statement_results=results,
            duration=time.monotonic() - started,
            backend_id=self.backend_id,
            backend_version=self.version,
            code=code,
            message=message,
            signal=signal,
            frames=frames,
            timeout_limit=timeout if kind is OutcomeKind.TIMEOUT else None,
        )

    # -- cleanup ------------------------------------------------------------

    def apply_cleanup(self, action: CleanupAction) -> None:
        """Restore state; stronger actions subsume weaker ones."""
        if self.state is BackendState.ABSENT:
            raise LifecycleViolation(f"{self.backend_id}: cleanup on a torn-down backend")
        # clean_database: drop user schema objects and their data
        self._server.schema_objects.clear()
        self._server.rows.clear()
        if action in (CleanupAction.RESTART_AND_VERIFY, CleanupAction.REINSTALL_CONTAINER):
            # restart resets runtime globals; verification restores baseline
            # config even where it was persisted to disk
            self._server.global_vars.clear()
            self._server.persisted_config.clear()
            self._server.plugins.clear()
        if action is CleanupAction.REINSTALL_CONTAINER:
            self._server = _FakeState()
        self.state = BackendState.HEALTHY
        self.health_check()


class LiveBackend:
    """Containerized DBMS driven through shell command templates.

    The descriptor supplies the command lines (``provision``, ``health``,
    ``execute``, ``stop``, ``start``, ``teardown``, ``clean``) with
    ``{name}``, ``{image}`` and ``{sql}``/``{sql_quoted}`` placeholders.
    Statements run one at a time so per-statement results stay precise;
    an exec failure that looks like a lost connection degrades the backend.
    """

    kind = "containerized_live"

    def __init__(self, backend_id: str, descriptor: dict[str, Any]):
        self.backend_id = backend_id
        self.dialect = descriptor.get("dialect", "generic")
        self.version = str(descriptor.get("version", "unknown"))
        container = descriptor.get("container")
        if not container:
            raise ConfigError(f"{backend_id}: live backend needs a container section")
        self.container = dict(container)
        for key in ("provision", "health", "execute", "teardown"):
            if key not in self.container:
                raise ConfigError(f"{backend_id}: container template missing {key!r}")
        self.state = BackendState.ABSENT
        self.health_retries = int(descriptor.get("health_retries", 30))
        self.health_interval = float(descriptor.get("health_interval", 2.0))

    def _render(self, template: str, **extra: str) -> list[str]:
        values = {
            "name": self.container.get("name", self.backend_id),
            "image": self.container.get("image", ""),
            **extra,
        }
        return shlex.split(template.format(**values))

    def _run(self, template: str, timeout: float = 60.0, **extra: str) -> subprocess.CompletedProcess:
        return subprocess.run(
            self._render(template, **extra),
            capture_output=True,
            text=True,
            timeout=timeout,
        )

    def provision(self) -> None:
        if self.state is not BackendState.ABSENT:
            raise LifecycleViolation(f"{self.backend_id}: provision from {self.state.value}")
        proc = self._run(self.container["provision"], timeout=300.0)
        if proc.returncode != 0:
            raise ProvisioningFailure(
                f"{self.backend_id}: provision failed: {proc.stderr.strip()[:500]}"
            )
        self.state = BackendState.PROVISIONED
        for _ in range(self.health_retries):
            try:
                self.health_check()
                return
            except HealthCheckFailed:
                time.sleep(self.health_interval)
        raise ProvisioningFailure(f"{self.backend_id}: never became healthy")

    def health_check(self) -> None:
        if self.state is BackendState.ABSENT:
            raise LifecycleViolation(f"{self.backend_id}: health check on a torn-down backend")
        try:
            proc = self._run(self.container["health"], timeout=30.0)
        except subprocess.TimeoutExpired as exc:
            raise HealthCheckFailed(f"{self.backend_id}: health probe timed out") from exc
        if proc.returncode != 0:
            raise HealthCheckFailed(
                f"{self.backend_id}: health probe failed: {proc.stderr.strip()[:300]}"
            )
        self.state = BackendState.HEALTHY

    def run_script(self, statements: list[str], timeout: float = DEFAULT_TIMEOUT) -> ExecutionOutcome:
        if self.state is not BackendState.HEALTHY:
            raise BackendUnhealthy(f"{self.backend_id} is {self.state.value}, not healthy")
        started = time.monotonic()
        results: list[StatementResult] = []
        kind = OutcomeKind.CLEAN
        code = message = None
        for idx, statement in enumerate(statements):
            sql = statement.rstrip(";") + ";"
            try:
                proc = self._run(
                    self.container["execute"],
                    timeout=timeout,
                    sql=sql,
                    sql_quoted=shlex.quote(sql),
                )
            except subprocess.TimeoutExpired:
                results.append(
                    StatementResult(index=idx, statement=statement, status="timeout")
                )
                kind = OutcomeKind.TIMEOUT
                break
            if proc.returncode == 0:
                results.append(StatementResult(index=idx, statement=statement, status="ok"))
                continue
            stderr = proc.stderr.strip()
            lost = re.search(
                r"lost connection|server has gone away|connection refused|could not connect",
                stderr,
                re.IGNORECASE,
            )
            m = re.search(r"ERROR\s+(\d+)", stderr)
            code = m.group(1) if m else None
            message = stderr.splitlines()[0] if stderr else f"exit code {proc.returncode}"
            if lost:
                results.append(
                    StatementResult(
                        index=idx, statement=statement, status="crash", code=code, message=message
                    )
                )
                kind = OutcomeKind.CONNECTION_LOST
                self.state = BackendState.DEGRADED
            else:
                results.append(
                    StatementResult(
                        index=idx, statement=statement, status="error", code=code, message=message
                    )
                )
                kind = OutcomeKind.ERROR
            break
        return ExecutionOutcome(
            kind=kind,
            statement_results=results,
            duration=time.monotonic() - started,
            backend_id=self.backend_id,
            backend_version=self.version,
            code=code,
            message=message,
            timeout_limit=timeout if kind is OutcomeKind.TIMEOUT else None,
        )

    def apply_cleanup(self, action: CleanupAction) -> None:
        if self.state is BackendState.ABSENT:
            raise LifecycleViolation(f"{self.backend_id}: cleanup on a torn-down backend")
        if action is CleanupAction.REINSTALL_CONTAINER:
            self._run(self.container["teardown"], timeout=120.0)
            self.state = BackendState.ABSENT
            self.provision()
            return
        if action is CleanupAction.RESTART_AND_VERIFY:
            if "stop" in self.container:
                self._run(self.container["stop"], timeout=120.0)
            if "start" in self.container:
                self._run(self.container["start"], timeout=120.0)
            self.state = BackendState.PROVISIONED
            for _ in range(self.health_retries):
                try:
                    self.health_check()
                    break
                except HealthCheckFailed:
                    time.sleep(self.health_interval)
            else:
                raise HealthCheckFailed(f"{self.backend_id}: unhealthy after restart")
        if "clean" in self.container:
            proc = self._run(self.container["clean"], timeout=60.0)
            if proc.returncode != 0:
                raise HealthCheckFailed(
                    f"{self.backend_id}: database cleaning failed: {proc.stderr.strip()[:300]}"
                )
        self.health_check()

    def teardown(self) -> None:
        if self.state is not BackendState.ABSENT:
            self._run(self.container["teardown"], timeout=120.0)
        self.state = BackendState.ABSENT


def execute(
    backend: Backend,
    statements: list[str],
    timeout: float = DEFAULT_TIMEOUT,
) -> ExecutionOutcome:
    """Run a script and always leave the backend cleaned behind it.

    The cleanup is sized to the script's risk tier; a crash or lost
    connection escalates it to at least a restart so the next caller gets
    a verified-healthy backend.
    """
    backend.health_check()
    outcome = backend.run_script(statements, timeout)
    action = schedule_cleanup(assess_risk(statements))
    if outcome.kind in (OutcomeKind.CRASH, OutcomeKind.CONNECTION_LOST):
        if _CLEANUP_ORDER[action] < _CLEANUP_ORDER[CleanupAction.RESTART_AND_VERIFY]:
            action = CleanupAction.RESTART_AND_VERIFY
    backend.apply_cleanup(action)
    return outcome


class BackendPool:
    """Thread-safe lease manager over provisioned backend instances."""

    def __init__(self, backends: list[Backend]):
        if not backends:
            raise ExecutorUnavailable("backend pool is empty")
        self._free: list[Backend] = list(backends)
        self._cond = threading.Condition()

    def lease(self, timeout: float = 60.0) -> "_Lease":
        return _Lease(self, timeout)

    def _acquire(self, timeout: float) -> Backend:
        with self._cond:
            if not self._cond.wait_for(lambda: bool(self._free), timeout=timeout):
                raise ExecutorUnavailable("no backend instance became free in time")
            return self._free.pop(0)

    def _release(self, backend: Backend) -> None:
        with self._cond:
            self._free.append(backend)
            self._cond.notify()


class _Lease:
    def __init__(self, pool: BackendPool, timeout: float):
        self._pool = pool
        self._timeout = timeout
        self._backend: Backend | None = None

    def __enter__(self) -> Backend:
        self._backend = self._pool._acquire(self._timeout)
        return self._backend

    def __exit__(self, *exc: Any) -> None:
        if self._backend is not None:
            self._pool._release(self._backend)


def backend_from_descriptor(descriptor: dict[str, Any], base_dir: Path | None = None) -> Backend:
    """Build a backend from a config descriptor (kind decides the family)."""
    kind = descriptor.get("kind")
    name = descriptor.get("name", "backend")
    if kind == "scripted_fake":
        program: dict[str, Any] = {}
        if descriptor.get("program"):
            path = Path(descriptor["program"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            program = json.loads(path.read_text("utf-8"))
        elif descriptor.get("program_inline"):
            program = dict(descriptor["program_inline"])
        return FakeBackend(name, program, dialect=descriptor.get("dialect", "generic"))
    if kind == "containerized_live":
        return LiveBackend(name, descriptor)
    raise ConfigError(f"unknown backend kind {kind!r}")


def iter_pool(pool: BackendPool, scripts: list[list[str]], timeout: float = DEFAULT_TIMEOUT) -> Iterator[ExecutionOutcome]:
    """Execute scripts one after another against leased backends."""
    for script in scripts:
        with pool.lease() as backend:
            yield execute(backend, script, timeout)
