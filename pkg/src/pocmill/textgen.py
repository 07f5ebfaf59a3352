"""Text-generation clients and the tagged answer envelope.

Model answers must arrive in exactly one of three envelopes::

    STATEMENTS:
    <SQL statements, semicolon-terminated>
    RENAME: old -> new        (optional lines, repairs only)

    INSUFFICIENT_CONTEXT

    NON_EXTRACTABLE: <short reason>

Anything else is a protocol violation; callers retry once with a format
reminder before giving up.  The scripted client used in tests and offline
runs replays canned responses from a small JSON script file.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from .errors import ClientFailure
from .sqltext import split_statements

STATEMENTS_TAG = "STATEMENTS:"
INSUFFICIENT_TAG = "INSUFFICIENT_CONTEXT"
NON_EXTRACTABLE_TAG = "NON_EXTRACTABLE"
RENAME_RE = re.compile(r"^RENAME:\s*(\S+)\s*->\s*(\S+)\s*$", re.IGNORECASE)

FORMAT_REMINDER = (
    "Your previous answer did not follow the required format. Reply with "
    "exactly one of: a STATEMENTS: block of semicolon-terminated SQL, the "
    "single line INSUFFICIENT_CONTEXT, or NON_EXTRACTABLE: <reason>."
)


class TextGenClient(Protocol):
    """Minimal completion interface every client implements."""

    def complete(self, messages: list[dict[str, str]]) -> str: ...


@dataclass
class Envelope:
    """A parsed model answer."""

    tag: str  # statements | insufficient_context | non_extractable
    statements: list[str] = field(default_factory=list)
    renames: dict[str, str] = field(default_factory=dict)
    reason: str = ""
    expected: str | None = None


class EnvelopeParseError(ClientFailure):
    """The model answer matched none of the three envelopes."""


def request_hash(messages: list[dict[str, str]]) -> str:
    """Stable 16-hex digest of a message list, for script files."""
    canon = "\n".join(f"{m['role']}:{m['content']}" for m in messages)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _strip_fences(text: str) -> str:
    lines = [line for line in text.splitlines() if not line.strip().startswith("```")]
    return "\n".join(lines)


def parse_envelope(text: str) -> Envelope:
    """Parse a model answer into an Envelope or raise EnvelopeParseError."""
    body = _strip_fences(text).strip()
    if not body:
        raise EnvelopeParseError("empty answer")
    lines = body.splitlines()
    for idx, line in enumerate(lines):
        stripped = line.strip()
        if stripped == INSUFFICIENT_TAG:
            return Envelope(tag="insufficient_context")
        if stripped.startswith(NON_EXTRACTABLE_TAG):
            reason = stripped[len(NON_EXTRACTABLE_TAG) :].lstrip(": ").strip()
            return Envelope(tag="non_extractable", reason=reason or "unspecified")
        if stripped.startswith(STATEMENTS_TAG):
            inline = stripped[len(STATEMENTS_TAG) :].strip()
            block_lines = ([inline] if inline else []) + lines[idx + 1 :]
            renames: dict[str, str] = {}
            expected: str | None = None
            sql_lines: list[str] = []
            for raw in block_lines:
                m = RENAME_RE.match(raw.strip())
                if m:
                    renames[m.group(1).lower()] = m.group(2).lower()
                    continue
                if raw.strip().upper().startswith("EXPECTED:"):
                    expected = raw.strip()[len("EXPECTED:") :].strip()
                    continue
                sql_lines.append(raw)
            statements = split_statements("\n".join(sql_lines))
            if not statements:
                raise EnvelopeParseError("STATEMENTS block holds no statements")
            return Envelope(
                tag="statements", statements=statements, renames=renames, expected=expected
            )
    raise EnvelopeParseError("answer carries none of the known tags")


def complete_enveloped(client: TextGenClient, messages: list[dict[str, str]]) -> Envelope:
    """Ask the client and parse the envelope, retrying once on free text."""
    answer = client.complete(messages)
    try:
        return parse_envelope(answer)
    except EnvelopeParseError:
        retry = list(messages)
        retry[-1] = {
            "role": retry[-1]["role"],
            "content": retry[-1]["content"] + "\n\n" + FORMAT_REMINDER,
        }
        return parse_envelope(client.complete(retry))


class ScriptedClient:
    """Deterministic client that replays canned responses.

    Resolution order for each request: exact request-hash entries, then
    pattern entries (regex searched over the concatenated message contents,
    in file order; an entry with a ``responses`` list is consumed one
    answer per hit and then retires), then a global ``sequence``, then
    ``default``.  A miss raises ClientFailure and the request is recorded
    in ``call_history`` either way.
    """

    def __init__(self, script: dict[str, Any] | None = None):
        script = script or {}
        self.by_hash: dict[str, str] = dict(script.get("by_hash", {}))
        self.patterns: list[dict[str, Any]] = [dict(p) for p in script.get("by_pattern", [])]
        self.sequence: list[str] = list(script.get("sequence", []))
        self.default: str | None = script.get("default")
        self.call_history: list[dict[str, Any]] = []
        self._sequence_pos = 0

    @classmethod
    def from_file(cls, path: Path | str) -> "ScriptedClient":
        data = json.loads(Path(path).read_text("utf-8"))
        return cls(data)

    def reset(self) -> None:
        self.call_history.clear()
        self._sequence_pos = 0
        for entry in self.patterns:
            entry.pop("_consumed", None)

    def complete(self, messages: list[dict[str, str]]) -> str:
        digest = request_hash(messages)
        joined = "\n".join(m["content"] for m in messages)
        self.call_history.append({"hash": digest, "messages": messages})
        if digest in self.by_hash:
            return self.by_hash[digest]
        for entry in self.patterns:
            if not re.search(entry["pattern"], joined, re.IGNORECASE | re.DOTALL):
                continue
            if "responses" in entry:
                used = entry.get("_consumed", 0)
                if used >= len(entry["responses"]):
                    continue
                entry["_consumed"] = used + 1
                return entry["responses"][used]
            return entry["response"]
        if self._sequence_pos < len(self.sequence):
            answer = self.sequence[self._sequence_pos]
            self._sequence_pos += 1
            return answer
        if self.default is not None:
            return self.default
        raise ClientFailure(f"scripted client has no response for request {digest}")


class HttpJsonClient:
    """Plain JSON-over-HTTP chat client.

    Posts ``{"model": ..., "messages": [...]}`` and reads the first choice
    text from an OpenAI-style response body.  The API key comes from the
    environment variable named in the constructor and is never persisted.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = "POCMILL_API_KEY",
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env
        self.timeout = timeout

    def complete(self, messages: list[dict[str, str]]) -> str:
        key = os.environ.get(self.credential_env, "")
        if not key:
            raise ClientFailure(
                f"no credential in ${self.credential_env}; set it before using the HTTP client"
            )
        body = json.dumps({"model": self.model, "messages": messages}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint,
            data=body,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {key}",
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except Exception as exc:  # urllib raises a small zoo of types
            raise ClientFailure(f"completion request failed: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ClientFailure(f"unexpected completion response shape: {exc}") from exc


def client_from_descriptor(desc: dict[str, Any], base_dir: Path | None = None) -> TextGenClient:
    """Build a client from a config descriptor: kind scripted|http."""
    kind = desc.get("kind")
    if kind == "scripted":
        path = Path(desc["script"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return ScriptedClient.from_file(path)
    if kind == "http":
        return HttpJsonClient(
            endpoint=desc["endpoint"],
            model=desc["model"],
            credential_env=desc.get("credential_env", "POCMILL_API_KEY"),
            timeout=float(desc.get("timeout", 60.0)),
        )
    raise ClientFailure(f"unknown client kind {kind!r}")
