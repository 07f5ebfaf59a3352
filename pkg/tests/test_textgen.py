"""Scripted and HTTP text-generation clients plus the answer envelope."""

from __future__ import annotations

import json

import pytest

from pocmill.errors import ClientFailure
from pocmill.textgen import (
    Envelope,
    EnvelopeParseError,
    HttpJsonClient,
    ScriptedClient,
    client_from_descriptor,
    complete_enveloped,
    parse_envelope,
    request_hash,
)


def msgs(content: str):
    return [{"role": "user", "content": content}]


def test_request_hash_is_stable_and_order_sensitive():
    a = [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}]
    assert request_hash(a) == request_hash([dict(m) for m in a])
    assert request_hash(a) != request_hash(list(reversed(a)))


def test_parse_envelope_statements():
    env = parse_envelope("STATEMENTS:\nSELECT 1;\nSELECT 2;")
    assert env.tag == "statements"
    assert env.statements == ["SELECT 1", "SELECT 2"]


def test_parse_envelope_statements_with_rename_and_expected():
    env = parse_envelope(
        "STATEMENTS:\n"
        "RENAME: enable_frobnicate -> enable_seqscan\n"
        "SET enable_seqscan = on;\n"
        "EXPECTED: ERROR: could not read block 0\n"
        "SELECT 1;"
    )
    assert env.renames == {"enable_frobnicate": "enable_seqscan"}
    assert env.expected == "ERROR: could not read block 0"
    assert env.statements == ["SET enable_seqscan = on", "SELECT 1"]


def test_parse_envelope_strips_code_fences():
    env = parse_envelope("```sql\nSTATEMENTS:\nSELECT 1;\n```")
    assert env.statements == ["SELECT 1"]


def test_parse_envelope_other_tags():
    assert parse_envelope("INSUFFICIENT_CONTEXT").tag == "insufficient_context"
    env = parse_envelope("NON_EXTRACTABLE: just a discussion thread")
    assert env.tag == "non_extractable"
    assert env.reason == "just a discussion thread"


def test_parse_envelope_rejects_free_text():
    with pytest.raises(EnvelopeParseError):
        parse_envelope("I think you should add an index.")
    with pytest.raises(EnvelopeParseError):
        parse_envelope("STATEMENTS:\n-- nothing but a comment")


def test_complete_enveloped_retries_once_with_reminder():
    client = ScriptedClient({"sequence": ["free text", "STATEMENTS:\nSELECT 1;"]})
    env = complete_enveloped(client, msgs("do it"))
    assert env.statements == ["SELECT 1"]
    assert len(client.call_history) == 2
    retry_prompt = client.call_history[1]["messages"][-1]["content"]
    assert "do it" in retry_prompt and retry_prompt != "do it"


def test_complete_enveloped_gives_up_after_second_miss():
    client = ScriptedClient({"default": "still free text"})
    with pytest.raises(EnvelopeParseError):
        complete_enveloped(client, msgs("go"))


def test_scripted_client_by_hash_beats_patterns():
    request = msgs("hello")
    script = {
        "by_hash": {request_hash(request): "hash answer"},
        "by_pattern": [{"pattern": "hello", "response": "pattern answer"}],
    }
    assert ScriptedClient(script).complete(request) == "hash answer"


def test_scripted_client_pattern_order_and_responses_retire():
    script = {
        "by_pattern": [
            {"pattern": "ping", "responses": ["one", "two"]},
            {"pattern": "ping", "response": "fallthrough"},
        ]
    }
    client = ScriptedClient(script)
    assert client.complete(msgs("ping")) == "one"
    assert client.complete(msgs("ping")) == "two"
    assert client.complete(msgs("ping")) == "fallthrough"


def test_scripted_client_sequence_then_default_then_failure():
    client = ScriptedClient({"sequence": ["a"], "default": "d"})
    assert client.complete(msgs("x")) == "a"
    assert client.complete(msgs("y")) == "d"
    strict = ScriptedClient({})
    with pytest.raises(ClientFailure):
        strict.complete(msgs("z"))


def test_scripted_client_reset_restores_consumables():
    client = ScriptedClient({"by_pattern": [{"pattern": "p", "responses": ["only"]}], "default": "d"})
    assert client.complete(msgs("p")) == "only"
    assert client.complete(msgs("p")) == "d"
    client.reset()
    assert client.complete(msgs("p")) == "only"
    assert client.call_history[-1]["hash"] == request_hash(msgs("p"))


def test_http_client_requires_env_credential(monkeypatch):
    monkeypatch.delenv("POCMILL_API_KEY", raising=False)
    client = HttpJsonClient("http://localhost:1/v1/chat", model="m")
    with pytest.raises(ClientFailure, match="POCMILL_API_KEY"):
        client.complete(msgs("hi"))


def test_http_client_reads_named_env_var(monkeypatch):
    monkeypatch.delenv("OTHER_KEY", raising=False)
    client = HttpJsonClient("http://localhost:1/v1/chat", model="m", credential_env="OTHER_KEY")
    with pytest.raises(ClientFailure, match="OTHER_KEY"):
        client.complete(msgs("hi"))


def test_client_from_descriptor_scripted(tmp_path):
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"default": "ok"}), "utf-8")
    client = client_from_descriptor({"kind": "scripted", "script": "script.json"}, base_dir=tmp_path)
    assert client.complete(msgs("anything")) == "ok"


def test_client_from_descriptor_rejects_unknown_kind():
    with pytest.raises(Exception):
        client_from_descriptor({"kind": "telepathy"})


def test_envelope_dataclass_defaults():
    env = Envelope(tag="statements")
    assert env.statements == [] and env.renames == {} and env.expected is None
