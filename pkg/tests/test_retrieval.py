"""Hashing embedder, rank fusion and the exemplar library."""

from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pocmill.models import MODEL_INFERRED, Exemplar, Polarity, RawPoC
from pocmill.retrieval import (
    EMBED_DIM,
    ExemplarLibrary,
    cosine,
    embed_text,
    fuse_rankings,
    keyword_profile,
    keyword_score,
    load_seed_exemplars,
    retrieve_exemplars,
)


def exemplar(eid: str, text: str, polarity: Polarity = Polarity.POSITIVE) -> Exemplar:
    poc = None
    if polarity is Polarity.POSITIVE:
        poc = RawPoC(
            statements=["SELECT 1"],
            report_id=eid,
            provenance={0: MODEL_INFERRED},
            expected_behavior=None,
            expected_source="none",
        )
    return Exemplar(
        id=eid,
        report_summary=text[:40],
        fragments_digest="0" * 16,
        raw_poc=poc,
        reasoning_trace=["kept for its texture"] if polarity is Polarity.NEGATIVE else [],
        polarity=polarity,
        dense_vector=embed_text(text),
        keywords=keyword_profile(text),
    )


def test_embed_text_is_deterministic_and_normalized():
    a = embed_text("SELECT a FROM t WHERE a > 0")
    b = embed_text("SELECT a FROM t WHERE a > 0")
    assert a == b
    assert len(a) == EMBED_DIM
    assert math.isclose(sum(x * x for x in a), 1.0, rel_tol=1e-9)


def test_embed_text_separates_unrelated_texts():
    base = embed_text("ERROR 1418 binary logging stored function")
    near = embed_text("binary logging blocks stored function creation ERROR 1418")
    far = embed_text("vacuum bloat estimate standby replication lag")
    assert cosine(base, near) > cosine(base, far)


def test_keyword_profile_and_score():
    profile = keyword_profile("select a from t1 where a > 0")
    assert profile["select"] >= 1 and profile["t1"] >= 1
    query = keyword_profile("select from t1")
    assert keyword_score(query, profile) > keyword_score(query, keyword_profile("vacuum pg"))


def test_fuse_rankings_rewards_agreement():
    fused = fuse_rankings([["a", "b", "c"], ["a", "c", "b"]])
    assert fused[0][0] == "a"
    ids = [i for i, _ in fused]
    assert set(ids) == {"a", "b", "c"}


def test_fuse_rankings_ties_break_on_id():
    fused = fuse_rankings([["b"], ["a"]])
    assert [i for i, _ in fused] == ["a", "b"]


@given(st.lists(st.lists(st.sampled_from(["a", "b", "c", "d"]), unique=True), max_size=4))
def test_fuse_rankings_scores_are_positive_and_sorted(rankings):
    fused = fuse_rankings(rankings)
    scores = [s for _, s in fused]
    assert all(s > 0 for s in scores)
    assert scores == sorted(scores, reverse=True)


def test_library_add_get_contains():
    library = ExemplarLibrary(cap=4)
    library.add(exemplar("e1", "select one"))
    assert "e1" in library and library.get("e1").id == "e1"
    assert len(library) == 1


def test_library_evicts_least_recently_retrieved():
    library = ExemplarLibrary(cap=2)
    library.add(exemplar("e1", "one"))
    library.add(exemplar("e2", "two"))
    library.touch(["e2"])
    library.add(exemplar("e3", "three"))
    assert "e1" not in library
    assert "e2" in library and "e3" in library


def test_library_eviction_tie_breaks_on_oldest_id():
    library = ExemplarLibrary(cap=2)
    library.add(exemplar("e2", "two"))
    library.add(exemplar("e1", "one"))
    library.add(exemplar("e3", "three"))
    assert "e1" not in library and "e2" in library


def test_library_save_load_roundtrip(tmp_path):
    library = ExemplarLibrary(cap=8)
    library.add(exemplar("e1", "select a from t"))
    library.add(exemplar("n1", "prompt residue", Polarity.NEGATIVE))
    library.touch(["e1"])
    path = tmp_path / "library.json"
    library.save(path)

    loaded = ExemplarLibrary.load(path)
    assert sorted(e.id for e in loaded.exemplars()) == ["e1", "n1"]
    assert [e.id for e in loaded.negatives()] == ["n1"]
    assert loaded.get("e1").last_retrieved == library.get("e1").last_retrieved


def test_library_load_rejects_unknown_schema(tmp_path):
    path = tmp_path / "library.json"
    path.write_text('{"schema": "other", "exemplars": []}', "utf-8")
    with pytest.raises(ValueError):
        ExemplarLibrary.load(path)


def test_library_cap_must_be_positive():
    with pytest.raises(ValueError):
        ExemplarLibrary(cap=0)


def test_seed_exemplars_load_and_shape():
    library = load_seed_exemplars()
    assert len(library) >= 8
    polarities = {e.polarity for e in library.exemplars()}
    assert polarities == {Polarity.POSITIVE, Polarity.NEGATIVE}
    for e in library.exemplars():
        assert e.dense_vector and e.keywords
        if e.polarity is Polarity.POSITIVE:
            assert e.raw_poc is not None and e.raw_poc.statements


def test_retrieve_exemplars_ranks_related_first_and_includes_negative():
    library = load_seed_exemplars()
    context = (
        "CREATE FUNCTION f1() RETURNS INT RETURN 1; SELECT f1(); "
        "ERROR 1418 binary logging enabled log_bin_trust_function_creators"
    )
    picked = retrieve_exemplars(context, k=4, library=library)
    assert len(picked) == 4
    assert picked[0].id == "seed-mysql-binlog-function"
    assert any(e.polarity is Polarity.NEGATIVE for e in picked)


def test_retrieve_exemplars_touches_picked():
    library = load_seed_exemplars()
    before = {e.id: e.last_retrieved for e in library.exemplars()}
    picked = retrieve_exemplars("select 1", k=2, library=library)
    for e in picked:
        assert library.get(e.id).last_retrieved > before[e.id]
