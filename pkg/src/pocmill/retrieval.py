"""Hybrid exemplar retrieval: dense vectors plus keyword overlap, fused.

The dense side uses a deterministic feature-hashing embedder (no model
weights, no network), which keeps offline runs reproducible while leaving
room to swap in a served embedding model behind the same interface.  The
keyword side is a TF-weighted overlap that leans on SQL keywords, error
codes and symptom words.  Rankings are fused with reciprocal-rank fusion.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path
from typing import Iterable, Sequence

from .models import Exemplar, Polarity
from .sqltext import KEYWORDS

EMBED_DIM = 64
RRF_K = 60
LIBRARY_SCHEMA = "exemplar-library-1"
DEFAULT_LIBRARY_CAP = 256

TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+")
# Error codes: "ERROR 1418", SQLSTATE-style 5-char codes (must carry a
# digit, so plain words stay out), and errno mentions.
ERROR_CODE_RE = re.compile(
    r"\bERROR\s+\d+\b|\b(?=[0-9A-Z]{5}\b)[0-9A-Z]*\d[0-9A-Z]*\b|\berrno\s*=?\s*\d+",
    re.IGNORECASE,
)

SYMPTOM_WORDS = frozenset(
    """
    abort assertion backtrace corrupt corruption crash crashed deadlock
    disconnect error exception fail failed failure fatal hang hung leak lost
    malformed overflow packet panic segfault segmentation signal stall
    timeout unexpected wrong
    """.split()
)

# Relative emphasis inside the keyword ranking.
WEIGHT_ERROR_CODE = 4.0
WEIGHT_SQL_KEYWORD = 2.0
WEIGHT_SYMPTOM = 3.0
WEIGHT_PLAIN = 1.0


def embed_text(text: str, dim: int = EMBED_DIM) -> list[float]:
    """Deterministic feature-hashing embedding, L2-normalized.

    Each token lands in a bucket chosen by its digest, with a digest-chosen
    sign; equal texts embed equally on every platform.
    """
    vec = [0.0] * dim
    for token in TOKEN_RE.findall(text.lower()):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        vec[bucket] += sign
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0.0:
        return vec
    return [v / norm for v in vec]


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError("vector length mismatch")
    return sum(x * y for x, y in zip(a, b))


def keyword_profile(text: str) -> dict[str, int]:
    """Term-frequency profile of the retrieval-relevant tokens in a text."""
    profile: dict[str, int] = {}
    for code in ERROR_CODE_RE.findall(text):
        key = "code:" + re.sub(r"\s+", " ", code.strip().lower())
        profile[key] = profile.get(key, 0) + 1
    for token in TOKEN_RE.findall(text.lower()):
        profile[token] = profile.get(token, 0) + 1
    return profile


def _term_weight(term: str) -> float:
    if term.startswith("code:"):
        return WEIGHT_ERROR_CODE
    if term in SYMPTOM_WORDS:
        return WEIGHT_SYMPTOM
    if term in KEYWORDS:
        return WEIGHT_SQL_KEYWORD
    return WEIGHT_PLAIN


def keyword_score(query: dict[str, int], exemplar: dict[str, int]) -> float:
    """TF-weighted overlap between two keyword profiles."""
    score = 0.0
    for term, qcount in query.items():
        ecount = exemplar.get(term, 0)
        if ecount:
            score += _term_weight(term) * qcount * ecount
    return score


def fuse_rankings(rankings: list[list[str]], k: int = RRF_K) -> list[tuple[str, float]]:
    """Reciprocal-rank fusion over id rankings; ties break on id.

    An id absent from one ranking simply contributes nothing for it.  An id
    ranked first everywhere is guaranteed the top fused slot.
    """
    scores: dict[str, float] = {}
    for ranking in rankings:
        for rank, item in enumerate(ranking, start=1):
            scores[item] = scores.get(item, 0.0) + 1.0 / (k + rank)
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


class ExemplarLibrary:
    """Bounded exemplar store with usage-ordered eviction.

    The library tracks a logical clock; every retrieval stamps the
    exemplars it returned.  When an insert would exceed the cap, the
    exemplar with the stalest stamp (oldest id on ties) is evicted.
    """

    def __init__(self, cap: int = DEFAULT_LIBRARY_CAP):
        if cap < 1:
            raise ValueError("library cap must be positive")
        self.cap = cap
        self._by_id: dict[str, Exemplar] = {}
        self._clock = 0

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, exemplar_id: str) -> bool:
        return exemplar_id in self._by_id

    def get(self, exemplar_id: str) -> Exemplar:
        return self._by_id[exemplar_id]

    def exemplars(self) -> list[Exemplar]:
        return [self._by_id[i] for i in sorted(self._by_id)]

    def negatives(self) -> list[Exemplar]:
        return [e for e in self.exemplars() if e.polarity is Polarity.NEGATIVE]

    def add(self, exemplar: Exemplar) -> None:
        """Insert or replace; evicts the least recently retrieved at cap."""
        if exemplar.id not in self._by_id and len(self._by_id) >= self.cap:
            victim = min(self._by_id.values(), key=lambda e: (e.last_retrieved, e.id))
            del self._by_id[victim.id]
        self._by_id[exemplar.id] = exemplar

    def touch(self, ids: Iterable[str]) -> None:
        self._clock += 1
        for exemplar_id in ids:
            if exemplar_id in self._by_id:
                self._by_id[exemplar_id].last_retrieved = self._clock

    # -- persistence -----------------------------------------------------

    def save(self, path: Path | str) -> None:
        payload = {
            "schema": LIBRARY_SCHEMA,
            "cap": self.cap,
            "clock": self._clock,
            "exemplars": [e.to_dict() for e in self.exemplars()],
        }
        Path(path).write_text(
            json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", "utf-8"
        )

    @classmethod
    def load(cls, path: Path | str) -> "ExemplarLibrary":
        data = json.loads(Path(path).read_text("utf-8"))
        if data.get("schema") != LIBRARY_SCHEMA:
            raise ValueError(f"unsupported library schema {data.get('schema')!r}")
        library = cls(cap=int(data.get("cap", DEFAULT_LIBRARY_CAP)))
        library._clock = int(data.get("clock", 0))
        for entry in data.get("exemplars", []):
            library.add(Exemplar.from_dict(entry))
        return library


def load_seed_exemplars(path: Path | str | None = None, cap: int = DEFAULT_LIBRARY_CAP) -> ExemplarLibrary:
    """Bootstrap a library from the packaged curated exemplars.

    The seed file stores source text rather than vectors; embeddings and
    keyword profiles are computed here so they always match the current
    embedder.
    """
    from importlib import resources

    from .models import MODEL_INFERRED, RawPoC

    if path is None:
        text = (resources.files("pocmill.data") / "seed_exemplars.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    data = json.loads(text)
    if data.get("schema") != "seed-exemplars-1":
        raise ValueError(f"unsupported seed schema {data.get('schema')!r}")
    library = ExemplarLibrary(cap=cap)
    for entry in data["exemplars"]:
        source_text = entry["source_text"]
        polarity = Polarity(entry["polarity"])
        poc = None
        if polarity is Polarity.POSITIVE:
            expected = entry.get("expected")
            poc = RawPoC(
                statements=list(entry["statements"]),
                report_id=entry["id"],
                provenance={i: MODEL_INFERRED for i in range(len(entry["statements"]))},
                expected_behavior=expected,
                expected_source="rules" if expected else "none",
            )
        library.add(
            Exemplar(
                id=entry["id"],
                report_summary=entry["summary"],
                fragments_digest=hashlib.sha256(source_text.encode("utf-8")).hexdigest()[:16],
                raw_poc=poc,
                reasoning_trace=list(entry.get("trace", [])),
                polarity=polarity,
                dense_vector=embed_text(source_text),
                keywords=keyword_profile(source_text),
            )
        )
    return library


def retrieve_exemplars(
    context: str,
    k: int,
    library: ExemplarLibrary,
    ensure_negative: bool = True,
) -> list[Exemplar]:
    """Top-k exemplars for a query context under hybrid retrieval.

    Dense and keyword rankings are fused with RRF.  When the library holds
    any negative exemplar and k is at least 2, the result always carries at
    least one: the lowest-fused pick is swapped for the best negative if
    none made the cut.  Retrieved exemplars get their usage stamp bumped.
    """
    if k < 1:
        raise ValueError("k must be positive")
    pool = library.exemplars()
    if not pool:
        return []
    query_vec = embed_text(context)
    query_kw = keyword_profile(context)
    dense_ranked = [
        e.id
        for e in sorted(pool, key=lambda e: (-cosine(query_vec, e.dense_vector), e.id))
    ]
    keyword_ranked = [
        e.id
        for e in sorted(pool, key=lambda e: (-keyword_score(query_kw, e.keywords), e.id))
    ]
    fused = fuse_rankings([dense_ranked, keyword_ranked])
    picked = [library.get(item) for item, _ in fused[:k]]
    if ensure_negative and k >= 2:
        negatives = library.negatives()
        if negatives and not any(e.polarity is Polarity.NEGATIVE for e in picked):
            fused_rank = {item: idx for idx, (item, _) in enumerate(fused)}
            best_negative = min(negatives, key=lambda e: fused_rank.get(e.id, len(fused_rank)))
            picked[-1] = best_negative
    library.touch(e.id for e in picked)
    return picked
