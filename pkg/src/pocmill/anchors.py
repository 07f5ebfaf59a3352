"""Semantic anchors: what an adapted PoC must preserve from the original.

An anchor profile records the schema identifiers a PoC touches, the
multiset of clause-level operations it performs, and coarse query
patterns.  Three checks gate every adaptation candidate: the required
identifiers must survive (renames only through an explicit mapping), the
operation multiset must stay covered, and the token-level rewrite distance
must stay under a bound.  A PoC always passes against its own profile.
"""

from __future__ import annotations

from collections import Counter

from .models import AnchorProfile, ConstraintReport, QueryPattern
from .sqltext import (
    AGGREGATE_FUNCTIONS,
    CONFIG_VERBS,
    DDL_VERBS,
    DML_VERBS,
    TXN_VERBS,
    normalized_tokens,
    statement_identifiers,
    statement_operations,
    statement_verb,
    token_edit_distance,
    tokenize,
)

DEFAULT_REWRITE_BOUND = 0.4


def _has_aggregate_call(statement: str) -> bool:
    toks = [t for t in tokenize(statement) if t.kind != "comment"]
    for idx, tok in enumerate(toks[:-1]):
        if (
            tok.kind == "ident"
            and tok.value.lower() in AGGREGATE_FUNCTIONS
            and toks[idx + 1].value == "("
        ):
            return True
    return False


def _has_nested_select(statement: str) -> bool:
    depth = 0
    for tok in normalized_tokens(statement):
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth = max(0, depth - 1)
        elif tok == "select" and depth >= 1:
            return True
    return False


def statement_patterns(statement: str) -> set[QueryPattern]:
    """Query patterns of one statement, per the clause/verb rules.

    Clause-derived patterns win; ``dml`` is the fallback for a DML verb
    whose statement shows none of them, so ``SELECT 1`` is plain dml while
    a filtered, ordered query reports those shapes instead.
    """
    verb = statement_verb(statement)
    ops = Counter(statement_operations(statement))
    patterns: set[QueryPattern] = set()
    if ops.get("where") or ops.get("having"):
        patterns.add(QueryPattern.FILTERING)
    if ops.get("order_by"):
        patterns.add(QueryPattern.ORDERING)
    if ops.get("group_by"):
        patterns.add(QueryPattern.GROUPING)
    if ops.get("join"):
        patterns.add(QueryPattern.JOINING)
    if _has_aggregate_call(statement):
        patterns.add(QueryPattern.AGGREGATION)
    if _has_nested_select(statement):
        patterns.add(QueryPattern.SUBQUERY)
    if verb is None:
        return patterns
    toks = normalized_tokens(statement)
    if verb == "alter" and len(toks) >= 2 and toks[1] == "system":
        patterns.add(QueryPattern.CONFIG)
    elif verb in DDL_VERBS:
        patterns.add(QueryPattern.DDL)
    if verb in TXN_VERBS:
        patterns.add(QueryPattern.TXN)
    if verb in CONFIG_VERBS:
        patterns.add(QueryPattern.CONFIG)
    if verb in DML_VERBS and not patterns:
        patterns.add(QueryPattern.DML)
    return patterns


def capture_anchors(statements: list[str]) -> AnchorProfile:
    """Profile a statement list: dependencies, operations, patterns."""
    dependencies: set[str] = set()
    operations: Counter[str] = Counter()
    patterns: set[QueryPattern] = set()
    for statement in statements:
        dependencies |= statement_identifiers(statement)
        operations.update(statement_operations(statement))
        patterns |= statement_patterns(statement)
    return AnchorProfile(
        data_dependencies=dependencies,
        key_operations=dict(operations),
        query_patterns=patterns,
        source_tokens=normalized_tokens("\n".join(s.rstrip(";") + ";" for s in statements)),
    )


def check_constraints(
    statements: list[str],
    profile: AnchorProfile,
    beta: float = DEFAULT_REWRITE_BOUND,
    renames: dict[str, str] | None = None,
) -> ConstraintReport:
    """Evaluate the three preservation constraints for a candidate.

    ``renames`` is the explicit old->new mapping accumulated from repairs;
    a required identifier may be satisfied through it, never silently.
    """
    renames = renames or {}
    present_ids: set[str] = set()
    present_ops: Counter[str] = Counter()
    for statement in statements:
        present_ids |= statement_identifiers(statement)
        present_ops.update(statement_operations(statement))

    required_ids = set(profile.data_dependencies)
    missing = sorted(
        name
        for name in required_ids
        if name not in present_ids and renames.get(name) not in present_ids
    )
    anchor_match = {
        "required": sorted(required_ids),
        "present": sorted(present_ids),
        "missing": missing,
        "pass": not missing,
    }

    required_ops = dict(profile.key_operations)
    uncovered = {
        op: count
        for op, count in sorted(required_ops.items())
        if present_ops.get(op, 0) < count
    }
    key_coverage = {
        "required": dict(sorted(required_ops.items())),
        "present": dict(sorted(present_ops.items())),
        "uncovered": uncovered,
        "pass": not uncovered,
    }

    candidate_tokens = normalized_tokens("\n".join(s.rstrip(";") + ";" for s in statements))
    distance = token_edit_distance(profile.source_tokens, candidate_tokens)
    rewrite_bound = {"distance": distance, "beta": beta, "pass": distance <= beta}

    overall = anchor_match["pass"] and key_coverage["pass"] and rewrite_bound["pass"]
    return ConstraintReport(
        anchor_match=anchor_match,
        key_coverage=key_coverage,
        rewrite_bound=rewrite_bound,
        overall=overall,
    )
