"""Syntax-aware scanner that locates PoC text inside bug-report bodies.

The scan walks the body line by line and applies three capture stages in
priority order:

1. formatted blocks: anything between an opening and a closing block tag
   (code fences, ``<pre>`` pairs, configurable extras) is captured whole;
2. backtracked statements: a line holding an unquoted semicolon walks
   backwards, tracking the ``) - (`` balance, to the nearest line that both
   opens with a statement keyword and closes the balance;
3. scored lines: anything left is kept when its keyword score clears a
   threshold, with penalties pushing stack traces and log noise below it.

Lines consumed by a higher stage are never re-captured by a lower one, so
the resulting fragment index ranges are pairwise disjoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .models import CaptureStage, Fragment
from .sqltext import (
    SUBJECT_KEYWORDS,
    WORD_RE,
    is_subject_line,
    line_has_terminator,
    paren_delta,
)

DEFAULT_KEYWORD_WEIGHTS: dict[str, float] = {
    # statement verbs
    "select": 3.0,
    "insert": 3.0,
    "update": 3.0,
    "delete": 3.0,
    "create": 3.0,
    "alter": 3.0,
    "drop": 3.0,
    "truncate": 3.0,
    "replace": 3.0,
    "grant": 3.0,
    "revoke": 3.0,
    "explain": 3.0,
    "call": 3.0,
    "prepare": 3.0,
    "execute": 3.0,
    # clause carriers
    "set": 2.0,
    "where": 2.0,
    "from": 2.0,
    "join": 2.0,
    "into": 2.0,
    "values": 2.0,
    "table": 2.0,
    "view": 2.0,
    "index": 2.0,
    "function": 2.0,
    "trigger": 2.0,
    "procedure": 2.0,
    "database": 2.0,
    "union": 2.0,
    "having": 2.0,
    # weak hints
    "group": 1.0,
    "order": 1.0,
    "by": 1.0,
    "limit": 1.0,
    "distinct": 1.0,
    "begin": 1.0,
    "commit": 1.0,
    "rollback": 1.0,
    "declare": 1.0,
}

# Patterns that mark crash dumps, stack frames and log noise.  A pattern
# contributes its penalty once per line, however many times it matches.
DEFAULT_PENALTY_PATTERNS: dict[str, float] = {
    r"0x[0-9a-fA-F]+": 5.0,
    r"^\s*#\d+\s": 5.0,
    r"\bat\s+\S+:\d+": 3.0,
    r"^\s*Thread\s+\d+": 3.0,
    r"^\s*\(gdb\)": 4.0,
    r"(?i)\b(stack trace|backtrace|stacktrace)\b": 3.0,
    r"(?i)\bsignal\s+\d+\b": 3.0,
}

DEFAULT_BLOCK_TAGS: list[dict[str, str]] = [
    {"open": "```", "close": "```"},
    {"open": "<pre", "close": "</pre"},
]


@dataclass
class ScoringConfig:
    """Tunables for the scanner; the defaults suit tracker-style reports."""

    keyword_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_KEYWORD_WEIGHTS)
    )
    penalty_patterns: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_PENALTY_PATTERNS)
    )
    score_threshold: float = 4.0
    subject_keywords: frozenset[str] = SUBJECT_KEYWORDS
    block_tags: list[dict[str, str]] = field(
        default_factory=lambda: [dict(t) for t in DEFAULT_BLOCK_TAGS]
    )
    backtrack_window: int = 64

    def __post_init__(self) -> None:
        if self.score_threshold <= 0:
            raise ConfigError("score_threshold must be positive")
        if not self.subject_keywords:
            raise ConfigError("subject_keywords must be non-empty")
        if self.backtrack_window < 1:
            raise ConfigError("backtrack_window must be at least 1")
        for pattern in self.penalty_patterns:
            try:
                re.compile(pattern)
            except re.error as exc:
                raise ConfigError(f"bad penalty pattern {pattern!r}: {exc}") from exc
        for tag in self.block_tags:
            if not tag.get("open") or not tag.get("close"):
                raise ConfigError(f"block tag needs open and close prefixes: {tag!r}")
        self.subject_keywords = frozenset(k.lower() for k in self.subject_keywords)
        self.keyword_weights = {k.lower(): float(v) for k, v in self.keyword_weights.items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScoringConfig":
        kwargs: dict[str, Any] = {}
        if "keyword_weights" in data:
            kwargs["keyword_weights"] = {k: float(v) for k, v in data["keyword_weights"].items()}
        if "penalty_patterns" in data:
            kwargs["penalty_patterns"] = {k: float(v) for k, v in data["penalty_patterns"].items()}
        if "score_threshold" in data:
            kwargs["score_threshold"] = float(data["score_threshold"])
        if "subject_keywords" in data:
            kwargs["subject_keywords"] = frozenset(data["subject_keywords"])
        if "block_tags" in data:
            kwargs["block_tags"] = [dict(t) for t in data["block_tags"]]
        if "backtrack_window" in data:
            kwargs["backtrack_window"] = int(data["backtrack_window"])
        return cls(**kwargs)


def score_line(line: str, config: ScoringConfig) -> float:
    """Keyword-weight sum over the line's words minus noise penalties."""
    score = 0.0
    for word in WORD_RE.findall(line):
        score += config.keyword_weights.get(word.lower(), 0.0)
    for pattern, penalty in config.penalty_patterns.items():
        if re.search(pattern, line):
            score -= penalty
    return score


def _match_block_open(line: str, config: ScoringConfig) -> dict[str, str] | None:
    stripped = line.strip()
    for tag in config.block_tags:
        if stripped.lower().startswith(tag["open"].lower()):
            return tag
    return None


def _is_block_close(line: str, tag: dict[str, str]) -> bool:
    return line.strip().lower().startswith(tag["close"].lower())


def capture_formatted_block(
    body: list[str], start: int, config: ScoringConfig | None = None
) -> tuple[Fragment | None, int]:
    """Capture the block opened at ``start``; returns (fragment, resume index).

    The closing tag is the nearest matching line after the opener; with
    symmetric tags such as code fences that is simply the next fence.  When
    no closer exists the block is abandoned and scanning resumes at the
    opener itself, so the lines after it stay eligible for later stages.
    """
    config = config or ScoringConfig()
    tag = _match_block_open(body[start], config)
    if tag is None:
        return None, start
    for j in range(start + 1, len(body)):
        if _is_block_close(body[j], tag):
            lines = body[start + 1 : j]
            if not lines:
                return None, j
            fragment = Fragment(
                start_index=start + 1,
                lines=list(lines),
                capture_stage=CaptureStage.FORMATTED_BLOCK,
            )
            return fragment, j
    return None, start


def backtrack_statement(
    body: list[str],
    terminator_index: int,
    config: ScoringConfig | None = None,
    lower_bound: int = 0,
) -> Fragment | None:
    """Walk backwards from a terminator line to the statement's first line.

    The walk keeps a running ``) - (`` balance (counted outside strings and
    comments) and stops at the first line that opens with a statement
    keyword while the balance is closed.  It refuses to cross ``lower_bound``
    or to look further back than the configured window; if no such line
    exists there is no fragment.
    """
    config = config or ScoringConfig()
    if not line_has_terminator(body[terminator_index]):
        return None
    floor = max(lower_bound, terminator_index - config.backtrack_window + 1, 0)
    balance = 0
    j = terminator_index
    while j >= floor:
        balance += paren_delta(body[j])
        if balance <= 0 and is_subject_line(body[j], config.subject_keywords):
            return Fragment(
                start_index=j,
                lines=list(body[j : terminator_index + 1]),
                capture_stage=CaptureStage.BACKTRACKED_STATEMENT,
            )
        j -= 1
    return None


def process_report(body: list[str], config: ScoringConfig | None = None) -> list[Fragment]:
    """Run the three-stage scan over a report body.

    Returns fragments sorted by start index with pairwise-disjoint ranges;
    an empty list means nothing PoC-like was found.
    """
    config = config or ScoringConfig()
    fragments: list[Fragment] = []
    # End (exclusive) of the last block or backtracked fragment; stage two
    # never walks back across this line.
    consumed_until = 0
    i = 0
    while i < len(body):
        line = body[i]
        if _match_block_open(line, config) is not None:
            fragment, resume = capture_formatted_block(body, i, config)
            if fragment is not None:
                fragments.append(fragment)
            if resume > i:
                consumed_until = resume + 1
                i = resume
            # An unmatched opener falls through: the line is spent, but the
            # lines after it remain in play.
        else:
            fragment = None
            if line_has_terminator(line):
                fragment = backtrack_statement(body, i, config, lower_bound=consumed_until)
            if fragment is not None:
                # A multi-line statement may swallow lines stage three
                # already kept; the wider capture wins.
                fragments = [
                    f
                    for f in fragments
                    if not (
                        f.capture_stage is CaptureStage.SCORED_LINE
                        and fragment.start_index <= f.start_index
                        and f.end_index <= fragment.end_index
                    )
                ]
                fragments.append(fragment)
                consumed_until = i + 1
            else:
                # Terminator lines that fail to backtrack stay in play here:
                # prose with embedded statements still deserves a score.
                score = score_line(line, config)
                if score >= config.score_threshold:
                    fragments.append(
                        Fragment(
                            start_index=i,
                            lines=[line],
                            capture_stage=CaptureStage.SCORED_LINE,
                            score=score,
                        )
                    )
        i += 1
    fragments.sort(key=lambda f: f.start_index)
    return fragments
