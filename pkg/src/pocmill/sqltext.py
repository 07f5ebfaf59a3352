"""Dialect-light SQL text utilities.

The lexer here is deliberately shallow: enough to split statements, spot
unquoted terminators, and pull identifiers and clause keywords out of
mostly-well-formed SQL without committing to any single vendor grammar.
The report fragment scanner, the extraction self-checks, and the semantic
anchor machinery all build on these helpers, so behaviour changes ripple.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

IDENT_START = re.compile(r"[A-Za-z_]")
IDENT_BODY = re.compile(r"[A-Za-z0-9_$]")
WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

# Multi-character operators checked before single characters.
MULTI_OPS = ("<=>", "->>", "<=", ">=", "<>", "!=", "||", ":=", "->", "::")

KEYWORDS = frozenset(
    """
    add after all alter analyze and any as asc before begin between bigint
    blob bool boolean by call cascade case cast char check cluster collate
    column commit constraint copy create cross current database date datetime
    decimal declare default definer delete desc deterministic discard
    distinct do double drop each else end escape every except execute exists
    explain extension fetch float flush for foreign from full function global
    grant group having if ignore in index inner insert install instead int
    integer intersect interval into is join key language left like limit
    load local lock match modify natural no not null numeric of offset on
    only option or order outer over partition plugin precision prepare
    primary procedure real recursive references reindex rename repeatable
    replace reset restrict return returns revoke right role rollback row
    rows savepoint schema select sequence session set show smallint some
    soname sql start system table temp temporary text then time timestamp
    tinyint to transaction trigger truncate twophase union unique unlock
    uninstall unsigned update usage use user using vacuum values varchar
    view when where while with work zerofill
    """.split()
)

# Common builtins that should not be treated as schema-level identifiers.
BUILTIN_FUNCTIONS = frozenset(
    """
    abs avg ceil ceiling coalesce concat count floor greatest ifnull least
    length lower ltrim max md5 min mod now nullif pow power rand random
    round rtrim sign sqrt substr substring sum trim upper
    """.split()
)

AGGREGATE_FUNCTIONS = frozenset("avg count group_concat max min sum".split())

# Keywords that can legitimately open a SQL statement.  A line whose first
# word is one of these is treated as the start of a statement when the
# scanner walks backwards from a terminator.
SUBJECT_KEYWORDS = frozenset(
    """
    alter analyze begin call commit create delete drop execute explain flush
    grant insert lock prepare rename replace revoke rollback select set show
    truncate unlock update use values with
    """.split()
)

# Per-dialect statement openers, used by the cross-replay pre-filter.  The
# base set covers statements every supported engine accepts; each dialect
# adds its own extensions.
DIALECT_SUBJECTS: dict[str, frozenset[str]] = {
    "generic": SUBJECT_KEYWORDS,
    "mysql": SUBJECT_KEYWORDS | frozenset("check install kill load reset uninstall".split()),
    "mariadb": SUBJECT_KEYWORDS | frozenset("check install kill load reset uninstall".split()),
    "postgresql": SUBJECT_KEYWORDS
    | frozenset("abort cluster copy discard listen notify reindex reset vacuum".split()),
    "monetdb": SUBJECT_KEYWORDS | frozenset("copy declare merge plan trace".split()),
    "sqlite": SUBJECT_KEYWORDS | frozenset("attach detach pragma reindex vacuum".split()),
}

# Clause-level keywords counted by the semantic anchors.  FROM is absent on
# purpose: the table behind it shows up as a data dependency instead.
CLAUSE_OPERATIONS = frozenset(
    """
    alter case create delete distinct drop except exists group_by having
    insert intersect join limit offset order_by rename select set truncate
    union update values where with
    """.split()
)

DML_VERBS = frozenset("call delete execute insert replace select update values with".split())
DDL_VERBS = frozenset("alter create drop rename truncate".split())
TXN_VERBS = frozenset("begin commit lock rollback savepoint start unlock".split())
CONFIG_VERBS = frozenset("flush install reset set uninstall".split())

OBJECT_TYPE_WORDS = frozenset(
    """
    database event extension function index procedure role schema sequence
    table trigger user view
    """.split()
)


@dataclass(frozen=True)
class Token:
    """One lexical token; ``pos`` is the character offset in the input."""

    kind: str  # ident | qident | string | number | op | semi | comment
    value: str
    pos: int


def tokenize(text: str) -> list[Token]:
    """Lex ``text`` into tokens, keeping comments but dropping whitespace."""
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch == "-" and text.startswith("--", i):
            end = text.find("\n", i)
            end = n if end == -1 else end
            tokens.append(Token("comment", text[i:end], i))
            i = end
            continue
        if ch == "#":
            end = text.find("\n", i)
            end = n if end == -1 else end
            tokens.append(Token("comment", text[i:end], i))
            i = end
            continue
        if ch == "/" and text.startswith("/*", i):
            end = text.find("*/", i + 2)
            end = n if end == -1 else end + 2
            tokens.append(Token("comment", text[i:end], i))
            i = end
            continue
        if ch == "'":
            j = i + 1
            while j < n:
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        j += 2
                        continue
                    j += 1
                    break
                j += 1
            else:
                j = n
            tokens.append(Token("string", text[i:j], i))
            i = j
            continue
        if ch in ('"', "`"):
            quote = ch
            j = i + 1
            while j < n:
                if text[j] == quote:
                    if j + 1 < n and text[j + 1] == quote:
                        j += 2
                        continue
                    j += 1
                    break
                j += 1
            else:
                j = n
            tokens.append(Token("qident", text[i:j], i))
            i = j
            continue
        if ch.isdigit():
            j = i
            if text.startswith("0x", i) or text.startswith("0X", i):
                j = i + 2
                while j < n and text[j] in "0123456789abcdefABCDEF":
                    j += 1
            else:
                seen_dot = False
                seen_exp = False
                while j < n:
                    c = text[j]
                    if c.isdigit():
                        j += 1
                    elif c == "." and not seen_dot and not seen_exp:
                        seen_dot = True
                        j += 1
                    elif c in "eE" and not seen_exp and j + 1 < n and (
                        text[j + 1].isdigit() or text[j + 1] in "+-"
                    ):
                        seen_exp = True
                        j += 2
                    else:
                        break
            tokens.append(Token("number", text[i:j], i))
            i = j
            continue
        if IDENT_START.match(ch):
            j = i + 1
            while j < n and IDENT_BODY.match(text[j]):
                j += 1
            tokens.append(Token("ident", text[i:j], i))
            i = j
            continue
        if ch == ";":
            tokens.append(Token("semi", ";", i))
            i += 1
            continue
        for op in MULTI_OPS:
            if text.startswith(op, i):
                tokens.append(Token("op", op, i))
                i += len(op)
                break
        else:
            tokens.append(Token("op", ch, i))
            i += 1
    return tokens


def normalized_tokens(text: str) -> list[str]:
    """Token values with comments dropped and identifiers case-folded.

    This is the token stream the rewrite-distance check compares, so it has
    to be stable: same SQL in, same list out.
    """
    out: list[str] = []
    for tok in tokenize(text):
        if tok.kind == "comment":
            continue
        if tok.kind == "ident":
            out.append(tok.value.lower())
        elif tok.kind == "qident":
            out.append(strip_quotes(tok.value))
        elif tok.kind == "number":
            out.append(tok.value.lower())
        else:
            out.append(tok.value)
    return out


def strip_quotes(value: str) -> str:
    """Remove surrounding quotes from a quoted identifier and case-fold it."""
    if len(value) >= 2 and value[0] in ('"', "`") and value[-1] == value[0]:
        inner = value[1:-1].replace(value[0] * 2, value[0])
        return inner.lower()
    return value.lower()


def split_statements(text: str) -> list[str]:
    """Split a script on semicolons that sit outside strings and comments.

    Pieces holding nothing but comments are dropped: they are not
    statements, just annotation between them.
    """
    statements: list[str] = []
    start = 0
    for tok in tokenize(text):
        if tok.kind == "semi":
            piece = text[start : tok.pos].strip()
            if piece and any(t.kind != "comment" for t in tokenize(piece)):
                statements.append(piece)
            start = tok.pos + 1
    tail = text[start:].strip()
    if tail and any(t.kind != "comment" for t in tokenize(tail)):
        statements.append(tail)
    return statements


def mask_noncode(line: str) -> str:
    """Blank out string contents and comment tails in a single line.

    The shape (length and positions of code characters) is preserved so,
    e.g., paren counting and terminator checks can run on the masked text.
    """
    out = list(line)
    i = 0
    n = len(line)
    while i < n:
        ch = line[i]
        if ch == "-" and line.startswith("--", i):
            for k in range(i, n):
                out[k] = " "
            break
        if ch == "#":
            for k in range(i, n):
                out[k] = " "
            break
        if ch == "/" and line.startswith("/*", i):
            end = line.find("*/", i + 2)
            stop = n if end == -1 else end + 2
            for k in range(i, stop):
                out[k] = " "
            i = stop
            continue
        if ch in ("'", '"', "`"):
            quote = ch
            j = i + 1
            while j < n:
                if line[j] == quote:
                    if j + 1 < n and line[j + 1] == quote:
                        j += 2
                        continue
                    break
                j += 1
            stop = min(j + 1, n)
            for k in range(i + 1, min(j, n)):
                out[k] = " "
            if j >= n:
                # Unterminated quote: everything after it is literal text.
                for k in range(i + 1, n):
                    out[k] = " "
            i = stop
            continue
        i += 1
    return "".join(out)


def line_has_terminator(line: str) -> bool:
    """True when the line carries a semicolon outside quotes and comments."""
    return ";" in mask_noncode(line)


def paren_delta(line: str) -> int:
    """``count(')') - count('(')`` over the code portion of the line."""
    masked = mask_noncode(line)
    return masked.count(")") - masked.count("(")


def first_word(line: str) -> str | None:
    """First identifier-shaped word of the line, lower-cased."""
    m = WORD_RE.search(line.lstrip())
    if m is None or m.start() != 0:
        return None
    return m.group(0).lower()


def is_subject_line(line: str, subjects: frozenset[str] = SUBJECT_KEYWORDS) -> bool:
    """True when the line begins with a statement-opening keyword."""
    word = first_word(line)
    return word is not None and word in subjects


def statement_verb(statement: str) -> str | None:
    """The opening keyword of a statement, or None for non-SQL text."""
    for tok in tokenize(statement):
        if tok.kind == "comment":
            continue
        if tok.kind == "ident":
            return tok.value.lower()
        return None
    return None


def statement_identifiers(statement: str) -> set[str]:
    """Schema-level identifiers referenced by a statement.

    Everything identifier-shaped that is not a keyword or a well-known
    builtin counts; quoted identifiers are unquoted and case-folded.
    """
    names: set[str] = set()
    for tok in tokenize(statement):
        if tok.kind == "ident":
            low = tok.value.lower()
            if low not in KEYWORDS and low not in BUILTIN_FUNCTIONS:
                names.add(low)
        elif tok.kind == "qident":
            names.add(strip_quotes(tok.value))
    return names


def statement_operations(statement: str) -> list[str]:
    """Clause-level operation keywords of a statement, as a multiset list.

    Two-word clauses are folded (``ORDER BY`` -> ``order_by``), join
    variants all count as ``join``.
    """
    toks = normalized_tokens(statement)
    ops: list[str] = []
    i = 0
    while i < len(toks):
        tok = toks[i]
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        if tok in ("order", "group") and nxt == "by":
            ops.append(f"{tok}_by")
            i += 2
            continue
        if tok in CLAUSE_OPERATIONS:
            ops.append(tok)
        i += 1
    return ops


def statement_defines(statement: str) -> set[str]:
    """Identifiers a DDL statement brings into existence.

    ``CREATE TABLE t (a INT, b INT)`` defines ``t``, ``a`` and ``b``; a
    ``CREATE FUNCTION`` defines only the routine name (its body references
    other objects).  ALTER is treated loosely: every identifier it mentions
    counts as defined, which errs on the permissive side.
    """
    verb = statement_verb(statement)
    if verb == "alter":
        return statement_identifiers(statement)
    if verb != "create":
        return set()
    toks = [t for t in tokenize(statement) if t.kind != "comment"]
    defined: set[str] = set()
    object_kind = None
    name_index = None
    for idx in range(1, len(toks)):
        tok = toks[idx]
        if tok.kind == "ident" and tok.value.lower() in OBJECT_TYPE_WORDS:
            object_kind = tok.value.lower()
            for j in range(idx + 1, len(toks)):
                cand = toks[j]
                if cand.kind == "ident" and cand.value.lower() not in KEYWORDS:
                    defined.add(cand.value.lower())
                    name_index = j
                    break
                if cand.kind == "qident":
                    defined.add(strip_quotes(cand.value))
                    name_index = j
                    break
                if cand.kind == "ident":
                    continue
                break
            break
    if object_kind == "table" and name_index is not None:
        # Column names live in the first top-level paren group.
        depth = 0
        for tok in toks[name_index + 1 :]:
            if tok.kind == "op" and tok.value == "(":
                depth += 1
                continue
            if tok.kind == "op" and tok.value == ")":
                depth -= 1
                if depth <= 0:
                    break
                continue
            if depth >= 1:
                if tok.kind == "ident":
                    low = tok.value.lower()
                    if low not in KEYWORDS and low not in BUILTIN_FUNCTIONS:
                        defined.add(low)
                elif tok.kind == "qident":
                    defined.add(strip_quotes(tok.value))
    return defined


def token_edit_distance(a: list[str], b: list[str]) -> float:
    """Levenshtein distance between token lists, normalized to [0, 1].

    Symmetric in its arguments and 0 exactly when the lists are equal; the
    raw distance is divided by the longer list's length.
    """
    if a == b:
        return 0.0
    if not a or not b:
        return 1.0
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        current = [i]
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
            )
        previous = current
    return previous[-1] / max(len(a), len(b))
