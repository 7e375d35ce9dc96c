"""Finite-trace temporal logic: syntax tree, parser and word semantics.

Formulas use `!`, `&`, `|` connectives and `X` (next), `U` (until),
`F` (eventually), `G` (always) temporal operators over named atomic
propositions.  `F`/`G` are rewritten into the base syntax at parse time
(`F p == true U p`, `G p == !(true U !p)`).  Words are sequences of
symbols, each symbol being the set of propositions that hold at that
step; semantics follow the standard finite-trace reading where `X` is
strong (false at the last step).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import AbstractSet, Collection, Sequence, Union

from .errors import LtlfSyntaxError, UnknownPropositionError

Symbol = AbstractSet[str]
Word = Sequence[Symbol]


@dataclass(frozen=True)
class TrueF:
    def __repr__(self):
        return "true"


@dataclass(frozen=True)
class FalseF:
    def __repr__(self):
        return "false"


@dataclass(frozen=True)
class Atom:
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    child: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


Formula = Union[TrueF, FalseF, Atom, Not, And, Or, Next, Until]

TRUE = TrueF()
FALSE = FalseF()


def eventually(child: Formula) -> Formula:
    return Until(TRUE, child)


def always(child: Formula) -> Formula:
    return Not(Until(TRUE, Not(child)))


_KEYWORDS = {"X", "U", "F", "G", "true", "false"}

_IDENT_RE = re.compile(r"[A-Za-z_]\w*")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Return (kind, value, position) triples; kind is ident/op/end."""
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        if ch in "!&|()":
            tokens.append(("op", ch, pos))
            pos += 1
            continue
        m = _IDENT_RE.match(text, pos)
        if m:
            tokens.append(("ident", m.group(), pos))
            pos = m.end()
            continue
        raise LtlfSyntaxError(f"unexpected character {ch!r}", pos)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    """Recursive descent; precedence (loosest first): | < & < U < unary."""

    def __init__(self, text: str, props: Collection[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.idx = 0
        self.props = frozenset(props)

    def peek(self):
        return self.tokens[self.idx]

    def advance(self):
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def parse(self) -> Formula:
        node = self.parse_or()
        kind, value, pos = self.peek()
        if kind != "end":
            raise LtlfSyntaxError(f"unexpected token {value!r}", pos)
        return node

    def parse_or(self) -> Formula:
        node = self.parse_and()
        while self.peek()[:2] == ("op", "|"):
            self.advance()
            node = Or(node, self.parse_and())
        return node

    def parse_and(self) -> Formula:
        node = self.parse_until()
        while self.peek()[:2] == ("op", "&"):
            self.advance()
            node = And(node, self.parse_until())
        return node

    def parse_until(self) -> Formula:
        node = self.parse_unary()
        if self.peek()[:2] == ("ident", "U"):
            self.advance()
            return Until(node, self.parse_until())
        return node

    def parse_unary(self) -> Formula:
        kind, value, pos = self.peek()
        if kind == "op" and value == "!":
            self.advance()
            return Not(self.parse_unary())
        if kind == "ident" and value in ("X", "F", "G"):
            self.advance()
            child = self.parse_unary()
            if value == "X":
                return Next(child)
            if value == "F":
                return eventually(child)
            return always(child)
        return self.parse_primary()

    def parse_primary(self) -> Formula:
        kind, value, pos = self.advance()
        if kind == "op" and value == "(":
            node = self.parse_or()
            kind, value, pos = self.advance()
            if (kind, value) != ("op", ")"):
                raise LtlfSyntaxError("expected ')'", pos)
            return node
        if kind == "ident":
            if value == "true":
                return TRUE
            if value == "false":
                return FALSE
            if value in _KEYWORDS:
                raise LtlfSyntaxError(f"misplaced operator {value!r}", pos)
            if value not in self.props:
                raise UnknownPropositionError(
                    f"proposition {value!r} is not declared"
                )
            return Atom(value)
        if kind == "end":
            raise LtlfSyntaxError("unexpected end of input", pos)
        raise LtlfSyntaxError(f"unexpected token {value!r}", pos)


def parse_formula(text: str, props: Collection[str]) -> Formula:
    """Parse formula text against declared proposition names."""
    return _Parser(text, props).parse()


# Display precedence levels; F/G sugar renders at unary level.
_PREC_OR, _PREC_AND, _PREC_UNTIL, _PREC_UNARY, _PREC_ATOM = 1, 2, 3, 4, 5


def _display_form(node: Formula):
    """Map a node to (operator label, precedence, children) for printing."""
    if isinstance(node, Not):
        inner = node.child
        if isinstance(inner, Until) and inner.left == TRUE and isinstance(inner.right, Not):
            return ("G", _PREC_UNARY, (inner.right.child,))
        return ("!", _PREC_UNARY, (node.child,))
    if isinstance(node, Until):
        if node.left == TRUE:
            return ("F", _PREC_UNARY, (node.right,))
        return ("U", _PREC_UNTIL, (node.left, node.right))
    if isinstance(node, Next):
        return ("X", _PREC_UNARY, (node.child,))
    if isinstance(node, And):
        return ("&", _PREC_AND, (node.left, node.right))
    if isinstance(node, Or):
        return ("|", _PREC_OR, (node.left, node.right))
    if isinstance(node, Atom):
        return (node.name, _PREC_ATOM, ())
    if isinstance(node, TrueF):
        return ("true", _PREC_ATOM, ())
    if isinstance(node, FalseF):
        return ("false", _PREC_ATOM, ())
    raise TypeError(f"not a formula node: {node!r}")


def pretty(node: Formula) -> str:
    """Render with minimal parentheses; reparsing yields an equal tree."""
    label, prec, children = _display_form(node)
    if not children:
        return label
    if len(children) == 1:
        child = children[0]
        text = pretty(child)
        if _display_form(child)[1] < _PREC_UNARY:
            text = f"({text})"
        return f"{label} {text}" if label in ("F", "G", "X") else f"{label}{text}"
    left, right = children
    ltext, lprec = pretty(left), _display_form(left)[1]
    rtext, rprec = pretty(right), _display_form(right)[1]
    if label == "U":
        # right associative
        if lprec <= prec:
            ltext = f"({ltext})"
        if rprec < prec:
            rtext = f"({rtext})"
    else:
        # & and | are left associative
        if lprec < prec:
            ltext = f"({ltext})"
        if rprec <= prec:
            rtext = f"({rtext})"
    return f"{ltext} {label} {rtext}"


def formula_atoms(node: Formula) -> tuple[str, ...]:
    """Sorted names of the atoms appearing in the formula."""
    names: set[str] = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Atom):
            names.add(cur.name)
        elif isinstance(cur, (Not, Next)):
            stack.append(cur.child)
        elif isinstance(cur, (And, Or, Until)):
            stack.append(cur.left)
            stack.append(cur.right)
    return tuple(sorted(names))


def eval_word(node: Formula, word: Word) -> bool:
    """Brute-force recursive finite-trace semantics; the test oracle.

    The word must be nonempty.  Position semantics: atoms hold when the
    symbol contains them, `X` requires a successor position, and
    `p U q` requires `q` at some position with `p` at every position
    before it.
    """
    if len(word) == 0:
        raise ValueError("words are nonempty by definition")
    n = len(word)
    memo: dict[tuple[int, int], bool] = {}

    def rec(f: Formula, i: int) -> bool:
        key = (id(f), i)
        if key in memo:
            return memo[key]
        if isinstance(f, TrueF):
            out = True
        elif isinstance(f, FalseF):
            out = False
        elif isinstance(f, Atom):
            out = f.name in word[i]
        elif isinstance(f, Not):
            out = not rec(f.child, i)
        elif isinstance(f, And):
            out = rec(f.left, i) and rec(f.right, i)
        elif isinstance(f, Or):
            out = rec(f.left, i) or rec(f.right, i)
        elif isinstance(f, Next):
            out = i + 1 < n and rec(f.child, i + 1)
        elif isinstance(f, Until):
            out = False
            for j in range(i, n):
                if rec(f.right, j):
                    out = True
                    break
                if not rec(f.left, j):
                    break
        else:
            raise TypeError(f"not a formula node: {f!r}")
        memo[key] = out
        return out

    return rec(node, 0)
