"""Compilation of finite-trace temporal formulas into minimized DFAs.

Pipeline: negation normal form -> one-step normal form (each operator
split into a "now" requirement and a next-step obligation) -> NFA whose
states are obligation sets -> subset construction -> partition
refinement.  Transition guards are stored as Boolean formulas over the
formula's propositions, so symbols over a larger declared alphabet can
be evaluated directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet, Iterable, Sequence, Union

import numpy as np

from . import ltlf
from .errors import StateBudgetError

# ---------------------------------------------------------------------------
# Negation normal form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Lit:
    name: str
    neg: bool


@dataclass(frozen=True)
class _True:
    pass


@dataclass(frozen=True)
class _False:
    pass


@dataclass(frozen=True)
class _And:
    left: "_Nnf"
    right: "_Nnf"


@dataclass(frozen=True)
class _Or:
    left: "_Nnf"
    right: "_Nnf"


@dataclass(frozen=True)
class _NextOp:
    child: "_Nnf"
    strong: bool  # strong next is false at the last step, weak next true


@dataclass(frozen=True)
class _UntilOp:
    left: "_Nnf"
    right: "_Nnf"


@dataclass(frozen=True)
class _ReleaseOp:
    left: "_Nnf"
    right: "_Nnf"


_Nnf = Union[_Lit, _True, _False, _And, _Or, _NextOp, _UntilOp, _ReleaseOp]

_TT = _True()
_FF = _False()


def _to_nnf(node: ltlf.Formula, neg: bool = False) -> _Nnf:
    if isinstance(node, ltlf.TrueF):
        return _FF if neg else _TT
    if isinstance(node, ltlf.FalseF):
        return _TT if neg else _FF
    if isinstance(node, ltlf.Atom):
        return _Lit(node.name, neg)
    if isinstance(node, ltlf.Not):
        return _to_nnf(node.child, not neg)
    if isinstance(node, ltlf.And):
        cls = _Or if neg else _And
        return cls(_to_nnf(node.left, neg), _to_nnf(node.right, neg))
    if isinstance(node, ltlf.Or):
        cls = _And if neg else _Or
        return cls(_to_nnf(node.left, neg), _to_nnf(node.right, neg))
    if isinstance(node, ltlf.Next):
        # negating a strong next yields a weak next of the negation
        return _NextOp(_to_nnf(node.child, neg), strong=not neg)
    if isinstance(node, ltlf.Until):
        cls = _ReleaseOp if neg else _UntilOp
        return cls(_to_nnf(node.left, neg), _to_nnf(node.right, neg))
    raise TypeError(f"not a formula node: {node!r}")


# ---------------------------------------------------------------------------
# One-step moves: minimal next-obligation sets plus end-of-word check
# ---------------------------------------------------------------------------


def _minimize_models(models: set[frozenset]) -> frozenset:
    """Drop models that are supersets of other models."""
    out = []
    for m in sorted(models, key=len):
        if not any(kept <= m for kept in out):
            out.append(m)
    return frozenset(out)


def _cross(a: frozenset, b: frozenset) -> frozenset:
    return _minimize_models({x | y for x in a for y in b})


_EMPTY_MODEL = frozenset([frozenset()])
_NO_MODEL = frozenset()


def _models(f: _Nnf, mask: int, bit: dict[str, int]) -> frozenset:
    """Minimal sets of obligations on the remaining word after reading mask."""
    if isinstance(f, _True):
        return _EMPTY_MODEL
    if isinstance(f, _False):
        return _NO_MODEL
    if isinstance(f, _Lit):
        holds = bool(mask >> bit[f.name] & 1) != f.neg
        return _EMPTY_MODEL if holds else _NO_MODEL
    if isinstance(f, _And):
        return _cross(_models(f.left, mask, bit), _models(f.right, mask, bit))
    if isinstance(f, _Or):
        return _minimize_models(
            set(_models(f.left, mask, bit)) | set(_models(f.right, mask, bit))
        )
    if isinstance(f, _NextOp):
        # strength only matters when the word ends here; see _can_end
        return frozenset([frozenset([f.child])])
    if isinstance(f, _UntilOp):
        # l U r == r or (l and next(l U r))
        now = set(_models(f.right, mask, bit))
        for m in _models(f.left, mask, bit):
            now.add(m | {f})
        return _minimize_models(now)
    if isinstance(f, _ReleaseOp):
        # l R r == r and (l or weak-next(l R r))
        right = _models(f.right, mask, bit)
        left = set(_models(f.left, mask, bit))
        left.add(frozenset([f]))
        return _cross(right, _minimize_models(left))
    raise TypeError(f"unexpected node {f!r}")


def _can_end(f: _Nnf, mask: int, bit: dict[str, int]) -> bool:
    """May the word stop at this symbol with obligation f satisfied?"""
    if isinstance(f, _True):
        return True
    if isinstance(f, _False):
        return False
    if isinstance(f, _Lit):
        return bool(mask >> bit[f.name] & 1) != f.neg
    if isinstance(f, _And):
        return _can_end(f.left, mask, bit) and _can_end(f.right, mask, bit)
    if isinstance(f, _Or):
        return _can_end(f.left, mask, bit) or _can_end(f.right, mask, bit)
    if isinstance(f, _NextOp):
        return not f.strong
    if isinstance(f, _UntilOp):
        return _can_end(f.right, mask, bit)
    if isinstance(f, _ReleaseOp):
        return _can_end(f.right, mask, bit)
    raise TypeError(f"unexpected node {f!r}")


# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Guard:
    """Boolean formula over proposition names, stored by its models.

    `props` fixes the variable order; `masks` holds every assignment
    (bitmask over `props`) that satisfies the guard.  Propositions
    outside `props` never influence the guard.
    """

    props: tuple[str, ...]
    masks: frozenset[int]

    def holds(self, symbol: AbstractSet[str]) -> bool:
        return mask_of(symbol, self.props) in self.masks

    def holds_mask(self, mask: int) -> bool:
        return mask in self.masks

    def expression(self) -> str:
        """Human-readable disjunctive form with merged implicants."""
        nbits = len(self.props)
        if len(self.masks) == (1 << nbits):
            return "true"
        if not self.masks:
            return "false"
        terms = []
        for value, care in _prime_cover(self.masks, nbits):
            lits = []
            for i, name in enumerate(self.props):
                if care >> i & 1:
                    lits.append(name if value >> i & 1 else f"!{name}")
            terms.append(" & ".join(lits) if lits else "true")
        return " | ".join(terms)


def mask_of(symbol: AbstractSet[str], props: Sequence[str]) -> int:
    mask = 0
    for i, name in enumerate(props):
        if name in symbol:
            mask |= 1 << i
    return mask


def _prime_cover(masks: frozenset[int], nbits: int) -> list[tuple[int, int]]:
    """Quine-McCluskey style merge, then a greedy cover of the minterms."""
    full_care = (1 << nbits) - 1
    level = {(m, full_care) for m in masks}
    primes: set[tuple[int, int]] = set()
    while level:
        merged = set()
        used = set()
        pairs = sorted(level)
        for i, (v1, c1) in enumerate(pairs):
            for v2, c2 in pairs[i + 1:]:
                if c1 != c2:
                    continue
                diff = v1 ^ v2
                if diff and not diff & (diff - 1) and diff & c1:
                    merged.add((v1 & ~diff, c1 & ~diff))
                    used.add((v1, c1))
                    used.add((v2, c2))
        primes |= level - used
        level = merged
    # greedy set cover over original minterms
    remaining = set(masks)
    cover = []
    candidates = sorted(primes, key=lambda t: (bin(t[1]).count("1"), t[0], t[1]))
    while remaining:
        best = max(
            candidates,
            key=lambda t: (len({m for m in remaining if m & t[1] == t[0]}),
                           -bin(t[1]).count("1"), -t[0]),
        )
        covered = {m for m in remaining if m & best[1] == best[0]}
        if not covered:
            break
        remaining -= covered
        cover.append(best)
        candidates.remove(best)
    return sorted(cover)


# ---------------------------------------------------------------------------
# DFA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dfa:
    """Deterministic, total automaton with guard-labelled transitions.

    For every state and every symbol exactly one guard holds.  Words are
    nonempty sequences of symbols (sets of true proposition names, or
    precomputed masks over `props`).
    """

    props: tuple[str, ...]
    num_states: int
    initial: int
    accepting: frozenset[int]
    transitions: tuple[tuple[tuple[Guard, int], ...], ...]
    _table: np.ndarray = field(repr=False, compare=False)

    def step(self, state: int, symbol: Union[int, AbstractSet[str]]) -> int:
        mask = symbol if isinstance(symbol, int) else mask_of(symbol, self.props)
        return int(self._table[state, mask])

    def run(self, word: Iterable[Union[int, AbstractSet[str]]]) -> int:
        state = self.initial
        for symbol in word:
            state = self.step(state, symbol)
        return state

    def accepts(self, word: Iterable[Union[int, AbstractSet[str]]]) -> bool:
        return self.run(word) in self.accepting

    def accepts_batch(self, words: np.ndarray) -> np.ndarray:
        """Vectorized acceptance for an (n_words, length) array of masks."""
        state = np.full(words.shape[0], self.initial, dtype=np.int64)
        for col in range(words.shape[1]):
            state = self._table[state, words[:, col]]
        acc = np.zeros(self.num_states, dtype=bool)
        acc[list(self.accepting)] = True
        return acc[state]

    @property
    def table(self) -> np.ndarray:
        return self._table


_MAX_PROPS = 12
_MAX_TABLE_CELLS = 8_000_000

_DONE = ("done",)  # sentinel NFA member: the word may stop on this read


def compile_to_dfa(node: ltlf.Formula, state_cap: int = 10_000) -> Dfa:
    """Compile a formula into a minimized total DFA.

    Raises StateBudgetError when the construction exceeds `state_cap`
    states (the automaton can be doubly exponential in formula size).
    """
    props = ltlf.formula_atoms(node)
    if len(props) > _MAX_PROPS:
        raise StateBudgetError(
            f"{len(props)} propositions gives an alphabet of 2^{len(props)} "
            "symbols; refusing to enumerate"
        )
    bit = {name: i for i, name in enumerate(props)}
    n_masks = 1 << len(props)
    root = _to_nnf(node)

    # NFA move cache: obligation set -> per-mask (successor sets, can_end)
    nfa_moves: dict[frozenset, list[tuple[tuple[frozenset, ...], bool]]] = {}

    def moves_of(state: frozenset) -> list[tuple[tuple[frozenset, ...], bool]]:
        cached = nfa_moves.get(state)
        if cached is not None:
            return cached
        per_mask = []
        for mask in range(n_masks):
            models: frozenset = _EMPTY_MODEL
            ends = True
            for f in state:
                models = _cross(models, _models(f, mask, bit))
                if not models:
                    ends = False
                    break
                ends = ends and _can_end(f, mask, bit)
            ordered = tuple(sorted(models, key=_model_key))
            per_mask.append((ordered, ends))
        nfa_moves[state] = per_mask
        return per_mask

    # subset construction; queue processing order equals id order, so the
    # transition rows line up with macro ids
    initial_macro = frozenset([frozenset([root])])
    macro_ids: dict[frozenset, int] = {initial_macro: 0}
    macro_list = [initial_macro]
    table_rows: list[list[int]] = []
    queue = [initial_macro]
    while queue:
        macro = queue.pop(0)
        row = []
        for mask in range(n_masks):
            nxt: set[frozenset] = set()
            ends = False
            for member in macro:
                if member is _DONE:
                    continue
                successors, can_end = moves_of(member)[mask]
                nxt.update(successors)
                ends = ends or can_end
            if ends:
                nxt.add(_DONE)
            target = frozenset(nxt)
            tid = macro_ids.get(target)
            if tid is None:
                tid = len(macro_list)
                if tid >= state_cap:
                    raise StateBudgetError(
                        f"automaton exceeded the {state_cap}-state cap"
                    )
                macro_ids[target] = tid
                macro_list.append(target)
                queue.append(target)
            row.append(tid)
        table_rows.append(row)

    n_states = len(macro_list)
    if n_states * n_masks > _MAX_TABLE_CELLS:
        raise StateBudgetError("state count times alphabet size is too large")
    table = np.array(table_rows, dtype=np.int64)
    accepting = np.array([_DONE in m for m in macro_list], dtype=bool)

    table, accepting, initial = _minimize(table, accepting, 0)
    return _build_dfa(props, table, accepting, initial)


def _model_key(model: frozenset) -> tuple:
    return tuple(sorted(repr(f) for f in model))


def _minimize(table: np.ndarray, accepting: np.ndarray, initial: int):
    """Partition refinement until language-equivalent states merge."""
    part = refine_partition(table, accepting)
    n_parts = int(part.max()) + 1
    # canonical renumbering: breadth-first from the initial class
    rep_table = np.empty((n_parts, table.shape[1]), dtype=np.int64)
    rep_acc = np.zeros(n_parts, dtype=bool)
    for q in range(table.shape[0]):
        rep_table[part[q]] = part[table[q]]
        rep_acc[part[q]] = accepting[q]
    order = {int(part[initial]): 0}
    queue = [int(part[initial])]
    while queue:
        cur = queue.pop(0)
        for tgt in rep_table[cur]:
            t = int(tgt)
            if t not in order:
                order[t] = len(order)
                queue.append(t)
    # unreachable classes are dropped
    remap = np.full(n_parts, -1, dtype=np.int64)
    for old, new in order.items():
        remap[old] = new
    keep = sorted(order, key=order.get)
    new_table = remap[rep_table[keep]]
    new_acc = rep_acc[keep]
    return new_table, new_acc, 0


def refine_partition(table: np.ndarray, accepting: np.ndarray) -> np.ndarray:
    """Moore-style refinement; returns a partition id per state.

    Each pass splits blocks by (own block, successor block per symbol)
    signatures, so block count is nondecreasing; an unchanged count
    means the partition is stable.
    """
    part = accepting.astype(np.int64)
    while True:
        signature = np.column_stack([part, part[table]])
        _, new_part = np.unique(signature, axis=0, return_inverse=True)
        new_part = new_part.reshape(-1).astype(np.int64)
        if len(np.unique(new_part)) == len(np.unique(part)):
            return new_part
        part = new_part


def _build_dfa(props, table, accepting, initial) -> Dfa:
    n_states, n_masks = table.shape
    transitions = []
    for q in range(n_states):
        by_target: dict[int, list[int]] = {}
        for mask in range(n_masks):
            by_target.setdefault(int(table[q, mask]), []).append(mask)
        entries = tuple(
            (Guard(props, frozenset(masks)), target)
            for target, masks in sorted(by_target.items())
        )
        transitions.append(entries)
    return Dfa(
        props=props,
        num_states=n_states,
        initial=initial,
        accepting=frozenset(int(q) for q in np.flatnonzero(accepting)),
        transitions=tuple(transitions),
        _table=table,
    )


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------


def export_dot(dfa: Dfa, name: str = "dfa") -> str:
    """Render the automaton as a DOT digraph (accepting = doublecircle)."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for q in range(dfa.num_states):
        shape = "doublecircle" if q in dfa.accepting else "circle"
        lines.append(f'  q{q} [shape={shape}, label="q{q}"];')
    lines.append(f"  __start -> q{dfa.initial};")
    for q, entries in enumerate(dfa.transitions):
        for guard, target in entries:
            label = guard.expression().replace('"', r"\"")
            lines.append(f'  q{q} -> q{target} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines)
