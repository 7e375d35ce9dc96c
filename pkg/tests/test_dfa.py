import numpy as np
import pytest

from beliefplan import ltlf
from beliefplan.dfa import Guard, compile_to_dfa, export_dot, mask_of, refine_partition
from beliefplan.errors import StateBudgetError

from dot_parsing import parse_dot
from ltlf_oracle import all_words, dfa_agrees_with_oracle, random_formula

PROPS = ["a", "b", "o"]


def compiled(text, props=PROPS):
    return compile_to_dfa(ltlf.parse_formula(text, props))


class TestCanonicalAutomata:
    def test_eventually_two_states(self):
        dfa = compiled("F a")
        assert dfa.num_states == 2
        assert len(dfa.accepting) == 1
        # rejecting initial state loops on symbols without the proposition
        q0 = dfa.initial
        assert dfa.step(q0, frozenset()) == q0
        assert dfa.step(q0, {"a"}) in dfa.accepting

    def test_false_single_sink(self):
        dfa = compiled("false")
        assert dfa.num_states == 1
        assert not dfa.accepting
        assert dfa.step(0, frozenset()) == 0

    def test_true_accepts_everything(self):
        dfa = compiled("true")
        assert dfa.accepts([frozenset()])
        assert dfa.accepts([{"a"}, {"b"}])

    def test_safety_with_goal(self):
        dfa = compiled("G !o & F a")
        assert dfa.accepts([set(), {"a"}])
        assert not dfa.accepts([{"o"}, {"a"}])

    def test_until_agrees_with_oracle_exhaustively(self):
        ast = ltlf.parse_formula("a U b", PROPS)
        dfa = compile_to_dfa(ast)
        assert dfa_agrees_with_oracle(dfa, ast, max_length=5) == 0
        # the length-5 slice alone covers 4^5 = 1024 words
        assert all_words(len(dfa.props), 5).shape[0] == 1024

    def test_extra_propositions_ignored_by_guards(self):
        dfa = compiled("F a")
        assert dfa.accepts([{"a", "b", "o"}])
        assert not dfa.accepts([{"b", "o"}])

    def test_state_cap(self):
        with pytest.raises(StateBudgetError):
            compile_to_dfa(ltlf.parse_formula("F a", PROPS), state_cap=1)


class TestDeterminismTotality:
    def test_exactly_one_guard_fires(self):
        rng = np.random.default_rng(7)
        for text in ["G !o & F(a & F b)", "a U (b U !a)", "F (a & X b)"]:
            dfa = compiled(text)
            for _ in range(1000):
                q = int(rng.integers(dfa.num_states))
                symbol = frozenset(
                    p for p in dfa.props if rng.random() < 0.5
                )
                firing = [
                    target for guard, target in dfa.transitions[q]
                    if guard.holds(symbol)
                ]
                assert len(firing) == 1
                assert firing[0] == dfa.step(q, symbol)

    def test_all_states_reachable(self):
        dfa = compiled("G !o & F(a & F b)")
        seen = {dfa.initial}
        frontier = [dfa.initial]
        while frontier:
            q = frontier.pop()
            for _, target in dfa.transitions[q]:
                if target not in seen:
                    seen.add(target)
                    frontier.append(target)
        assert seen == set(range(dfa.num_states))


class TestOracleEquivalence:
    def test_random_formulas(self):
        rng = np.random.default_rng(20240305)
        props = ("p", "q", "r")
        for _ in range(60):
            ast = random_formula(rng, 4, props)
            dfa = compile_to_dfa(ast)
            assert dfa_agrees_with_oracle(dfa, ast, max_length=5) == 0, ltlf.pretty(ast)


class TestMinimality:
    def test_refinement_fixed_point(self):
        rng = np.random.default_rng(99)
        props = ("p", "q")
        for _ in range(40):
            ast = random_formula(rng, 4, props)
            dfa = compile_to_dfa(ast)
            accepting = np.zeros(dfa.num_states, dtype=bool)
            accepting[list(dfa.accepting)] = True
            part = refine_partition(dfa.table, accepting)
            assert len(np.unique(part)) == dfa.num_states


class TestGuards:
    def test_expression_simplifies(self):
        guard = Guard(("a", "b"), frozenset({0b00, 0b01, 0b10, 0b11}))
        assert guard.expression() == "true"
        guard = Guard(("a", "b"), frozenset())
        assert guard.expression() == "false"
        guard = Guard(("a", "b"), frozenset({0b01, 0b11}))
        assert guard.expression() == "a"
        guard = Guard(("a", "b"), frozenset({0b00, 0b10}))
        assert guard.expression() == "!a"

    def test_mask_roundtrip(self):
        assert mask_of({"a", "o"}, ("a", "b", "o")) == 0b101

    def test_expression_is_faithful(self):
        rng = np.random.default_rng(3)
        props = ("a", "b", "o")
        for _ in range(50):
            masks = frozenset(
                int(m) for m in rng.choice(8, size=rng.integers(1, 8), replace=False)
            )
            guard = Guard(props, masks)
            expr = guard.expression()
            # evaluate the printed expression independently
            for mask in range(8):
                env = {p: bool(mask >> i & 1) for i, p in enumerate(props)}
                text = expr.replace("!", " not ").replace("&", " and ").replace("|", " or ")
                assert eval(text, {"true": True, "false": False}, env) == (mask in masks)


class TestDotExport:
    def test_canonical_eventually(self):
        dfa = compiled("F a")
        dot = export_dot(dfa)
        graph = parse_dot(dot)
        assert len(graph.nodes) == 2 + 1  # two states plus the start marker
        assert len(graph.edges) == 3 + 1  # three guarded edges plus the start arrow
        accepting = [n for n, attrs in graph.nodes.items()
                     if attrs.get("shape") == "doublecircle"]
        assert accepting == ["q1"]

    def test_empty_language_sink(self):
        dot = export_dot(compiled("false"))
        graph = parse_dot(dot)
        assert [n for n, a in graph.nodes.items() if a.get("shape") == "doublecircle"] == []
        assert ("q0", "q0") in [(e.src, e.dst) for e in graph.edges]

    def test_phi3_round_trip(self):
        dfa = compiled("G !o & F(a & F c) & F(b & F c)", ["a", "b", "c", "o"])
        dot = export_dot(dfa)
        graph = parse_dot(dot)
        state_nodes = [n for n in graph.nodes if n.startswith("q")]
        assert len(state_nodes) == dfa.num_states
        guarded = [e for e in graph.edges if e.src.startswith("q")]
        assert len(guarded) == sum(len(t) for t in dfa.transitions)
        doubled = {n for n, a in graph.nodes.items() if a.get("shape") == "doublecircle"}
        assert doubled == {f"q{q}" for q in dfa.accepting}
