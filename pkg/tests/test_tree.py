import numpy as np
import pytest

from beliefplan import ltlf
from beliefplan.dfa import compile_to_dfa
from beliefplan.dynamics import Belief, LinearGaussianSystem
from beliefplan.geometry import (
    AtomicProp,
    Polytope,
    build_adjacency_graph,
    label_belief,
    workspace_marginal,
)
from beliefplan.task_graph import prune_letters
from beliefplan.tree import BeliefTree, PointIndex


def corridor_system(lo=0.0, hi=10.0, dt=0.5, q=1e-4):
    """1D single integrator with velocity input and no measurements."""
    return LinearGaussianSystem(
        a=[[1.0]], b=[[dt]], c=[[1.0]], d=[[0.0]], process_cov=[[q]],
        gain=[[0.8]], input_low=[-1.0], input_high=[1.0],
        state_low=[lo], state_high=[hi], workspace_dims=(0,), dt=dt,
        default_noise_cov=[[0.01]],
    )


def make_world(goal_lo=8.0, goal_hi=10.0, alpha=0.05):
    sys = corridor_system()
    goal = Polytope.from_vertices("goal", [[goal_lo], [goal_hi]])
    regions = {"goal": goal}
    props = [AtomicProp("g", "goal", alpha, "reach")]
    adjacency = build_adjacency_graph([goal], [0.0], [10.0])
    dfa = compile_to_dfa(ltlf.parse_formula("F g", ["g"]))
    pruned = prune_letters(dfa, props, regions, adjacency)

    def labeler(belief):
        mean, cov = workspace_marginal(belief.mean, belief.total_cov, (0,))
        return label_belief(mean, cov, props, regions)

    return sys, pruned, dfa, labeler


def uniform_sampler(sys):
    def sample(q, rng):
        return rng.uniform(sys.state_low, sys.state_high)

    return sample


class TestPointIndex:
    def test_nearest_per_class(self):
        index = PointIndex(2)
        index.add(0, np.array([0.0, 0.0]), 10)
        index.add(0, np.array([5.0, 5.0]), 11)
        index.add(1, np.array([1.0, 1.0]), 12)
        assert index.nearest(0, np.array([4.0, 4.0])) == 11
        assert index.nearest(1, np.array([0.0, 0.0])) == 12
        assert index.count(0) == 2 and index.count(1) == 1
        with pytest.raises(KeyError):
            index.nearest(7, np.array([0.0, 0.0]))

    def test_growth_beyond_initial_capacity(self):
        rng = np.random.default_rng(0)
        index = PointIndex(1)
        pts = rng.uniform(0, 1, size=50)
        for i, x in enumerate(pts):
            index.add(0, np.array([x]), i)
        target = np.array([0.37])
        expect = int(np.argmin(np.abs(pts - 0.37)))
        assert index.nearest(0, target) == expect


class TestExtension:
    def test_single_transition_acceptance(self):
        sys, pruned, dfa, labeler = make_world()
        root = Belief([9.0], [[1e-4]], [[0.0]])
        root_q = pruned.step(dfa.initial, labeler(root))
        # starting confidently inside the goal already accepts
        assert root_q in dfa.accepting

    def test_extension_reaches_acceptance(self):
        sys, pruned, dfa, labeler = make_world(goal_lo=0.5, goal_hi=3.0)
        root = Belief([0.1], [[1e-4]], [[0.0]])
        root_q = pruned.step(dfa.initial, labeler(root))
        assert root_q not in dfa.accepting
        tree = BeliefTree(root, root_q)
        plan = pruned.plan_task(start=root_q)
        rng = np.random.default_rng(1)
        accepted = None
        for _ in range(200):
            v = tree.extend(sys, pruned, plan, uniform_sampler(sys), labeler, rng)
            if v is not None and v.q in dfa.accepting:
                accepted = v
                break
        assert accepted is not None

    def test_blocked_labels_rejected_and_counted(self):
        sys, pruned, dfa, labeler = make_world()
        root = Belief([1.0], [[1e-4]], [[0.0]])
        root_q = pruned.step(dfa.initial, labeler(root))
        tree = BeliefTree(root, root_q)
        plan = pruned.plan_task(start=root_q)

        blocked_symbol = frozenset({"g", "h"})
        pruned.symbol_blocked = lambda symbol: symbol == blocked_symbol  # force a block
        rng = np.random.default_rng(2)
        v = tree.extend(sys, pruned, plan, uniform_sampler(sys),
                        lambda b: blocked_symbol, rng)
        assert v is None
        assert tree.blocked_label_events == 1

    def test_counts_track_vertices(self):
        sys, pruned, dfa, labeler = make_world(goal_lo=0.5, goal_hi=3.0)
        root = Belief([0.1], [[1e-4]], [[0.0]])
        tree = BeliefTree(root, pruned.step(dfa.initial, labeler(root)))
        plan = pruned.plan_task(start=tree.root.q)
        rng = np.random.default_rng(3)
        for _ in range(60):
            tree.extend(sys, pruned, plan, uniform_sampler(sys), labeler, rng)
        counts = tree.counts_by_state()
        assert sum(counts.values()) == len(tree)
        assert all(n >= 0 for n in counts.values())

    def test_corridor_coverage_regression(self):
        # frozen seeded run: fraction of the corridor within 0.1 of a vertex
        sys, pruned, dfa, labeler = make_world(goal_lo=9.0, goal_hi=10.0, alpha=0.5)
        root = Belief([0.2], [[1e-4]], [[0.0]])
        tree = BeliefTree(root, pruned.step(dfa.initial, labeler(root)))
        plan = pruned.plan_task(start=tree.root.q)
        rng = np.random.default_rng(2024)
        for _ in range(500):
            tree.extend(sys, pruned, plan, uniform_sampler(sys), labeler, rng)
        xs = np.array([v.belief.mean[0] for v in tree.vertices])
        grid = np.linspace(0.0, 10.0, 201)
        covered = np.mean([np.min(np.abs(xs - g)) <= 0.1 for g in grid])
        assert covered > 0.9


class TestExtract:
    def build_solved_tree(self, seed=5):
        sys, pruned, dfa, labeler = make_world(goal_lo=0.5, goal_hi=3.0)
        root = Belief([0.1], [[1e-4]], [[0.0]])
        tree = BeliefTree(root, pruned.step(dfa.initial, labeler(root)))
        plan = pruned.plan_task(start=tree.root.q)
        rng = np.random.default_rng(seed)
        for _ in range(500):
            v = tree.extend(sys, pruned, plan, uniform_sampler(sys), labeler, rng)
            if v is not None and v.q in dfa.accepting:
                return tree, v, sys, dfa, labeler
        raise AssertionError("no accepting vertex found")

    def test_extract_and_replay(self):
        tree, vertex, sys, dfa, labeler = self.build_solved_tree()
        plan, beliefs, word, run = tree.extract(vertex, sys, dfa, labeler)
        assert plan.steps == len(word) - 1 == len(run) - 1
        assert run[-1] in dfa.accepting
        assert "g" in word[-1]
        plan.check_consistency(sys)

    def test_replay_is_bit_exact(self):
        tree, vertex, sys, dfa, labeler = self.build_solved_tree()
        one = tree.extract(vertex, sys, dfa, labeler)
        two = tree.extract(vertex, sys, dfa, labeler)
        assert np.array_equal(one[0].controls, two[0].controls)
        for ba, bb in zip(one[1], two[1]):
            assert np.array_equal(ba.mean, bb.mean)
            assert np.array_equal(ba.est_cov, bb.est_cov)

    def test_word_accepted_by_unpruned_automaton(self):
        tree, vertex, sys, dfa, labeler = self.build_solved_tree(seed=6)
        _, _, word, _ = tree.extract(vertex, sys, dfa, labeler)
        assert dfa.accepts(word)

    def test_snapshot_export(self):
        tree, vertex, sys, dfa, labeler = self.build_solved_tree()
        snapshot = tree.to_dict()
        assert len(snapshot["vertices"]) == len(tree)
        ids = [v["id"] for v in snapshot["vertices"]]
        assert ids == sorted(ids)
        assert snapshot["vertices"][0]["parent"] is None

    def test_discrete_consistency_on_arbitrary_branches(self):
        # replaying any stored branch reproduces its labels and automaton
        # states, not just the accepting one
        from beliefplan.dynamics import propagate_belief

        sys, pruned, dfa, labeler = make_world(goal_lo=0.5, goal_hi=3.0)
        root = Belief([0.1], [[1e-4]], [[0.0]])
        tree = BeliefTree(root, pruned.step(dfa.initial, labeler(root)))
        plan = pruned.plan_task(start=tree.root.q)
        rng = np.random.default_rng(9)
        for _ in range(150):
            tree.extend(sys, pruned, plan, uniform_sampler(sys), labeler, rng)
        check = rng.choice(len(tree), size=min(20, len(tree)), replace=False)
        for vid in sorted(int(v) for v in check):
            chain = []
            cur = tree.vertices[vid]
            while cur is not None:
                chain.append(cur)
                cur = tree.vertices[cur.parent] if cur.parent is not None else None
            chain.reverse()
            belief, q = chain[0].belief, chain[0].q
            for vertex in chain[1:]:
                for control in vertex.controls:
                    belief = propagate_belief(sys, belief, control)
                    q = pruned.step(q, labeler(belief))
                assert np.array_equal(belief.mean, vertex.belief.mean)
                assert q == vertex.q
