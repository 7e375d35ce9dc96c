import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beliefplan.dynamics import propagate_covariances
from beliefplan.guide import (
    GuidePath,
    SimplifiedModel,
    biased_target,
    fixed_speed_step,
    plan_guide,
    segment_for,
)
from beliefplan.planner import PlannerConfig, _build_state, derive_seed
from beliefplan.task_graph import TaskPlan


def normalized(vec):
    vec = np.asarray(vec, dtype=float)
    return vec / np.linalg.norm(vec)


class TestFixedSpeedStep:
    def test_axis_step(self):
        out = fixed_speed_step(np.array([0.0, 0.0]), np.array([1.0, 0.0]), 1.0, 1.0)
        assert np.allclose(out, [1.0, 0.0])

    def test_diagonal_preserves_speed(self):
        d = normalized([1.0, 1.0])
        out = fixed_speed_step(np.zeros(2), d, 1.0, 1.0)
        assert np.allclose(out, [np.sqrt(0.5), np.sqrt(0.5)])
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            fixed_speed_step(np.zeros(2), np.zeros(2), 1.0, 1.0)

    def test_nonunit_direction_rejected(self):
        with pytest.raises(ValueError):
            fixed_speed_step(np.zeros(2), np.array([2.0, 0.0]), 1.0, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=2).filter(
        lambda v: np.linalg.norm(v) > 1e-3
    ))
    def test_step_norm_always_vmax_dt(self, direction):
        d = normalized(direction)
        out = fixed_speed_step(np.array([0.3, -0.7]), d, 0.8, 0.5)
        assert np.linalg.norm(out - [0.3, -0.7]) == pytest.approx(0.4, abs=1e-12)


class TestGuidePath:
    def test_speed_invariant_check(self):
        points = np.array([[0.0, 0.0], [0.3, 0.0], [0.6, 0.0]])
        path = GuidePath(points, (0, 0, 1))
        path.check_speed(v_max=0.6, dt=0.5)
        with pytest.raises(ValueError):
            path.check_speed(v_max=0.2, dt=0.5)

    def test_alignment_required(self):
        with pytest.raises(ValueError):
            GuidePath(np.zeros((3, 2)), (0, 1))


class TestSegments:
    GUIDE = GuidePath(
        np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]),
        (0, 0, 1, 1, 2),
    )
    PLAN = TaskPlan(states=(0, 1, 2))

    def test_full_block_plus_successor(self):
        seg = segment_for(0, self.PLAN, self.GUIDE)
        assert seg.qs == (0, 0, 1)
        assert np.allclose(seg.points[:, 0], [0.0, 1.0, 2.0])

    def test_middle_state(self):
        seg = segment_for(1, self.PLAN, self.GUIDE)
        assert seg.qs == (1, 1, 2)

    def test_last_state_no_successor(self):
        seg = segment_for(2, self.PLAN, self.GUIDE)
        assert seg.qs == (2,)

    def test_absent_state_empty(self):
        seg = segment_for(9, self.PLAN, self.GUIDE)
        assert len(seg) == 0

    def test_successor_mismatch_not_included(self):
        guide = GuidePath(np.zeros((3, 2)), (0, 0, 5))
        seg = segment_for(0, self.PLAN, guide)
        assert seg.qs == (0, 0)


class TestBiasedSampling:
    MODEL = SimplifiedModel(projection=(0, 1), kind="geometric", v_max=1.0,
                            lift=(None, None))
    LOW = np.array([0.0, 0.0])
    HIGH = np.array([10.0, 10.0])
    SEGMENT = GuidePath(np.array([[2.0, 2.0], [2.5, 2.0], [3.0, 2.0]]), (0, 0, 0))

    def seg_distance(self, pts):
        return np.min(
            np.linalg.norm(pts[:, None, :] - self.SEGMENT.points[None, :, :], axis=2),
            axis=1,
        )

    def test_full_bias_stays_within_radius(self):
        rng = np.random.default_rng(0)
        pts = np.array([
            biased_target(self.SEGMENT, 0.5, 1.0, self.MODEL, self.LOW, self.HIGH, rng)
            for _ in range(10_000)
        ])
        assert np.all(self.seg_distance(pts) <= 0.5 + 1e-9)

    def test_zero_bias_is_uniform(self):
        from scipy.stats import chisquare

        rng = np.random.default_rng(1)
        pts = np.array([
            biased_target(self.SEGMENT, 0.5, 0.0, self.MODEL, self.LOW, self.HIGH, rng)
            for _ in range(10_000)
        ])
        counts, _ = np.histogram(pts[:, 0], bins=10, range=(0.0, 10.0))
        assert chisquare(counts).pvalue > 0.01

    def test_partial_bias_fraction(self):
        rng = np.random.default_rng(2)
        pr, radius, n = 0.75, 0.5, 20_000
        pts = np.array([
            biased_target(self.SEGMENT, radius, pr, self.MODEL, self.LOW, self.HIGH, rng)
            for _ in range(n)
        ])
        near = self.seg_distance(pts) <= radius + 1e-9
        # uniform draws land near the segment too: estimate that overlap
        # with an independent seed and correct the expectation
        rng2 = np.random.default_rng(3)
        uni = rng2.uniform(self.LOW, self.HIGH, size=(200_000, 2))
        overlap = np.mean(np.min(
            np.linalg.norm(uni[:, None, :] - self.SEGMENT.points[None, :, :], axis=2),
            axis=1,
        ) <= radius)
        expected = pr + (1 - pr) * overlap
        se = np.sqrt(expected * (1 - expected) / n)
        assert abs(near.mean() - expected) <= 3 * se + 0.01

    def test_empty_segment_falls_back_to_uniform(self):
        rng = np.random.default_rng(4)
        empty = GuidePath(np.zeros((0, 2)), ())
        pts = np.array([
            biased_target(empty, 0.5, 1.0, self.MODEL, self.LOW, self.HIGH, rng)
            for _ in range(2000)
        ])
        assert pts[:, 0].max() > 8.0 and pts[:, 0].min() < 2.0

    def test_lift_defaults_fill_unprojected_dims(self):
        model = SimplifiedModel(projection=(0, 1), kind="geometric", v_max=1.0,
                                lift=(None, None, 0.25, None))
        low = np.array([0.0, 0.0, -1.0, -1.0])
        high = np.array([10.0, 10.0, 1.0, 1.0])
        rng = np.random.default_rng(5)
        pts = np.array([
            biased_target(self.SEGMENT, 0.5, 1.0, model, low, high, rng)
            for _ in range(500)
        ])
        assert np.all(pts[:, 2] == 0.25)        # declared default
        assert np.std(pts[:, 3]) > 0.1          # undeclared dim stays random

    def test_parameter_validation(self):
        rng = np.random.default_rng(6)
        with pytest.raises(ValueError):
            biased_target(self.SEGMENT, 0.5, 1.5, self.MODEL, self.LOW, self.HIGH, rng)
        with pytest.raises(ValueError):
            biased_target(self.SEGMENT, -1.0, 0.5, self.MODEL, self.LOW, self.HIGH, rng)


class TestSimplifiedModel:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            SimplifiedModel(projection=(0,), kind="magic", v_max=1.0, lift=(None,))

    def test_lift_point(self):
        model = SimplifiedModel(projection=(0, 2), kind="sba", v_max=1.0,
                                lift=(None, 7.0, None, None))
        full = model.lift_point(np.array([1.0, 2.0]), 4)
        assert np.allclose(full, [1.0, 7.0, 2.0, 0.0])


class TestGuideSearch:
    def test_guide_found_reliably_on_reach_task(self, underwater):
        config = PlannerConfig(seed=0, guide_kind="sba")
        found = 0
        trials = 20
        for t in range(trials):
            state = _build_state(underwater, config)
            plan = state.pruned.plan_task(start=state.root_q)
            rng = np.random.default_rng(derive_seed(100, t))
            path = state.guide_search.grow(plan, 4000, rng, max_steps=5)
            if path is not None:
                path.check_speed(underwater.simba.v_max, underwater.system.dt)
                found += 1
        assert found >= int(0.95 * trials)

    def test_one_shot_wrapper(self, underwater):
        config = PlannerConfig(seed=3, guide_kind="sba")
        state = _build_state(underwater, config)
        plan = state.pruned.plan_task(start=state.root_q)
        path = plan_guide(
            underwater.simba, underwater.system, state.pruned, plan,
            underwater.initial_mean, underwater.initial_cov,
            underwater.guide_labeler(underwater.simba),
            iterations=4000, rng=np.random.default_rng(5),
        )
        assert path is not None
        assert path.qs[-1] in state.dfa.accepting

    def test_geometric_guide_ignores_uncertainty(self, underwater):
        # same world, no covariance: guides may dive without localizing
        model = SimplifiedModel(projection=(0, 1), kind="geometric", v_max=1.0,
                                lift=(None, None, 0.0, 0.0))
        config = PlannerConfig(seed=1, guide_kind="geo")
        state = _build_state(underwater, config)
        plan = state.pruned.plan_task(start=state.root_q)
        path = plan_guide(
            model, underwater.system, state.pruned, plan,
            underwater.initial_mean, underwater.initial_cov,
            underwater.guide_labeler(model),
            iterations=4000, rng=np.random.default_rng(2),
        )
        assert path is not None

    def test_sba_routes_through_measured_zone_when_needed(self, underwater_dict):
        """Start dispersed and below the surface strip: only measurement
        updates can shrink the covariance enough for the goal label, so
        every covariance-aware guide must visit the strip; the geometric
        guide is free to dive straight."""
        import json

        raw = json.loads(json.dumps(underwater_dict))
        raw["initial_belief"]["mean"] = [1.0, 3.5, 0.0, 0.0]
        raw["initial_belief"]["cov"] = np.diag([0.2, 0.2, 0.0025, 0.0025]).tolist()
        from beliefplan.scenario import load_scenario

        scenario = load_scenario(raw)
        strip_floor = 4.4  # bottom of the measured surface strip

        # every covariance-aware guide ascends into the strip
        found = 0
        for t in range(4):
            config = PlannerConfig(seed=0, guide_kind="sba")
            state = _build_state(scenario, config)
            plan = state.pruned.plan_task(start=state.root_q)
            path = state.guide_search.grow(
                plan, 6000, np.random.default_rng(derive_seed(900, t)), max_steps=5
            )
            if path is None:
                continue
            found += 1
            assert path.points[:, 1].max() >= strip_floor
        assert found > 0, "no covariance-aware guide found"

        # the mechanism: a straight dive labels the goal under geometric
        # (mean-membership) labeling but never under covariance tracking
        model = scenario.simba
        sys = scenario.system
        geo_label = scenario.guide_labeler(
            type(model)(projection=model.projection, kind="geometric",
                        v_max=model.v_max, lift=model.lift)
        )
        sba_label = scenario.guide_labeler(model)
        start = scenario.initial_mean[list(model.projection)]
        goal_center = np.array([8.5, 1.2])
        step = model.v_max * sys.dt
        direction = (goal_center - start) / np.linalg.norm(goal_center - start)
        est = np.array(scenario.initial_cov)
        dev = np.zeros_like(est)
        point = start.copy()
        geo_hit = sba_hit = False
        for _ in range(60):
            point = point + step * direction
            if np.linalg.norm(point - goal_center) < step:
                point = goal_center.copy()
            assert point[1] < strip_floor  # the dive never enters the strip
            lifted = model.lift_point(point, sys.state_dim)
            est, dev = propagate_covariances(sys, est, dev, lifted)
            geo_hit = geo_hit or "a" in geo_label(point, None, None)
            sba_hit = sba_hit or "a" in sba_label(point, est, dev)
            if np.allclose(point, goal_center):
                break
        assert geo_hit, "geometric labeling should accept the straight dive"
        assert not sba_hit, "covariance tracking must reject the unlocalized dive"

    def test_sba_covariance_tracks_full_recursion(self, underwater):
        model = underwater.simba
        sys = underwater.system
        config = PlannerConfig(seed=2, guide_kind="sba")
        state = _build_state(underwater, config)
        search = state.guide_search
        plan = state.pruned.plan_task(start=state.root_q)
        rng = np.random.default_rng(7)
        path = search.grow(plan, 4000, rng, max_steps=5)
        assert path is not None
        # replay a chain: covariances must match the library recursion
        leaf = next(v for v in reversed(search.vertices) if v.parent is not None)
        parent = search.vertices[leaf.parent]
        lifted = model.lift_point(leaf.point, sys.state_dim)
        est, dev = propagate_covariances(sys, parent.est_cov, parent.dev_cov, lifted)
        assert np.array_equal(est, leaf.est_cov)
        assert np.array_equal(dev, leaf.dev_cov)
