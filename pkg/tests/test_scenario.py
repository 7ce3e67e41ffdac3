import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashbench.geometry import EgoState, Pose2
from crashbench.scenario import (
    Command,
    ConstructionError,
    JitterRanges,
    Route,
    RoutePoint,
    ScenarioError,
    ScenarioType,
    derive_seed,
    high_level_command,
    instantiate_run,
    reference_impact_speed,
    scripted_ego_state,
)
from conftest import make_spec, straight_route


class TestPlacement:
    def test_stationary_zero_jitter_center_distance(self):
        spec = make_spec(ScenarioType.STATIONARY, ego_speed=10.0)
        inst = instantiate_run(spec, 0)
        target = inst.target_track.initial
        assert target.box.center.x == pytest.approx(40.0, abs=1e-12)
        assert target.box.center.y == pytest.approx(0.0, abs=1e-12)
        assert target.velocity == (0.0, 0.0)
        assert inst.reference_impact_speed == pytest.approx(10.0, abs=1e-9)

    def test_frontal_zero_jitter_closing_gap(self, params):
        spec = make_spec(ScenarioType.FRONTAL, ego_speed=10.0, target_speed=5.0, seed=77)
        inst = instantiate_run(spec, 0)
        target = inst.target_track.initial
        # Center placed at closing_speed * ttc; bumper gap just under 60 m.
        assert target.box.center.x == pytest.approx(60.0, abs=1e-12)
        bumper_gap = target.box.center.x - 0.5 * target.box.length - 0.5 * params.length
        assert 55.0 < bumper_gap < 60.0
        assert inst.reference_impact_speed == pytest.approx(15.0, abs=1e-6)
        assert abs(inst.no_action_contact_time - spec.ttc_init) <= 0.5

    def test_side_crossing_impact_speed_vector_norm(self):
        # Oracle: sqrt(10^2 + 6^2) for a perpendicular crossing.
        spec = make_spec(ScenarioType.SIDE, ego_speed=10.0, target_speed=6.0, seed=5)
        inst = instantiate_run(spec, 0)
        assert inst.reference_impact_speed == pytest.approx(math.hypot(10.0, 6.0), abs=1e-6)

    def test_side_from_left_heading(self):
        spec = make_spec(
            ScenarioType.SIDE,
            ego_speed=10.0,
            target_speed=6.0,
            seed=6,
            target_kwargs={"from_side": "left"},
        )
        inst = instantiate_run(spec, 0)
        assert inst.target_track.initial.box.center.heading == pytest.approx(-math.pi / 2)
        assert inst.target_track.initial.box.center.y > 0.0


class TestDeterminism:
    def test_same_inputs_bit_identical(self):
        spec = make_spec(
            jitter=JitterRanges((-2, 2), (-0.5, 0.5), (-math.pi, math.pi), (0.0, 0.0))
        )
        a = instantiate_run(spec, 3)
        b = instantiate_run(spec, 3)
        assert a == b

    def test_run_index_changes_draw(self):
        spec = make_spec(
            jitter=JitterRanges((-2, 2), (-0.5, 0.5), (-math.pi, math.pi), (0.0, 0.0))
        )
        a = instantiate_run(spec, 0)
        b = instantiate_run(spec, 1)
        assert a.jitter_draw != b.jitter_draw

    def test_seed_changes_draw(self):
        jit = JitterRanges((-2, 2), (-0.5, 0.5), (-math.pi, math.pi), (0.0, 0.0))
        a = instantiate_run(make_spec(jitter=jit, seed=1), 0)
        b = instantiate_run(make_spec(jitter=jit, seed=2), 0)
        assert a.jitter_draw != b.jitter_draw

    def test_derive_seed_domain_separation(self):
        assert derive_seed(1, 0, 0, "jitter") != derive_seed(1, 0, 0, "observation")


class TestJitterBounds:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 99))
    def test_draws_inside_ranges(self, run_index):
        jit = JitterRanges((-2, 2), (-0.5, 0.5), (-0.3, 0.3), (0.0, 0.0))
        spec = make_spec(jitter=jit, seed=31415)
        inst = instantiate_run(spec, run_index)
        lon, lat, rot, dspd = inst.jitter_draw
        assert -2 <= lon <= 2
        assert -0.5 <= lat <= 0.5
        assert -0.3 <= rot <= 0.3
        assert dspd == 0.0

    def test_intervals_must_contain_zero(self):
        with pytest.raises(ScenarioError):
            JitterRanges(longitudinal=(1.0, 2.0))


class TestFeasibility:
    def test_rejection_and_redraw(self):
        # Wide lateral jitter shifts the crossing arrival by up to +/-1.3 s,
        # so many draws miss the contact window and must be redrawn.
        spec = make_spec(
            ScenarioType.SIDE,
            ego_speed=10.0,
            target_speed=6.0,
            seed=13,
            jitter=JitterRanges(lateral=(-8.0, 8.0)),
        )
        attempts = [instantiate_run(spec, i).attempts for i in range(40)]
        assert max(attempts) > 1  # some draws rejected
        assert all(
            abs(instantiate_run(spec, i).no_action_contact_time - 4.0) <= 0.5
            for i in range(10)
        )

    def test_exhaustion_raises(self):
        # A parked blocker in the lane is always hit before the target, so
        # every draw is rejected and the retry budget runs out.
        from crashbench.geometry import ActorClass, ActorState, OrientedBox

        blocker = ActorState(
            OrientedBox(Pose2(20.0, 0.0, 0.0), 4.084, 1.730),
            (0.0, 0.0),
            ActorClass.CAR,
            "blocker",
        )
        spec = make_spec(
            ScenarioType.STATIONARY,
            ego_speed=10.0,
            seed=13,
            background_actors=(blocker,),
        )
        with pytest.raises(ConstructionError):
            instantiate_run(spec, 0)

    def test_stationary_speed_jitter_rejected(self):
        with pytest.raises(ScenarioError):
            make_spec(ScenarioType.STATIONARY, jitter=JitterRanges(speed=(-1.0, 1.0)))

    def test_run_index_bounds(self):
        spec = make_spec()
        with pytest.raises(ValueError):
            instantiate_run(spec, spec.runs)


class TestCollisionGuarantee:
    @pytest.mark.parametrize(
        "scenario_type,target_speed,kwargs",
        [
            (ScenarioType.STATIONARY, 0.0, {}),
            (ScenarioType.FRONTAL, 5.0, {}),
            (ScenarioType.SIDE, 6.0, {}),
        ],
    )
    def test_no_action_rollout_window(self, scenario_type, target_speed, kwargs):
        jit = (
            JitterRanges((-2, 2), (-0.5, 0.5), (-math.pi, math.pi))
            if scenario_type is ScenarioType.STATIONARY
            else JitterRanges((-2, 2), (-0.8, 0.8), (-0.05, 0.05), (-1, 1))
        )
        spec = make_spec(scenario_type, 10.0, target_speed, jitter=jit, seed=999, **kwargs)
        for i in range(50):
            inst = instantiate_run(spec, i)
            assert abs(inst.no_action_contact_time - spec.ttc_init) <= 0.5
            assert inst.reference_impact_speed > 0.0

    def test_stationary_target_speed_exactly_zero_whole_horizon(self):
        spec = make_spec(
            ScenarioType.STATIONARY,
            jitter=JitterRanges((-2, 2), (-0.5, 0.5), (-math.pi, math.pi)),
            seed=4242,
        )
        inst = instantiate_run(spec, 7)
        for t in (0.0, 5.0, 20.0):
            assert inst.target_track.state_at(t).speed == 0.0
            assert inst.target_track.state_at(t).box == inst.target_track.initial.box


class TestReferenceImpactSpeed:
    def test_head_on_equal_speeds(self, params):
        spec = make_spec(ScenarioType.FRONTAL, ego_speed=8.0, target_speed=8.0, seed=2)
        inst = instantiate_run(spec, 0)
        v = reference_impact_speed(
            inst.ego_init, 0.0, inst.tracks(), params, spec.horizon
        )
        assert v == pytest.approx(16.0, abs=1e-6)
        assert v == inst.reference_impact_speed

    def test_no_contact_raises(self, params):
        spec = make_spec(ScenarioType.STATIONARY, seed=3)
        inst = instantiate_run(spec, 0)
        ego_far = EgoState(Pose2(0.0, 50.0, 0.0), 10.0, 0.0)
        with pytest.raises(ConstructionError):
            reference_impact_speed(ego_far, 0.0, inst.tracks(), params, spec.horizon)


def bent_route(angle_deg: float, turn_at: float = 10.0) -> Route:
    a = math.radians(angle_deg)
    p1 = (turn_at, 0.0)
    p2 = (turn_at + 60.0 * math.cos(a), 60.0 * math.sin(a))
    return Route(
        (
            RoutePoint(-40.0, 0.0, 10.0),
            RoutePoint(p1[0], p1[1], 10.0),
            RoutePoint(p2[0], p2[1], 10.0),
        )
    )


class TestHighLevelCommand:
    def test_straight_route(self):
        assert high_level_command(Pose2(0, 0, 0), straight_route()) is Command.STRAIGHT

    def test_left_turn_ahead(self):
        assert high_level_command(Pose2(0, 0, 0), bent_route(90.0)) is Command.LEFT

    def test_right_turn_ahead(self):
        assert high_level_command(Pose2(0, 0, 0), bent_route(-90.0)) is Command.RIGHT

    def test_gentle_drift_below_threshold(self):
        # Oracle: integrate the route heading change over the 20 m window.
        route = bent_route(10.0)
        s0 = route.project(0.0, 0.0)
        total = route.heading_at(s0 + 20.0) - route.heading_at(s0)
        assert abs(total) < math.radians(15.0)
        assert high_level_command(Pose2(0, 0, 0), route) is Command.STRAIGHT

    def test_beyond_route_end(self):
        assert high_level_command(Pose2(500, 0, 0), straight_route()) is Command.STRAIGHT


def test_scripted_ego_state_replays_route():
    spec = make_spec()
    s = scripted_ego_state(spec, -4.0)
    assert s.pose.x == pytest.approx(-40.0, abs=1e-9)
    assert s.pose.y == 0.0
    assert s.speed == 10.0
    assert s.time == -4.0
