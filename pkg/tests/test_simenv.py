"""Tests for the navigation simulator, world validation and built-in arenas."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcf_nav.errors import ArenaConfigError
from mcf_nav.sim import (
    OBS_DIM,
    NavigationEnv,
    Observation,
    RobotState,
    WorldSpec,
    arena_by_name,
    arena_names,
    builtin_arenas,
    lidar_scan,
    load_world,
    make_observation,
    parse_world,
    reset,
    resolve_arena,
    step,
    unseen_arena,
)
from mcf_nav.sim.geometry import (
    point_circle_distances,
    point_segment_distances,
    ray_circle_distances,
    ray_segment_distances,
    wrap_angle,
)


class TestGeometry:
    @pytest.mark.parametrize(
        ("theta", "expected"),
        [(0.0, 0.0), (-math.pi, math.pi), (math.pi, math.pi), (3 * math.pi, math.pi), (2.5 * math.pi, 0.5 * math.pi)],
    )
    def test_wrap_angle(self, theta, expected):
        assert wrap_angle(theta) == pytest.approx(expected)

    def test_ray_hits_segment(self):
        d = ray_segment_distances(
            np.array([0.0, 0.0]), np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([[2.0, -1.0, 2.0, 1.0]])
        )
        assert d[0] == pytest.approx(2.0)
        assert math.isinf(d[1])

    def test_ray_hits_circle(self):
        d = ray_circle_distances(np.array([0.0, 0.0]), np.array([[1.0, 0.0]]), np.array([[3.0, 0.0, 0.5]]))
        assert d[0] == pytest.approx(2.5)

    def test_point_distances(self):
        pts = np.array([[0.0, 1.0], [3.0, 0.0]])
        seg = point_segment_distances(pts, np.array([[-1.0, 0.0, 1.0, 0.0]]))
        assert seg == pytest.approx([1.0, 2.0])
        circ = point_circle_distances(pts, np.array([[0.0, 0.0, 0.5]]))
        assert circ == pytest.approx([0.5, 2.5])


class TestReset:
    def test_deterministic_for_seed(self, open_world):
        s1, g1, o1 = reset(open_world, 42)
        s2, g2, o2 = reset(open_world, 42)
        assert (s1, g1, o1) == (s2, g2, o2)

    def test_start_and_goal_in_regions(self, open_world):
        for seed in range(20):
            state, goal, _ = reset(open_world, seed)
            x0, y0, x1, y1 = open_world.start_region
            assert x0 <= state.x <= x1 and y0 <= state.y <= y1
            gx0, gy0, gx1, gy1 = open_world.goal_region
            assert gx0 <= goal[0] <= gx1 and gy0 <= goal[1] <= gy1
            assert -math.pi < state.theta <= math.pi

    def test_observation_layout(self, open_world):
        _, _, obs = reset(open_world, 3)
        values = obs.as_array()
        assert values.shape == (OBS_DIM,)
        assert np.all((values[:15] >= 0.0) & (values[:15] <= 1.0))
        assert -1.0 <= obs.angle_to_goal <= 1.0
        assert 0.0 <= obs.dist_to_goal <= 1.0
        assert (obs.prev_v, obs.prev_w) == (0.0, 0.0)
        assert Observation.from_array(values) == obs


class TestStep:
    def test_straight_motion(self, open_world):
        state = RobotState(x=5.0, y=2.5, theta=0.0)
        new_state, result = step(state, (1.0, 0.0), open_world, (9.0, 2.5))
        assert new_state.x == pytest.approx(5.05)
        assert new_state.y == pytest.approx(2.5)
        assert new_state.steps == 1
        assert new_state.prev_action == (1.0, 0.0)
        assert result.done_reason == "running"
        assert result.reward == 0

    def test_turning(self, open_world):
        state = RobotState(x=5.0, y=2.5, theta=0.0)
        new_state, _ = step(state, (0.0, 1.0), open_world, (9.0, 2.5))
        assert new_state.theta == pytest.approx(0.1)
        assert (new_state.x, new_state.y) == (5.0, 2.5)

    def test_actions_are_clipped(self, open_world):
        state = RobotState(x=5.0, y=2.5, theta=0.0)
        clipped, _ = step(state, (3.0, -7.0), open_world, (9.0, 2.5))
        direct, _ = step(state, (1.0, -1.0), open_world, (9.0, 2.5))
        assert clipped == direct

    def test_non_finite_action_rejected(self, open_world):
        with pytest.raises(ValueError):
            step(RobotState(5.0, 2.5, 0.0), (math.nan, 0.0), open_world, (9.0, 2.5))

    def test_goal_reached(self, open_world):
        state = RobotState(x=8.78, y=2.5, theta=0.0)
        _, result = step(state, (1.0, 0.0), open_world, (9.0, 2.5))
        assert result.done_reason == "goal"
        assert result.reward == 1
        assert result.done

    def test_collision_with_border(self, open_world):
        state = RobotState(x=9.78, y=2.5, theta=0.0)
        _, result = step(state, (1.0, 0.0), open_world, (1.0, 2.5))
        assert result.done_reason == "collision"
        assert result.reward == 0

    def test_timeout(self, open_world):
        env = NavigationEnv(open_world)
        env.reset(0)
        reasons = []
        while not env.done:
            reasons.append(env.step((0.0, 0.0)).done_reason)
        assert len(reasons) == open_world.max_steps
        assert reasons[-1] == "timeout"

    def test_env_tracks_path_length(self, open_world):
        env = NavigationEnv(open_world)
        env.place(RobotState(x=5.0, y=2.5, theta=0.0), (9.0, 2.5))
        for _ in range(10):
            env.step((1.0, 0.0))
        assert env.path_length == pytest.approx(0.5)

    def test_step_after_done_raises(self, open_world):
        env = NavigationEnv(open_world)
        env.place(RobotState(x=9.78, y=2.5, theta=0.0), (1.0, 2.5))
        env.step((1.0, 0.0))
        with pytest.raises(RuntimeError):
            env.step((1.0, 0.0))


class TestLidar:
    def test_open_arena_ranges(self, open_world):
        scan = lidar_scan(RobotState(x=5.0, y=2.5, theta=0.0), open_world)
        assert scan.shape == (180,)
        # first beam points at -pi/2, toward the y = 0 border
        assert scan[0] == pytest.approx(2.5)
        assert scan[-1] == pytest.approx(2.5)
        assert scan[90] == pytest.approx(5.0)

    def test_capped_at_max_range(self, open_world):
        scan = lidar_scan(RobotState(x=1.0, y=2.5, theta=0.0), open_world)
        assert scan.max() <= open_world.lidar.max_range

    def test_noise_needs_generator(self):
        world = WorldSpec.model_validate(
            {**arena_by_name("open").model_dump(), "lidar": {"max_range": 5.0, "noise_sigma": 0.05}}
        )
        state = RobotState(x=5.0, y=2.5, theta=0.0)
        assert np.array_equal(lidar_scan(state, world), lidar_scan(state, world))
        noisy = lidar_scan(state, world, np.random.default_rng(0))
        assert not np.array_equal(noisy, lidar_scan(state, world))


class TestArenas:
    def test_five_training_arenas(self):
        names = [w.name for w in builtin_arenas()]
        assert names == ["open", "scattered", "wall_gaps", "dead_end", "corridor"]

    def test_unseen_is_separate(self):
        assert unseen_arena().name == "unseen"
        assert "unseen" in arena_names()
        assert "unseen" not in [w.name for w in builtin_arenas()]

    def test_unknown_arena(self):
        with pytest.raises(ArenaConfigError, match="Unknown arena"):
            arena_by_name("nowhere")

    def test_size_is_the_diagonal(self, open_world):
        assert open_world.diagonal == pytest.approx(math.hypot(10.0, 5.0))
        assert not hasattr(open_world, "length")

    @pytest.mark.parametrize("name", ["open", "scattered", "wall_gaps", "dead_end", "corridor", "unseen"])
    def test_every_arena_resets(self, name):
        world = arena_by_name(name)
        for seed in range(5):
            state, goal, _ = reset(world, seed)
            assert world.is_free(state.x, state.y)
            assert world.is_free(*goal)


class TestWorldFiles:
    def test_roundtrip_through_json(self, tmp_path):
        world = arena_by_name("dead_end")
        path = tmp_path / "dead_end.json"
        path.write_text(json.dumps(world.to_json_dict()), encoding="utf-8")
        loaded = load_world(path)
        assert loaded.walls == world.walls
        assert resolve_arena(str(path)).name == "dead_end"

    def test_unknown_key_reports_line(self):
        text = '{\n  "bounds": [0, 0, 10, 5],\n  "bogus": 1,\n  "start_region": [0.5, 1.5, 1.0, 3.5],\n  "goal_region": [9.0, 1.5, 9.5, 3.5]\n}'
        with pytest.raises(ArenaConfigError) as exc:
            parse_world(text)
        assert exc.value.line == 3
        assert "line 3" in str(exc.value)

    def test_invalid_json_reports_line(self):
        with pytest.raises(ArenaConfigError) as exc:
            parse_world('{\n  "bounds": [0, 0, 10, 5],\n  oops\n}')
        assert exc.value.line == 3

    def test_region_inside_obstacle_rejected(self):
        spec = {
            "bounds": [0, 0, 10, 5],
            "circles": [[0.75, 2.5, 0.5]],
            "start_region": [0.5, 1.5, 1.0, 3.5],
            "goal_region": [9.0, 1.5, 9.5, 3.5],
        }
        with pytest.raises(ArenaConfigError):
            parse_world(json.dumps(spec))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArenaConfigError, match="not found"):
            load_world(tmp_path / "absent.json")


def _ray_circle_oracle(origin, direction, circle) -> float:
    """Smallest non-negative root of |o + t d - c|^2 = r^2 for a unit direction."""
    fx, fy = origin[0] - circle[0], origin[1] - circle[1]
    b = direction[0] * fx + direction[1] * fy
    c = fx * fx + fy * fy - circle[2] ** 2
    disc = b * b - c
    if disc < 0.0:
        return math.inf
    roots = sorted((-b - math.sqrt(disc), -b + math.sqrt(disc)))
    return next((t for t in roots if t >= 0.0), math.inf)


def _random_walk(world: WorldSpec, seed: int):
    """Yield (state, result) pairs of one episode driven by uniform random actions."""
    env = NavigationEnv(world)
    env.reset(seed)
    rng = np.random.default_rng(seed + 1)
    while not env.done:
        result = env.step(tuple(rng.uniform(-1.0, 1.0, 2)))
        assert env.state is not None
        yield env.state, result


class TestGeometryOracles:
    def test_ray_circle_matches_scalar_quadratic(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            origin = rng.uniform(-3.0, 3.0, 2)
            angle = rng.uniform(-math.pi, math.pi)
            direction = np.array([math.cos(angle), math.sin(angle)])
            circle = (*rng.uniform(-3.0, 3.0, 2), rng.uniform(0.1, 2.0))
            got = ray_circle_distances(origin, direction[None, :], np.array([circle]))[0]
            expected = _ray_circle_oracle(origin, direction, circle)
            if math.isinf(expected):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(expected, abs=1e-9)

    @given(st.floats(min_value=-50.0, max_value=50.0))
    def test_wrap_angle_range(self, theta):
        wrapped = wrap_angle(theta)
        assert -math.pi < wrapped <= math.pi
        assert math.cos(wrapped) == pytest.approx(math.cos(theta), abs=1e-9)
        assert math.sin(wrapped) == pytest.approx(math.sin(theta), abs=1e-9)


class TestKinematics:
    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=-math.pi, max_value=math.pi, exclude_min=True),
        st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=1, max_size=40),
    )
    def test_heading_stays_wrapped(self, theta, turns):
        world = arena_by_name("open")
        state = RobotState(x=5.0, y=2.5, theta=theta)
        for w in turns:
            state, _ = step(state, (0.0, w), world, (9.0, 2.5))
            assert -math.pi < state.theta <= math.pi

    def test_zero_action_keeps_pose(self, open_world):
        state = RobotState(x=3.0, y=1.0, theta=-2.0)
        new_state, _ = step(state, (0.0, 0.0), open_world, (9.0, 2.5))
        assert (new_state.x, new_state.y, new_state.theta) == (3.0, 1.0, -2.0)

    def test_same_seed_and_actions_give_same_trajectory(self):
        world = arena_by_name("scattered")
        first = [(s.x, s.y, s.theta) for s, _ in _random_walk(world, 5)]
        second = [(s.x, s.y, s.theta) for s, _ in _random_walk(world, 5)]
        assert first == second

    @pytest.mark.parametrize("name", ["scattered", "wall_gaps", "corridor"])
    def test_no_overlap_without_collision(self, name):
        world = arena_by_name(name)
        for seed in range(20):
            for state, result in _random_walk(world, seed):
                if result.done_reason != "collision":
                    assert world.clearance(np.array([[state.x, state.y]]))[0] >= world.robot_radius

    @pytest.mark.parametrize("name", ["open", "scattered", "corridor"])
    def test_reward_is_sparse(self, name):
        world = arena_by_name(name)
        for seed in range(20):
            rewards = [result.reward for _, result in _random_walk(world, seed)]
            assert sum(rewards) in (0, 1)
            assert all(r == 0 for r in rewards[:-1])


class TestObservation:
    def test_zero_beam_shows_in_its_bin(self, open_world):
        scan = np.full(180, open_world.lidar.max_range)
        scan[90] = 0.0
        obs = make_observation(RobotState(5.0, 2.5, 0.0), (9.0, 2.5), scan, open_world)
        bins = np.array(obs.lidar_bins)
        assert bins[7] == 0.0
        assert np.all(np.delete(bins, 7) == 1.0)

    def test_bin_seven_covers_center_beams(self, open_world):
        for beam in (84, 95):
            scan = np.full(180, open_world.lidar.max_range)
            scan[beam] = 0.0
            obs = make_observation(RobotState(5.0, 2.5, 0.0), (9.0, 2.5), scan, open_world)
            assert obs.lidar_bins[7] == 0.0

    def test_facing_goal_has_zero_angle(self, open_world):
        state = RobotState(x=2.0, y=2.5, theta=0.0)
        obs = make_observation(state, (9.0, 2.5), lidar_scan(state, open_world), open_world)
        assert obs.angle_to_goal == 0.0
        assert obs.dist_to_goal == pytest.approx(7.0 / open_world.diagonal)

    def test_wall_one_meter_ahead(self):
        world = WorldSpec.model_validate(
            {**arena_by_name("open").model_dump(), "walls": [(6.0, 0.0, 6.0, 5.0)]}
        )
        scan = lidar_scan(RobotState(x=5.0, y=2.5, theta=0.0), world)
        assert scan[89] == pytest.approx(1.0, abs=1e-3)
        assert scan[90] == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.slow
    def test_bounds_over_long_random_driving(self):
        steps = 0
        seed = 0
        worlds = [arena_by_name(name) for name in arena_names()]
        while steps < 100_000:
            world = worlds[seed % len(worlds)]
            for _, result in _random_walk(world, seed):
                values = result.observation.as_array()
                assert np.all((values[:15] >= 0.0) & (values[:15] <= 1.0))
                assert -1.0 <= values[15] <= 1.0
                assert 0.0 <= values[16] <= 1.0
                assert np.all(np.abs(values[17:]) <= 1.0)
                steps += 1
            seed += 1


class TestResetSeparation:
    @pytest.mark.slow
    @pytest.mark.parametrize("name", arena_names())
    def test_start_and_goal_far_apart(self, name):
        world = arena_by_name(name)
        x0, y0, x1, y1 = world.bounds
        min_gap = 0.75 * max(x1 - x0, y1 - y0)
        for seed in range(10_000):
            state, goal, _ = reset(world, seed)
            assert goal[0] - state.x >= min_gap
