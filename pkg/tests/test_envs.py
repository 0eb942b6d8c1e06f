import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linadapt import envs
from linadapt.envs import Env, TaskSpec, reset, sample_task_set, state_vector, step


def goal_task(goal=(1.0, 0.0), split="train", tid=0):
    return TaskSpec("goal_nav", goal, split, tid)


class TestSampling:
    def test_direction_train_vectors_in_upper_half_plane(self):
        rng = np.random.default_rng(0)
        tasks = sample_task_set("direction", 2, 1, 1, rng)
        train = [t for t in tasks if t.split == "train"]
        assert len(train) == 2
        for t in train:
            assert np.hypot(*t.goal) == pytest.approx(1.0, abs=1e-9)
            assert t.goal[1] >= 0.0

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("family", envs.FAMILIES)
    def test_ood_disjoint_from_train_region(self, family, seed):
        rng = np.random.default_rng(seed)
        tasks = sample_task_set(family, 8, 4, 4, rng)
        for t in tasks:
            angle = np.arctan2(t.goal[1], t.goal[0]) % (2 * np.pi)
            if t.split == "test_ood":
                assert np.pi <= angle < 2 * np.pi
            else:
                assert 0 <= angle < np.pi

    def test_monte_carlo_angular_range(self):
        rng = np.random.default_rng(7)
        tasks = sample_task_set("goal_nav", 1000, 1, 1, rng)
        angles = [
            np.arctan2(t.goal[1], t.goal[0]) for t in tasks if t.split == "train"
        ]
        assert min(angles) >= 0.0
        assert max(angles) <= np.pi

    def test_unique_ids(self):
        tasks = sample_task_set("goal_nav", 5, 3, 3, np.random.default_rng(0))
        ids = [t.id for t in tasks]
        assert len(set(ids)) == len(ids)

    def test_invalid_counts_rejected(self):
        with pytest.raises(ValueError):
            sample_task_set("goal_nav", 0, 1, 1, np.random.default_rng(0))

    def test_sparse_requires_radius(self):
        with pytest.raises(ValueError):
            TaskSpec("sparse_nav", (1.0, 0.0), "train", 0, sparsity_radius=0.0)

    def test_direction_norm_enforced(self):
        with pytest.raises(ValueError):
            TaskSpec("direction", (1.0, 1.0), "train", 0)


class TestReset:
    def test_position_origin(self):
        s = reset(goal_task())
        np.testing.assert_array_equal(s.position, [0.0, 0.0])
        assert s.step_index == 0
        assert not s.done

    def test_reset_deterministic(self):
        a, b = reset(goal_task()), reset(goal_task())
        np.testing.assert_array_equal(a.position, b.position)
        assert a.step_index == b.step_index == 0


class TestStep:
    def test_goal_nav_arithmetic(self):
        s = reset(goal_task((1.0, 0.0)))
        nxt, r = step(goal_task((1.0, 0.0)), s, np.array([1.0, 0.0]))
        np.testing.assert_allclose(nxt.position, [0.1, 0.0])
        assert r == pytest.approx(-0.9)

    def test_direction_reward(self):
        task = TaskSpec("direction", (0.0, 1.0), "train", 0)
        nxt, r = step(task, reset(task), np.array([0.0, 1.0]))
        assert r == pytest.approx(1.0)

    def test_sparse_zero_outside_radius(self):
        task = TaskSpec("sparse_nav", (0.5, 0.0), "train", 0, sparsity_radius=0.2)
        state = envs.EnvState(np.array([0.0, 0.0]), 0, False)
        _, r = step(task, state, np.zeros(2), sparse=True)
        assert r == 0.0

    def test_sparse_inside_radius(self):
        task = TaskSpec("sparse_nav", (0.0, 0.2), "train", 0, sparsity_radius=0.2)
        state = envs.EnvState(np.array([0.0, 0.1]), 0, False)
        _, r = step(task, state, np.zeros(2), sparse=True)
        assert r == pytest.approx(0.5)

    def test_action_clipped(self):
        task = goal_task()
        nxt, _ = step(task, reset(task), np.array([5.0, -5.0]))
        np.testing.assert_allclose(nxt.position, [0.1, -0.1])

    def test_step_done_rejected(self):
        task = goal_task()
        state = envs.EnvState(np.zeros(2), 3, True)
        with pytest.raises(RuntimeError):
            step(task, state, np.zeros(2), horizon=3)

    def test_deterministic_dynamics(self):
        task = goal_task((0.3, 0.7))
        a = np.array([0.2, -0.4])
        n1, r1 = step(task, reset(task), a)
        n2, r2 = step(task, reset(task), a)
        np.testing.assert_array_equal(n1.position, n2.position)
        assert r1 == r2


class TestObservation:
    def test_position_passthrough(self):
        state = envs.EnvState(np.array([0.3, -0.2]), 1, False)
        np.testing.assert_array_equal(state_vector(goal_task(), state), [0.3, -0.2])

    def test_length_two_for_all_families(self):
        for family, kw in (
            ("goal_nav", {}),
            ("direction", {}),
            ("sparse_nav", {"sparsity_radius": 0.3}),
        ):
            goal = (0.0, 1.0)
            task = TaskSpec(family, goal, "train", 0, **kw)
            assert state_vector(task, reset(task)).shape == (2,)

    def test_task_blindness(self):
        state = envs.EnvState(np.array([0.1, 0.2]), 0, False)
        a = state_vector(goal_task((1.0, 0.0), tid=0), state)
        b = state_vector(goal_task((0.0, 1.0), tid=1), state)
        np.testing.assert_array_equal(a, b)


class TestEpisodeProperties:
    @given(st.integers(0, 2**32 - 1), st.integers(5, 40))
    @settings(max_examples=20, deadline=None)
    def test_terminates_exactly_at_horizon(self, seed, horizon):
        rng = np.random.default_rng(seed)
        env = Env(goal_task(), horizon=horizon)
        env.reset()
        steps = 0
        while not env.done:
            env.step(rng.uniform(-1, 1, 2))
            steps += 1
        assert steps == horizon
        assert env.state.step_index == horizon

    def test_goal_nav_reward_bounds(self):
        rng = np.random.default_rng(3)
        horizon = 50
        env = Env(goal_task((0.0, 1.0)), horizon=horizon)
        env.reset()
        lo = -(1.0 + envs.DT * horizon)
        while not env.done:
            tr = env.step(rng.uniform(-1, 1, 2))
            assert lo <= tr.reward <= 0.0

    def test_sparse_reward_bounds(self):
        rng = np.random.default_rng(4)
        task = TaskSpec("sparse_nav", (0.2, 0.2), "train", 0, sparsity_radius=0.5)
        env = Env(task, horizon=50, sparse=True)
        env.reset()
        while not env.done:
            tr = env.step(rng.uniform(-1, 1, 2))
            assert 0.0 <= tr.reward <= 1.0


class TestSerialization:
    def test_json_roundtrip(self):
        tasks = sample_task_set("sparse_nav", 3, 2, 2, np.random.default_rng(9))
        text = envs.tasks_to_json(tasks, seed=9)
        back = envs.tasks_from_json(text)
        assert back == tasks
