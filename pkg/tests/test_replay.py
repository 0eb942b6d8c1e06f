import numpy as np
import pytest

from linadapt.envs import Transition
from linadapt.replay import ReplayBuffer


def make_transition(i, done=False):
    return Transition(
        np.array([float(i), 0.0]),
        np.array([0.1 * i, -0.1 * i]),
        float(i),
        np.array([float(i) + 0.5, 0.0]),
        done,
    )


def fill_episode(buf, n, start=0):
    for j in range(n):
        buf.push(make_transition(start + j, done=(j == n - 1)))


class TestPush:
    def test_push_to_empty(self):
        buf = ReplayBuffer(0, 2, 2, capacity=10)
        buf.push(make_transition(0))
        assert buf.size == 1

    def test_ring_eviction(self):
        buf = ReplayBuffer(0, 2, 2, capacity=3)
        for i in range(4):
            buf.push(make_transition(i))
        assert buf.size == 3
        # first transition (reward 0) is gone
        assert 0.0 not in set(buf.rewards[: buf.size])
        assert {1.0, 2.0, 3.0} == set(buf.rewards[: buf.size])

    def test_sampled_subset_of_pushed(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(0, 2, 2, capacity=100)
        pushed = set()
        for i in range(50):
            buf.push(make_transition(i))
            pushed.add(float(i))
        batch = buf.sample_batch(200, rng)
        assert set(batch.rewards).issubset(pushed)


class TestSampleBatch:
    def test_single_item_repeated(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(0, 2, 2)
        buf.push(make_transition(7))
        batch = buf.sample_batch(4, rng)
        assert len(batch) == 4
        np.testing.assert_array_equal(batch.rewards, [7.0] * 4)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0, 2, 2).sample_batch(1, np.random.default_rng(0))

    def test_batch_length_always_requested(self):
        rng = np.random.default_rng(1)
        buf = ReplayBuffer(0, 2, 2)
        fill_episode(buf, 5)
        for n in (1, 3, 17):
            assert len(buf.sample_batch(n, rng)) == n

    def test_uniform_frequencies_chi_square(self):
        # 1e5 draws from a 10-item buffer: each count within 3 sigma of mean
        rng = np.random.default_rng(2)
        buf = ReplayBuffer(0, 2, 2)
        fill_episode(buf, 10)
        batch = buf.sample_batch(100_000, rng)
        counts = np.bincount(batch.rewards.astype(int), minlength=10)
        expect = 10_000
        sigma = np.sqrt(100_000 * 0.1 * 0.9)
        assert np.all(np.abs(counts - expect) < 3 * sigma)


class TestWindows:
    def test_k1_matches_batch_semantics(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(0, 2, 2)
        fill_episode(buf, 6)
        windows = buf.sample_windows(1, 8, rng)
        assert all(w.k == 1 for w in windows)

    def test_exact_single_window(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(0, 2, 2)
        fill_episode(buf, 5)
        windows = buf.sample_windows(5, 3, rng)
        for w in windows:
            np.testing.assert_array_equal([t.reward for t in w.tuples], [0, 1, 2, 3, 4])

    def test_windows_consecutive_by_step_index(self):
        rng = np.random.default_rng(3)
        buf = ReplayBuffer(0, 2, 2)
        for ep in range(4):
            fill_episode(buf, 7, start=100 * ep)
        windows = buf.sample_windows(3, 50, rng)
        for w in windows:
            rewards = [t.reward for t in w.tuples]
            base = rewards[0]
            np.testing.assert_array_equal(rewards, [base, base + 1, base + 2])
            # never straddles an episode boundary
            assert int(base) % 100 <= 4

    def test_no_eligible_episode_rejected(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(0, 2, 2)
        fill_episode(buf, 3)
        with pytest.raises(ValueError):
            buf.sample_windows(5, 1, rng)

    def test_windows_after_wraparound(self):
        rng = np.random.default_rng(4)
        buf = ReplayBuffer(0, 2, 2, capacity=10)
        for ep in range(5):
            fill_episode(buf, 4, start=100 * ep)
        windows = buf.sample_windows(3, 40, rng)
        for w in windows:
            rewards = [t.reward for t in w.tuples]
            assert rewards[1] == rewards[0] + 1
            assert rewards[2] == rewards[0] + 2


class TestTaskPurity:
    def test_buffer_keeps_task_id(self):
        buf = ReplayBuffer(42, 2, 2)
        assert buf.task_id == 42

    def test_no_cross_task_contamination(self):
        rng = np.random.default_rng(0)
        buffers = {i: ReplayBuffer(i, 2, 2) for i in range(3)}
        for tid, buf in buffers.items():
            for j in range(10):
                buf.push(make_transition(1000 * tid + j))
        for tid, buf in buffers.items():
            batch = buf.sample_batch(50, rng)
            assert np.all((batch.rewards >= 1000 * tid) & (batch.rewards < 1000 * tid + 10))


class TestDump:
    def test_dump_roundtrip(self, tmp_path):
        buf = ReplayBuffer(1, 2, 2)
        fill_episode(buf, 5)
        path = tmp_path / "buf.npz"
        buf.dump(path)
        with np.load(path) as data:
            assert data["task_id"] == 1
            assert data["states"].shape == (5, 2)
            np.testing.assert_array_equal(data["rewards"], np.arange(5.0))
