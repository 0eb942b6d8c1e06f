"""Tests for the transition-window -> head-parameter adapter network."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linadapt import adapter as ad
from linadapt import nets
from linadapt.envs import Transition
from linadapt.nets import flatten_params
from linadapt.replay import Batch, SarsWindow
from linadapt.sac import MultiHeadPolicy

OBS = 2
ACT = 2


def make_window(rng, k=1, obs=OBS, act=ACT):
    tuples = [
        Transition(
            state=rng.standard_normal(obs),
            action=rng.standard_normal(act),
            reward=float(rng.standard_normal()),
            next_state=rng.standard_normal(obs),
            done=False,
        )
        for _ in range(k)
    ]
    return SarsWindow(tuples)


def make_adapter(rng, head_dims=(16, 4), hidden=(8, 8), k=1, mode="sars"):
    return ad.AdapterNet(OBS, ACT, list(head_dims), list(hidden), rng, k=k, input_mode=mode)


class TestEncoding:
    def test_tuple_width(self):
        assert ad.tuple_width(2, 2, "sars") == 7
        assert ad.tuple_width(2, 2, "sas") == 6
        assert ad.tuple_width(3, 1, "sars") == 8
        with pytest.raises(ValueError):
            ad.tuple_width(2, 2, "rewards")

    def test_encode_single_tuple_layout(self):
        t = Transition(
            state=np.array([1.0, 2.0]),
            action=np.array([3.0, 4.0]),
            reward=5.0,
            next_state=np.array([6.0, 7.0]),
            done=False,
        )
        x = ad.encode_input(SarsWindow([t]), "sars")
        np.testing.assert_array_equal(x, [1, 2, 3, 4, 5, 6, 7])
        x = ad.encode_input(SarsWindow([t]), "sas")
        np.testing.assert_array_equal(x, [1, 2, 3, 4, 6, 7])

    def test_encode_window_oldest_first(self):
        rng = np.random.default_rng(0)
        w = make_window(rng, k=3)
        x = ad.encode_input(w, "sars")
        assert x.shape == (3 * 7,)
        np.testing.assert_array_equal(x[:2], w.tuples[0].state)
        np.testing.assert_array_equal(x[14:16], w.tuples[2].state)

    def test_encode_wrong_k_rejected(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError):
            ad.encode_input(make_window(rng, k=2), "sars", k=3)

    def test_encode_batch_matches_single(self):
        rng = np.random.default_rng(2)
        windows = [make_window(rng, k=2) for _ in range(5)]
        cols = []
        for j in range(2):
            cols.append(
                Batch(
                    states=np.stack([w.tuples[j].state for w in windows]),
                    actions=np.stack([w.tuples[j].action for w in windows]),
                    rewards=np.array([w.tuples[j].reward for w in windows]),
                    next_states=np.stack([w.tuples[j].next_state for w in windows]),
                    dones=np.zeros(5),
                )
            )
        for mode in ("sars", "sas"):
            X = ad.encode_batch(cols, mode)
            for i, w in enumerate(windows):
                np.testing.assert_array_equal(X[i], ad.encode_input(w, mode))


class TestAdapterNet:
    def test_io_dims(self):
        rng = np.random.default_rng(3)
        a = make_adapter(rng, head_dims=(16, 4), k=1, mode="sars")
        assert a.net.layer_dims[0] == 7
        assert a.out_dim == 16 * 4 + 4
        a5 = make_adapter(rng, head_dims=(16, 4), k=5, mode="sas")
        assert a5.net.layer_dims[0] == 5 * 6

    def test_two_layer_head_out_dim(self):
        rng = np.random.default_rng(4)
        a = make_adapter(rng, head_dims=(16, 5, 4))
        assert a.out_dim == (16 * 5 + 5) + (5 * 4 + 4)

    def test_invalid_args(self):
        rng = np.random.default_rng(5)
        with pytest.raises(ValueError):
            make_adapter(rng, k=0)
        with pytest.raises(ValueError):
            make_adapter(rng, mode="sra")


class TestTargets:
    def test_make_target_tracks_live_head(self):
        rng = np.random.default_rng(6)
        policy = MultiHeadPolicy(OBS, ACT, [16], rng)
        policy.add_head(0, rng)
        t1 = ad.make_target(policy, 0)
        policy.head(0).biases[0][0] += 1.0
        t2 = ad.make_target(policy, 0)
        assert t2.flat[-4] == pytest.approx(t1.flat[-4] + 1.0)

    def test_target_roundtrip_through_head_from_flat(self):
        rng = np.random.default_rng(7)
        policy = MultiHeadPolicy(OBS, ACT, [16], rng)
        policy.add_head(3, rng)
        t = ad.make_target(policy, 3)
        head = ad.head_from_flat(t.flat, [16, 4])
        np.testing.assert_array_equal(head.weights[0], policy.head(3).weights[0])
        np.testing.assert_array_equal(head.biases[0], policy.head(3).biases[0])
        np.testing.assert_array_equal(flatten_params(head), t.flat)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_flat_roundtrip_property(self, seed):
        rng = np.random.default_rng(seed)
        dims = [int(rng.integers(1, 8)) for _ in range(int(rng.integers(2, 4)))]
        net = nets.DenseNet.init(dims, rng)
        flat = flatten_params(net)
        back = ad.head_from_flat(flat, dims)
        np.testing.assert_array_equal(flatten_params(back), flat)


class TestLossAndStep:
    def test_zero_loss_at_target(self):
        rng = np.random.default_rng(8)
        a = make_adapter(rng)
        X = rng.standard_normal((4, 7))
        pred, _ = nets.forward_batch(a.net, X)
        loss, grads = ad.adapter_loss(a, X, pred)
        assert loss == 0.0
        for g in grads.arrays():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_scalar_mse_hand_check(self):
        rng = np.random.default_rng(9)
        a = make_adapter(rng)
        X = rng.standard_normal((3, 7))
        pred, _ = nets.forward_batch(a.net, X)
        targets = pred + 2.0
        loss, _ = ad.adapter_loss(a, X, targets)
        assert loss == pytest.approx(4.0, rel=1e-12)

    def test_empty_batch_and_bad_shape_rejected(self):
        rng = np.random.default_rng(10)
        a = make_adapter(rng)
        with pytest.raises(ValueError):
            ad.adapter_loss(a, np.zeros((0, 7)), np.zeros((0, a.out_dim)))
        with pytest.raises(nets.ShapeError):
            ad.adapter_loss(a, np.zeros((2, 7)), np.zeros((2, a.out_dim + 1)))

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(11)
        a = make_adapter(rng, hidden=(6,))
        X = rng.standard_normal((4, 7))
        T = rng.standard_normal((4, a.out_dim))
        _, grads = ad.adapter_loss(a, X, T)
        eps = 1e-6
        for arr, g in zip(a.net.params(), grads.arrays()):
            fa, fg = arr.reshape(-1), g.reshape(-1)
            for idx in rng.choice(fa.size, size=min(3, fa.size), replace=False):
                orig = fa[idx]
                fa[idx] = orig + eps
                lp, _ = ad.adapter_loss(a, X, T)
                fa[idx] = orig - eps
                lm, _ = ad.adapter_loss(a, X, T)
                fa[idx] = orig
                assert fg[idx] == pytest.approx((lp - lm) / (2 * eps), rel=1e-4, abs=1e-8)

    def test_step_never_touches_policy(self):
        rng = np.random.default_rng(12)
        policy = MultiHeadPolicy(OBS, ACT, [16], rng)
        policy.add_head(0, rng)
        snap = [w.copy() for w in policy.head(0).weights + policy.head(0).biases]
        a = make_adapter(rng)
        X = rng.standard_normal((8, 7))
        ad.adapter_step(a, X, np.tile(ad.make_target(policy, 0).flat, (8, 1)))
        for w, ws in zip(policy.head(0).weights + policy.head(0).biases, snap):
            np.testing.assert_array_equal(w, ws)

    def test_grouped_step_sums_per_task_means(self):
        rng = np.random.default_rng(13)
        a = make_adapter(rng)
        X = rng.standard_normal((6, 7))
        T = rng.standard_normal((6, a.out_dim))
        slices = [slice(0, 2), slice(2, 6)]
        pred, _ = nets.forward_batch(a.net, X)
        expect = sum(float(np.mean((pred[s] - T[s]) ** 2)) for s in slices)
        loss = ad.adapter_step_grouped(a, X, T, slices)
        assert loss == pytest.approx(expect, rel=1e-12)


class TestPredictHead:
    def test_prediction_shape_and_determinism(self):
        rng = np.random.default_rng(14)
        a = make_adapter(rng, head_dims=(16, 4))
        w = make_window(np.random.default_rng(15))
        h1 = ad.predict_head(a, w)
        h2 = ad.predict_head(a, w)
        assert h1.layer_dims == [16, 4]
        np.testing.assert_array_equal(h1.weights[0], h2.weights[0])

    def test_zeroed_net_predicts_last_bias(self):
        rng = np.random.default_rng(16)
        a = make_adapter(rng, hidden=(6,))
        a.net.weights[-1][:] = 0.0
        a.net.biases[-1][:] = np.arange(a.out_dim, dtype=np.float64)
        h = ad.predict_head(a, make_window(np.random.default_rng(17)))
        np.testing.assert_array_equal(flatten_params(h), np.arange(a.out_dim))


class TestOverfit:
    def test_adapter_learns_one_fixed_head(self):
        # With a single task the adapter can memorize the head in its biases:
        # predictions converge to the target for arbitrary inputs.
        rng = np.random.default_rng(18)
        a = make_adapter(rng, head_dims=(8, 4), hidden=(32,))
        target = rng.standard_normal(a.out_dim) * 0.3
        for _ in range(2000):
            X = rng.standard_normal((32, 7))
            ad.adapter_step(a, X, np.tile(target, (32, 1)))
        X = rng.standard_normal((64, 7))
        pred, _ = nets.forward_batch(a.net, X)
        err = np.linalg.norm(pred - target, axis=1) / np.linalg.norm(target)
        assert np.mean(err) < 0.1
