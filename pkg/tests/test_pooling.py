"""Pooling strategies and modal-attention fusion against hand-derived values."""

import numpy as np
import pytest

from atcsri import tensor as T
from atcsri.pooling import (
    ConcatFusion,
    EmptySequence,
    FixedPool,
    ModalAttentionFusion,
    PoolingStage,
    SelfAttentionPool,
    StatisticsPool,
)
from atcsri.tensor import Tensor


def rng():
    return np.random.default_rng(42)


def ones_mask(batch, t):
    return np.ones((batch, t), dtype=np.float32)


class TestSelfAttentionPool:
    def test_hand_derived_two_step_example(self):
        # time steps [1, 0] and [2, -1], scoring vector [1, 0]; the oracle
        # below walks the three equations independently at 64-bit
        steps = np.array([[1.0, 0.0], [2.0, -1.0]])
        w = np.array([1.0, 0.0])
        logits = np.tanh(steps) @ w
        np.testing.assert_allclose(logits, [0.76159, 0.96403], atol=1e-5)
        a = np.exp(logits) / np.exp(logits).sum()
        np.testing.assert_allclose(a, [0.44957, 0.55043], atol=1e-5)
        expected = np.tanh(a @ steps)

        pool = SelfAttentionPool(2, rng())
        pool.w.tensor.data = np.array([[1.0], [0.0]], dtype=np.float64)
        h = Tensor(steps[None])
        np.testing.assert_allclose(pool.weights(h, ones_mask(1, 2))[0], a, atol=1e-6)
        np.testing.assert_allclose(pool(h, ones_mask(1, 2)).data[0], expected, atol=1e-6)

    def test_single_step_is_tanh_of_it(self):
        pool = SelfAttentionPool(3, rng())
        h = Tensor(np.array([[[0.3, -0.7, 2.0]]]))
        e = pool(h, ones_mask(1, 1))
        np.testing.assert_allclose(e.data[0], np.tanh([0.3, -0.7, 2.0]), atol=1e-6)
        np.testing.assert_allclose(pool.weights(h, ones_mask(1, 1)), [[1.0]])

    def test_zero_scorer_reduces_to_average_pooling(self):
        pool = SelfAttentionPool(4, rng())
        pool.w.tensor.data = np.zeros((4, 1), dtype=np.float64)
        h = Tensor(np.asarray(rng().normal(size=(2, 5, 4))))
        mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=np.float32)
        got = pool(h, mask)
        avg = FixedPool("average")(h, mask)
        np.testing.assert_allclose(got.data, np.tanh(avg.data), atol=1e-9)

    def test_output_in_tanh_range(self):
        pool = SelfAttentionPool(8, rng())
        h = Tensor(np.asarray(rng().normal(0, 10, size=(3, 6, 8))))
        e = pool(h, ones_mask(3, 6))
        assert (np.abs(e.data) < 1.0).all()

    def test_empty_row_rejected(self):
        pool = SelfAttentionPool(2, rng())
        h = Tensor(np.zeros((1, 3, 2)))
        with pytest.raises(EmptySequence):
            pool(h, np.zeros((1, 3), dtype=np.float32))


class TestStatisticsPool:
    def test_two_point_row(self):
        h = Tensor(np.array([[[1.0], [3.0]]]))
        out = StatisticsPool()(h, ones_mask(1, 2))
        assert out.data[0, 0] == pytest.approx(2.0)   # mean
        assert out.data[0, 1] == pytest.approx(1.0, abs=1e-6)  # population std

    def test_constant_rows_hit_epsilon_floor(self):
        h = Tensor(np.full((1, 4, 3), 0.7))
        out = StatisticsPool()(h, ones_mask(1, 4))
        assert (out.data[0, 3:] <= 1e-4 + 1e-9).all()

    def test_matches_two_pass_oracle(self):
        r = rng()
        h = r.normal(size=(1, 5, 7))
        out = StatisticsPool()(Tensor(h), ones_mask(1, 5))
        mu = h[0].mean(axis=0)
        sd = np.sqrt(((h[0] - mu) ** 2).mean(axis=0) + 1e-8)
        np.testing.assert_allclose(out.data[0, :7], mu, atol=1e-6)
        np.testing.assert_allclose(out.data[0, 7:], sd, atol=1e-6)

    def test_mask_excludes_padding(self):
        r = rng()
        valid = r.normal(size=(1, 3, 2))
        padded = np.concatenate([valid, np.full((1, 2, 2), 99.0)], axis=1)
        mask = np.array([[1, 1, 1, 0, 0]], dtype=np.float32)
        a = StatisticsPool()(Tensor(valid), ones_mask(1, 3))
        b = StatisticsPool()(Tensor(padded), mask)
        np.testing.assert_allclose(a.data, b.data, atol=1e-6)

    def test_single_valid_step_rejected(self):
        h = Tensor(np.zeros((1, 3, 2)))
        with pytest.raises(EmptySequence):
            StatisticsPool()(h, np.array([[1, 0, 0]], dtype=np.float32))


class TestFixedPool:
    def test_single_step_average_is_identity(self):
        h = Tensor(np.array([[[2.0, -1.0]]]))
        out = FixedPool("average")(h, ones_mask(1, 1))
        np.testing.assert_allclose(out.data, [[2.0, -1.0]])

    def test_sum_equals_average_times_t(self):
        r = rng()
        h = Tensor(r.normal(size=(2, 6, 3)))
        m = ones_mask(2, 6)
        np.testing.assert_allclose(
            FixedPool("sum")(h, m).data,
            FixedPool("average")(h, m).data * 6, atol=1e-5)

    def test_masked_steps_contribute_zero(self):
        base = np.zeros((1, 4, 2))
        base[0, :2] = [[1.0, 2.0], [3.0, 4.0]]
        poisoned = base.copy()
        poisoned[0, 2:] = 1e6
        mask = np.array([[1, 1, 0, 0]], dtype=np.float32)
        for kind in ("sum", "average"):
            a = FixedPool(kind)(Tensor(base), mask)
            b = FixedPool(kind)(Tensor(poisoned), mask)
            np.testing.assert_allclose(a.data, b.data)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            FixedPool("max")


class TestPoolingStage:
    def test_statistics_projects_back_to_dim(self):
        stage = PoolingStage("statistics", 16, rng())
        h = Tensor(np.asarray(rng().normal(size=(3, 5, 16))))
        assert stage(h, ones_mask(3, 5)).shape == (3, 16)

    def test_all_kinds_emit_dim(self):
        for kind in ("self_attention", "statistics", "average", "sum"):
            stage = PoolingStage(kind, 8, rng())
            h = Tensor(np.asarray(rng().normal(size=(2, 4, 8))))
            assert stage(h, ones_mask(2, 4)).shape == (2, 8)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            PoolingStage("meanmax", 8, rng())


class TestModalAttentionFusion:
    def fusion(self, ds=2, dt=2, identity=True):
        f = ModalAttentionFusion(ds, dt, 3, rng())
        if identity:
            f.w_a.tensor.data = np.eye(ds, dt)
        return f

    def test_hand_derived_example(self):
        f = self.fusion()
        h_s = Tensor(np.array([[[1.0, 0.0]]]))
        h_t = Tensor(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
        mask = ones_mask(1, 2)
        scores = f.scores(h_s, h_t)
        np.testing.assert_allclose(scores.data[0, 0], [1.0, 0.0], atol=1e-7)
        alpha = f.attention(h_s, h_t, mask)
        np.testing.assert_allclose(alpha.data[0, 0], [0.73106, 0.26894], atol=1e-5)
        c = T.matmul(alpha, h_t)
        np.testing.assert_allclose(c.data[0, 0], [0.73106, 0.26894], atol=1e-5)

    def test_single_text_step_gets_full_weight(self):
        f = ModalAttentionFusion(3, 3, 3, rng())
        h_s = Tensor(np.asarray(rng().normal(size=(2, 4, 3))))
        h_t = Tensor(np.asarray(rng().normal(size=(2, 1, 3))))
        alpha = f.attention(h_s, h_t, ones_mask(2, 1))
        np.testing.assert_allclose(alpha.data, 1.0, atol=1e-7)
        c = T.matmul(alpha, h_t)
        np.testing.assert_allclose(c.data, np.broadcast_to(h_t.data, (2, 4, 3)), atol=1e-6)

    def test_zero_scoring_matrix_gives_uniform_attention(self):
        f = ModalAttentionFusion(3, 3, 3, rng())
        f.w_a.tensor.data = np.zeros((3, 3))
        h_s = Tensor(np.asarray(rng().normal(size=(1, 2, 3))))
        h_t = Tensor(np.asarray(rng().normal(size=(1, 5, 3))))
        mask = np.array([[1, 1, 1, 0, 0]], dtype=np.float32)
        alpha = f.attention(h_s, h_t, mask)
        np.testing.assert_allclose(alpha.data[0, :, :3], 1 / 3, atol=1e-6)
        np.testing.assert_allclose(alpha.data[0, :, 3:], 0.0, atol=1e-12)

    def test_rows_sum_to_one_over_fuzzed_shapes(self):
        r = rng()
        for _ in range(200):
            n, m, d = r.integers(1, 13), r.integers(1, 13), r.integers(1, 9)
            f = ModalAttentionFusion(d, d, 4, r)
            h_s = Tensor(r.normal(size=(2, n, d)))
            h_t = Tensor(r.normal(size=(2, m, d)))
            lengths = r.integers(1, m + 1, size=2)
            mask = (np.arange(m)[None] < lengths[:, None]).astype(np.float32)
            alpha = f.attention(h_s, h_t, mask)
            np.testing.assert_allclose(alpha.data.sum(axis=2), 1.0, atol=1e-6)

    def test_appending_padded_text_steps_is_inert(self):
        r = rng()
        f = ModalAttentionFusion(4, 4, 4, r)
        h_s = Tensor(r.normal(size=(1, 3, 4)))
        h_t = r.normal(size=(1, 2, 4))
        extended = np.concatenate([h_t, r.normal(size=(1, 3, 4))], axis=1)
        a = f(h_s, Tensor(h_t), ones_mask(1, 2))
        b = f(h_s, Tensor(extended), np.array([[1, 1, 0, 0, 0]], dtype=np.float32))
        np.testing.assert_allclose(a.data, b.data, atol=1e-6)

    def test_permuting_text_steps_permutes_alpha_and_fixes_c(self):
        r = rng()
        f = ModalAttentionFusion(4, 4, 4, r)
        h_s = Tensor(r.normal(size=(1, 3, 4)))
        h_t = r.normal(size=(1, 5, 4))
        perm = np.array([3, 0, 4, 1, 2])
        a1 = f.attention(h_s, Tensor(h_t), ones_mask(1, 5))
        a2 = f.attention(h_s, Tensor(h_t[:, perm]), ones_mask(1, 5))
        np.testing.assert_allclose(a1.data[:, :, perm], a2.data, atol=1e-6)
        c1 = T.matmul(a1, Tensor(h_t))
        c2 = T.matmul(a2, Tensor(h_t[:, perm]))
        np.testing.assert_allclose(c1.data, c2.data, atol=1e-6)

    def test_fused_length_matches_speech_and_range(self):
        r = rng()
        f = ModalAttentionFusion(4, 4, 6, r)
        h_s = Tensor(r.normal(size=(2, 7, 4)))
        h_t = Tensor(r.normal(size=(2, 3, 4)))
        out = f(h_s, h_t, ones_mask(2, 3))
        assert out.shape == (2, 7, 6)
        assert (np.abs(out.data) < 1.0).all()

    def test_empty_side_rejected(self):
        f = ModalAttentionFusion(2, 2, 2, rng())
        with pytest.raises(EmptySequence):
            f(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 2, 2))),
              np.zeros((1, 2), dtype=np.float32))


class TestConcatFusion:
    def test_zero_inputs_give_tanh_bias(self):
        f = ConcatFusion(3, 3, 4, rng())
        f.proj.bias.tensor.data = np.array([0.1, -0.2, 0.0, 1.0], dtype=np.float32)
        h_s = Tensor(np.zeros((1, 2, 3)))
        h_t = Tensor(np.zeros((1, 2, 3)))
        out = f(h_s, h_t, ones_mask(1, 2), ones_mask(1, 2))
        np.testing.assert_allclose(out.data[0], np.tanh([0.1, -0.2, 0.0, 1.0]), atol=1e-6)

    def test_output_dim(self):
        f = ConcatFusion(8, 8, 8, rng())
        r = rng()
        out = f(Tensor(r.normal(size=(2, 3, 8))), Tensor(r.normal(size=(2, 4, 8))),
                ones_mask(2, 3), ones_mask(2, 4))
        assert out.shape == (2, 8)

    def test_swapping_modalities_changes_output(self):
        r = rng()
        f = ConcatFusion(4, 4, 4, r)
        h_a = r.normal(size=(1, 3, 4))
        h_b = r.normal(size=(1, 3, 4))
        m = ones_mask(1, 3)
        out1 = f(Tensor(h_a), Tensor(h_b), m, m)
        out2 = f(Tensor(h_b), Tensor(h_a), m, m)
        assert np.abs(out1.data - out2.data).max() > 1e-4
