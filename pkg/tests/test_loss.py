import numpy as np
import pytest
import torch

from edmtt.errors import DimensionMismatch, EmptyBatch, LengthMismatch
from edmtt.loss import LossBreakdown, combined_loss, mse_loss, triplet_loss


def random_triples(rng, count, dim=8, scale=3.0):
    return (rng.normal(size=(count, dim)) * scale,
            rng.normal(size=(count, dim)) * scale,
            rng.normal(size=(count, dim)) * scale)


class TestTripletLoss:
    def test_negative_beyond_margin_is_zero(self):
        a = [[0.0, 0.0]]
        n = [[2.0, 0.0]]
        assert float(triplet_loss(a, a, n, margin=1.0)) == pytest.approx(0.0,
                                                                         abs=1e-9)

    def test_all_equal_gives_margin(self):
        x = [[1.0, 2.0, 3.0]]
        assert float(triplet_loss(x, x, x, margin=0.7)) == pytest.approx(0.7,
                                                                         abs=1e-9)

    def test_hand_computed_value(self):
        # d(a,p) = 5, d(a,n) = 1, so max(5 - 1 + 0.5, 0) = 4.5
        a, p, n = [[0.0, 0.0]], [[3.0, 4.0]], [[1.0, 0.0]]
        assert float(triplet_loss(a, p, n, margin=0.5)) == pytest.approx(4.5,
                                                                         abs=1e-9)

    def test_mean_reduction_matches_loop_oracle(self, rng):
        a, p, n = random_triples(rng, 32)
        expected = np.mean([
            max(np.linalg.norm(a[i] - p[i]) - np.linalg.norm(a[i] - n[i]) + 0.8, 0.0)
            for i in range(32)
        ])
        assert float(triplet_loss(a, p, n, margin=0.8)) == pytest.approx(
            expected, abs=1e-9)

    def test_non_negative_on_random_triples(self, rng):
        for _ in range(200):
            a, p, n = random_triples(rng, 4)
            assert float(triplet_loss(a, p, n, margin=0.3)) >= 0.0

    def test_monotone_in_margin(self, rng):
        for _ in range(100):
            a, p, n = random_triples(rng, 6)
            margins = sorted(rng.uniform(0, 3, size=3))
            values = [float(triplet_loss(a, p, n, m)) for m in margins]
            assert values == sorted(values)

    def test_rigid_motion_invariance(self, rng):
        a, p, n = random_triples(rng, 16)
        q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        t = rng.normal(size=8)
        move = lambda x: x @ q.T + t
        before = float(triplet_loss(a, p, n, margin=1.0))
        after = float(triplet_loss(move(a), move(p), move(n), margin=1.0))
        assert after == pytest.approx(before, abs=1e-9)

    def test_self_pair_reduces_to_hinge_on_negative(self, rng):
        a = rng.normal(size=(5, 4))
        n = rng.normal(size=(5, 4))
        margin = 1.5
        expected = np.mean([max(margin - np.linalg.norm(a[i] - n[i]), 0.0)
                            for i in range(5)])
        assert float(triplet_loss(a, a, n, margin)) == pytest.approx(expected,
                                                                     abs=1e-9)

    def test_zero_iff_separated_by_margin(self, rng):
        a, p, n = random_triples(rng, 12)
        margin = 0.6
        value = float(triplet_loss(a, p, n, margin))
        d_ap = np.linalg.norm(a - p, axis=1)
        d_an = np.linalg.norm(a - n, axis=1)
        separated = (d_an >= d_ap + margin - 1e-9).all()
        assert (value <= 1e-9) == separated

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            triplet_loss([[1.0, 2.0]], [[1.0, 2.0]], [[1.0, 2.0, 3.0]], 1.0)

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            triplet_loss([], [], [], 1.0)

    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            triplet_loss([[0.0]], [[0.0]], [[1.0]], margin=-0.1)

    def test_accepts_torch_tensors_differentiably(self):
        a = torch.tensor([[0.0, 0.0]], requires_grad=True)
        p = torch.tensor([[3.0, 4.0]])
        n = torch.tensor([[1.0, 0.0]])
        value = triplet_loss(a, p, n, margin=0.5)
        value.backward()
        assert a.grad is not None and torch.isfinite(a.grad).all()


class TestMseLoss:
    def test_perfect_prediction(self):
        assert float(mse_loss([0.1, 0.9], [0.1, 0.9])) == 0.0

    def test_hand_value(self):
        assert float(mse_loss([1.0, 0.0], [0.0, 0.0])) == pytest.approx(0.5)

    def test_matches_loop_oracle(self, rng):
        pred = rng.normal(size=100)
        target = rng.normal(size=100)
        expected = sum((p - t) ** 2 for p, t in zip(pred, target)) / 100
        assert float(mse_loss(pred, target)) == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mse_loss([1.0], [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            mse_loss([], [])


class TestCombinedLoss:
    def test_weighted_sum(self):
        b = combined_loss(mse=0.04, triplet=0.2, margin=1.0, triplet_weight=1.0)
        assert b.total == pytest.approx(0.24)
        assert isinstance(b, LossBreakdown)

    def test_zero_weight_reduces_to_mse(self):
        b = combined_loss(mse=0.07, triplet=3.0, margin=1.0, triplet_weight=0.0)
        assert b.total == 0.07

    def test_double_weight(self):
        b = combined_loss(mse=0.1, triplet=0.05, margin=0.5, triplet_weight=2.0)
        assert b.total == pytest.approx(0.2)
        assert b.margin == 0.5 and b.triplet_weight == 2.0
