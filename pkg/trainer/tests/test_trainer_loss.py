import math
import random

import pytest
import torch
from hypothesis import given, strategies as st

from reranker_trainer.loss import EPS, batch_loss_total, compute_loss, torch_group_loss


class TestKnownValues:
    def test_perfect_scores(self):
        assert compute_loss(1.0, [0.0] * 8) <= 1e-5

    def test_coin_flip_one_negative(self):
        assert compute_loss(0.5, [0.5]) == pytest.approx(1.386294, abs=1e-6)
        assert compute_loss(0.5, [0.5]) == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_coin_flip_two_negatives(self):
        assert compute_loss(0.5, [0.5, 0.5]) == pytest.approx(2.079442, abs=1e-6)

    def test_no_negatives(self):
        assert compute_loss(0.5, []) == pytest.approx(math.log(2), abs=1e-12)


class TestAgainstDirectFormula:
    def test_100_random_samples(self):
        rng = random.Random(17)
        for _ in range(100):
            pos = rng.random()
            negs = [rng.random() for _ in range(rng.randint(0, 10))]
            clamp = lambda v: min(max(v, EPS), 1.0 - EPS)
            expected = -math.log(clamp(pos)) - sum(
                math.log(1.0 - clamp(s)) for s in negs
            )
            assert compute_loss(pos, negs) == pytest.approx(expected, abs=1e-9)

    def test_batch_total(self):
        groups = [(0.5, [0.5]), (0.5, [0.5, 0.5])]
        assert batch_loss_total(groups) == pytest.approx(5 * math.log(2), abs=1e-9)


class TestProperties:
    @given(
        st.floats(0.0, 1.0),
        st.lists(st.floats(0.0, 1.0), max_size=8),
    )
    def test_nonnegative_and_total(self, pos, negs):
        assert compute_loss(pos, negs) >= 0.0

    @given(st.floats(0.01, 0.98), st.floats(1e-3, 1e-2))
    def test_decreasing_in_pos(self, pos, delta):
        assert compute_loss(pos + delta, [0.5]) < compute_loss(pos, [0.5])

    @given(st.floats(0.01, 0.98), st.floats(1e-3, 1e-2))
    def test_increasing_in_neg(self, neg, delta):
        assert compute_loss(0.5, [neg + delta]) > compute_loss(0.5, [neg])

    def test_clamping_makes_it_total(self):
        assert math.isfinite(compute_loss(0.0, [1.0, 1.0]))


class TestTorchVersion:
    def test_matches_scalar(self):
        pos, negs = 0.73, [0.1, 0.4, 0.9]
        value = torch_group_loss(
            torch.tensor(pos, dtype=torch.float64),
            torch.tensor(negs, dtype=torch.float64),
        )
        assert float(value) == pytest.approx(compute_loss(pos, negs), abs=1e-9)
