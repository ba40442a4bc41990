# -*- coding: utf-8 -*-
"""
Tests for the learning-rate schedule and the Adam update.
"""

import numpy as np
import pytest

from src.autodiff import Tensor
from src.errors import NonFiniteError, ShapeError
from src.training.optimizer import Adam, AdamState, adam_update, exponential_lr


class TestSchedule:

    def test_endpoints_and_midpoint(self):
        assert exponential_lr(0, 20000, 5e-4, 8e-5) == pytest.approx(5e-4)
        assert exponential_lr(20000, 20000, 5e-4, 8e-5) == pytest.approx(8e-5)
        assert exponential_lr(10000, 20000, 5e-4, 8e-5) == pytest.approx(2e-4, rel=1e-9)

    def test_monotone_decay(self):
        rates = [exponential_lr(i, 100, 5e-4, 8e-5) for i in range(101)]
        assert all(a > b for a, b in zip(rates, rates[1:]))

    def test_zero_total_keeps_start_rate(self):
        assert exponential_lr(0, 0, 5e-4, 8e-5) == 5e-4

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            exponential_lr(101, 100, 5e-4, 8e-5)
        with pytest.raises(ValueError):
            exponential_lr(-1, 100, 5e-4, 8e-5)


class TestAdam:

    def test_first_step_moves_by_lr_against_the_gradient_sign(self):
        param = np.array([1.0, -2.0, 0.5])
        state = AdamState(np.zeros(3), np.zeros(3))
        updated = adam_update(param, np.array([3.0, -0.02, 0.0]), state, lr=0.1, step=1)
        np.testing.assert_allclose(updated, [0.9, -1.9, 0.5], atol=1e-6)
        np.testing.assert_allclose(state.m, [0.3, -0.002, 0.0])

    def test_second_step_uses_bias_corrected_moments(self):
        state = AdamState(np.zeros(1), np.zeros(1))
        param = adam_update(np.array([0.0]), np.array([1.0]), state, lr=0.1, step=1)
        param = adam_update(param, np.array([1.0]), state, lr=0.1, step=2)
        np.testing.assert_allclose(param, [-0.2], atol=1e-6)

    def test_zero_gradient_keeps_the_parameter_and_decays_moments(self):
        state = AdamState(np.array([0.5]), np.array([0.25]))
        updated = adam_update(np.array([2.0]), np.array([0.0]), state, lr=0.1, step=3)
        np.testing.assert_allclose(state.m, [0.45])
        np.testing.assert_allclose(state.v, [0.25 * 0.999])
        assert updated[0] < 2.0
        updated = adam_update(np.array([2.0]), np.array([0.0]), AdamState(np.zeros(1), np.zeros(1)), 0.1, 1)
        np.testing.assert_array_equal(updated, [2.0])

    def test_keeps_the_parameter_dtype(self):
        param = np.ones(4, dtype=np.float32)
        state = AdamState(np.zeros(4, dtype=np.float32), np.zeros(4, dtype=np.float32))
        assert adam_update(param, np.ones(4), state, 1e-3, 1).dtype == np.float32

    def test_errors_name_the_tensor(self):
        state = AdamState(np.zeros(2), np.zeros(2))
        with pytest.raises(ShapeError):
            adam_update(np.zeros(2), np.zeros(3), state, 0.1, 1)
        with pytest.raises(NonFiniteError, match="kernel.0.weight"):
            adam_update(np.zeros(2), np.array([np.nan, 0.0]), state, 0.1, 1, name="kernel.0.weight")

    def test_optimizer_over_named_tensors(self):
        a = Tensor(np.array([1.0, 1.0]), requires_grad=True)
        b = Tensor(np.array([2.0]), requires_grad=True)
        a.grad = np.array([1.0, -1.0])
        optimizer = Adam()
        optimizer.step([("a", a), ("b", b)], lr=0.01)
        assert optimizer.step_count == 1
        np.testing.assert_allclose(a.data, [0.99, 1.01], atol=1e-6)
        np.testing.assert_array_equal(b.data, [2.0])
        assert set(optimizer.states) == {"a", "b"}

    def test_descends_a_quadratic(self):
        x = Tensor(np.array([3.0, -4.0]), requires_grad=True)
        optimizer = Adam()
        for _ in range(500):
            x.grad = 2.0 * x.data
            optimizer.step([("x", x)], lr=0.05)
        assert np.linalg.norm(x.data) < 0.5
