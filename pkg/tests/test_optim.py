"""Unit tests for the Adam optimizer and learning-rate schedule."""

import numpy as np
import pytest

from artifield import autodiff as ad
from artifield.autodiff import Tensor
from artifield.errors import TrainingError
from artifield.optim import Adam, ExponentialDecay


class TestSchedule:
    def test_values(self):
        s = ExponentialDecay(base_lr=1e-2, gamma=0.1, decay_steps=100)
        assert np.isclose(s.at(0), 1e-2)
        assert np.isclose(s.at(100), 1e-3)
        assert np.isclose(s.at(50), 1e-2 * 0.1**0.5)


class TestAdam:
    def test_single_step_matches_hand_computation(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Adam({"p": p}, ExponentialDecay(0.1, 1.0, 1))
        g = np.array([0.5, -1.0])
        p.grad = g.copy()
        opt.step()
        m = 0.1 * g
        v = 0.001 * g * g
        mhat = m / 0.1
        vhat = v / 0.001
        expected = np.array([1.0, -2.0]) - 0.1 * mhat / (np.sqrt(vhat) + 1e-8)
        assert np.allclose(p.data, expected, atol=1e-12)

    def test_lr_scale_respected(self):
        a = Tensor(np.array([1.0]), requires_grad=True)
        b = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"a": a, "b": b}, ExponentialDecay(0.1, 1.0, 1), lr_scale={"b": 0.5})
        a.grad = np.array([1.0])
        b.grad = np.array([1.0])
        opt.step()
        da = 1.0 - a.data[0]
        db = 1.0 - b.data[0]
        assert np.isclose(db, 0.5 * da)

    def test_converges_on_quadratic(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        opt = Adam({"p": p}, ExponentialDecay(0.1, 1.0, 1))
        for _ in range(500):
            loss = ad.tsum(p * p)
            p.grad = None
            loss.backward()
            opt.step()
        assert abs(p.data[0]) < 1e-2

    def test_missing_gradient_skipped(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"p": p}, ExponentialDecay(0.1, 1.0, 1))
        opt.step()
        assert p.data[0] == 1.0

    def test_non_finite_gradient_rejected(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"p": p}, ExponentialDecay(0.1, 1.0, 1))
        p.grad = np.array([np.nan])
        with pytest.raises(TrainingError):
            opt.step()

    def test_state_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(0)

        def run(steps, restore_at=None, saved=None):
            p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
            opt = Adam({"p": p}, ExponentialDecay(0.05, 0.1, steps))
            start = 0
            if restore_at is not None:
                p.data[...] = saved["p"]
                opt.load_state_arrays(saved["state"], restore_at)
                start = restore_at
            for step in range(start, steps):
                g = np.random.default_rng((0, step)).normal(size=3)
                p.grad = g
                opt.step()
                if restore_at is None and saved is not None and opt.step_count == saved["at"]:
                    saved["p"] = p.data.copy()
                    saved["state"] = {k: v.copy() for k, v in opt.state_arrays().items()}
            return p.data.copy()

        direct = run(20)
        saved = {"at": 10}
        run(20, saved=saved)
        resumed = run(20, restore_at=10, saved=saved)
        assert np.array_equal(direct, resumed)
