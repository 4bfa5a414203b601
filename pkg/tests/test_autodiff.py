"""Unit tests for the reverse-mode autodiff tape."""

import numpy as np
import pytest

from artifield import autodiff as ad
from artifield.autodiff import Tensor
from artifield.errors import InvalidArgumentError


def numeric_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        dn = fn(x)
        flat[i] = orig
        gf[i] = (up - dn) / (2.0 * h)
    return g


def check_op(build, x0: np.ndarray, tol: float = 1e-6):
    """Compare tape gradient of sum(build(t)) against finite differences."""
    t = Tensor(x0.copy(), requires_grad=True)
    out = ad.tsum(build(t))
    out.backward()

    def scalar(x):
        with ad.no_grad():
            return float(ad.tsum(build(Tensor(x))).data)

    fd = numeric_grad(scalar, x0.copy())
    assert np.allclose(t.grad, fd, atol=tol, rtol=tol)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestForward:
    def test_arithmetic_matches_numpy(self, rng):
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(4, 5))
        ta, tb = Tensor(a), Tensor(b)
        assert np.array_equal((ta + tb).data, a + b)
        assert np.array_equal((ta * tb).data, a * b)
        assert np.array_equal((ta - tb).data, a - b)
        assert np.allclose((ta / tb).data, a / b)
        assert np.array_equal((-ta).data, -a)
        assert np.allclose((ta**2).data, a**2)

    def test_matmul_matches_numpy(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        assert np.allclose((Tensor(a) @ Tensor(b)).data, a @ b)

    def test_unary_matches_numpy(self, rng):
        a = rng.normal(size=(6,))
        assert np.allclose(ad.exp(a).data, np.exp(a))
        assert np.allclose(ad.log(np.abs(a) + 1.0).data, np.log(np.abs(a) + 1.0))
        assert np.allclose(ad.sin(a).data, np.sin(a))
        assert np.allclose(ad.cos(a).data, np.cos(a))
        assert np.allclose(ad.relu(a).data, np.maximum(a, 0.0))
        assert np.allclose(ad.sigmoid(a).data, 1.0 / (1.0 + np.exp(-a)))
        assert np.allclose(ad.softplus(a).data, np.logaddexp(0.0, a))
        assert np.allclose(ad.sqrt(np.abs(a)).data, np.sqrt(np.abs(a)))
        assert np.allclose(ad.absolute(a).data, np.abs(a))

    def test_sigmoid_stable_at_extremes(self):
        out = ad.sigmoid(np.array([-1e4, 1e4])).data
        assert out[0] == 0.0 and out[1] == 1.0

    def test_reductions_match_numpy(self, rng):
        a = rng.normal(size=(3, 4))
        assert np.allclose(ad.tsum(a, axis=1).data, a.sum(axis=1))
        assert np.allclose(ad.tmean(a, axis=0).data, a.mean(axis=0))
        assert np.allclose(ad.tmax(a, axis=1).data, a.max(axis=1))
        assert np.allclose(ad.tmax(a).data, a.max())

    def test_cummax_matches_accumulate(self, rng):
        a = rng.normal(size=(5, 7, 3))
        out = ad.cummax(Tensor(a), axis=1)
        assert np.array_equal(out.data, np.maximum.accumulate(a, axis=1))


class TestGradients:
    def test_add_mul_div(self, rng):
        x = rng.normal(size=(3, 4))
        check_op(lambda t: t * t + t, x)
        check_op(lambda t: t / (t * t + 2.0), x)

    def test_power_sqrt_exp_log(self, rng):
        x = np.abs(rng.normal(size=(6,))) + 0.5
        check_op(lambda t: t**3, x)
        check_op(lambda t: ad.sqrt(t), x)
        check_op(lambda t: ad.exp(t), x)
        check_op(lambda t: ad.log(t), x)

    def test_trig_and_activations(self, rng):
        x = rng.normal(size=(8,))
        check_op(lambda t: ad.sin(t) * ad.cos(t), x)
        check_op(lambda t: ad.sigmoid(t), x)
        check_op(lambda t: ad.softplus(t), x)

    def test_matmul(self, rng):
        x = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        check_op(lambda t: ad.matmul(t, Tensor(b)), x)

    def test_broadcasting_gradient(self, rng):
        x = rng.normal(size=(1, 4))
        other = Tensor(rng.normal(size=(5, 4)))
        check_op(lambda t: t * other, x)

    def test_reductions(self, rng):
        x = rng.normal(size=(3, 5))
        check_op(lambda t: ad.tsum(t, axis=0), x)
        check_op(lambda t: ad.tmean(t, axis=1), x)
        check_op(lambda t: ad.tmax(t, axis=1), x)

    def test_elementwise_min_max_clip(self, rng):
        x = rng.normal(size=(4, 4))
        other = Tensor(rng.normal(size=(4, 4)))
        check_op(lambda t: ad.maximum(t, other), x)
        check_op(lambda t: ad.minimum(t, other), x)
        check_op(lambda t: ad.clip(t, -0.5, 0.5), x)

    def test_shape_ops(self, rng):
        x = rng.normal(size=(3, 4))
        check_op(lambda t: ad.reshape(t, (2, 6)) * 2.0, x)
        check_op(lambda t: ad.transpose(t, (1, 0)) ** 2, x)
        check_op(lambda t: ad.concat([t, t * 2.0], axis=0), x)
        check_op(lambda t: ad.stack([t, t], axis=0) ** 2, x)

    def test_take_gather(self, rng):
        x = rng.normal(size=(5, 3))
        idx = np.array([0, 2, 2, 4])
        check_op(lambda t: ad.take(t, idx) ** 2, x)

    def test_broadcast_and_scatter_rows(self, rng):
        x = rng.normal(size=(1, 4))
        check_op(lambda t: ad.broadcast_rows(t, 6) ** 2, x)
        y = rng.normal(size=(3, 2))
        idx = np.array([1, 4, 0])
        check_op(lambda t: ad.scatter_rows(t, idx, 6, fill=1.0) ** 2, y)

    def test_segment_sum(self, rng):
        x = rng.normal(size=(6, 2))
        idx = np.array([0, 1, 0, 2, 1, 0])
        check_op(lambda t: ad.segment_sum(t, idx, 3) ** 2, x)

    def test_cummax_gradient(self, rng):
        x = rng.normal(size=(3, 6))
        check_op(lambda t: ad.cummax(t, axis=1) ** 2, x)

    def test_bmv(self, rng):
        mats = rng.normal(size=(4, 3, 5))
        x = rng.normal(size=(4, 5))
        check_op(lambda t: ad.bmv(mats, t) ** 2, x)

    def test_where_const(self, rng):
        x = rng.normal(size=(4, 4))
        cond = rng.random((4, 4)) > 0.5
        other = Tensor(rng.normal(size=(4, 4)))
        check_op(lambda t: ad.where_const(cond, t, other), x)


class TestGraph:
    def test_backward_requires_scalar(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(InvalidArgumentError):
            (t * 2.0).backward()

    def test_no_grad_blocks_graph(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.tsum(t * t)
        assert not out.requires_grad

    def test_detach_cuts_graph(self):
        t = Tensor(np.ones(3), requires_grad=True)
        out = ad.tsum(t.detach() * 2.0)
        assert not out.requires_grad

    def test_grad_accumulates_over_shared_node(self):
        t = Tensor(np.array([2.0]), requires_grad=True)
        out = ad.tsum(t * t + t)
        out.backward()
        assert np.allclose(t.grad, [5.0])

    def test_diamond_graph(self):
        t = Tensor(np.array([1.5]), requires_grad=True)
        a = t * 2.0
        b = t * 3.0
        out = ad.tsum(a * b)
        out.backward()
        assert np.allclose(t.grad, [2.0 * 3.0 * 2.0 * 1.5])

    def test_tmax_tie_routes_to_first(self):
        t = Tensor(np.array([[1.0, 1.0]]), requires_grad=True)
        ad.tsum(ad.tmax(t, axis=1)).backward()
        assert np.array_equal(t.grad, [[1.0, 0.0]])
