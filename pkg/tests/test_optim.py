"""Optimizers: hand-checked steps, Adam's bias-corrected first step,
determinism, clipping, and grad-bookkeeping errors."""

import numpy as np
import pytest

from dartsrenet import autograd as ag
from dartsrenet.autograd import GradientError, Tensor
from dartsrenet.optim import SGD, Adam, clip_global_norm


def test_sgd_hand_step():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([2.0], dtype=np.float32)
    SGD([p], lr=0.1).step()
    assert float(p.data[0]) == pytest.approx(0.8, abs=1e-7)


def test_adam_first_step_magnitude_and_direction():
    # With constant g, the bias-corrected first update is lr * sign(g).
    for g in (3.0, -0.25, 1e-4):
        p = Tensor(np.array([0.0]), requires_grad=True, dtype=np.float64)
        p.grad = np.array([g])
        Adam([p], lr=0.01).step()
        assert float(p.data[0]) == pytest.approx(-0.01 * np.sign(g), rel=1e-3)


def test_adam_moment_shapes_and_step_counter(rng):
    params = [Tensor(rng.standard_normal(s), requires_grad=True) for s in [(3, 2), (4,)]]
    opt = Adam(params, lr=1e-3)
    for p in params:
        p.grad = np.ones_like(p.data)
    for expected in (1, 2, 3):
        opt.step()
        assert opt.step_count == expected
    for p, m, v in zip(params, opt.m, opt.v):
        assert m.shape == p.shape and v.shape == p.shape


def test_missing_grad_raises(rng):
    p = Tensor(rng.standard_normal(3), requires_grad=True)
    with pytest.raises(GradientError):
        Adam([p]).step()
    with pytest.raises(GradientError):
        SGD([p], lr=0.1).step()


def _train_toy(seed: int, steps: int = 10) -> np.ndarray:
    rng = np.random.default_rng(seed)
    w = Tensor(rng.standard_normal((4, 3)).astype(np.float32), requires_grad=True)
    x = Tensor(rng.standard_normal((8, 4)).astype(np.float32))
    labels = rng.integers(0, 3, size=8)
    opt = Adam([w], lr=1e-2)
    for _ in range(steps):
        ag.zero_grads([w])
        ag.backward(ag.cross_entropy(ag.matmul(x, w), labels))
        opt.step()
    return w.data.copy()


def test_fixed_seed_is_bitwise_deterministic():
    a = _train_toy(seed=5)
    b = _train_toy(seed=5)
    assert a.tobytes() == b.tobytes()


def test_unreachable_param_not_updated(rng):
    used = Tensor(rng.standard_normal((3,)), requires_grad=True, dtype=np.float64)
    dead = Tensor(rng.standard_normal((3,)), requires_grad=True, dtype=np.float64)
    before = dead.data.copy()
    opt = Adam([used, dead], lr=0.1)
    for _ in range(3):
        ag.zero_grads([used, dead])
        ag.backward(ag.mul(used, used).sum())
        opt.step()
    np.testing.assert_array_equal(dead.data, before)


def test_clip_global_norm(rng):
    params = [Tensor(np.zeros(4), requires_grad=True, dtype=np.float64) for _ in range(2)]
    params[0].grad = np.array([3.0, 0, 0, 0])
    params[1].grad = np.array([0, 4.0, 0, 0])
    norm = clip_global_norm(params, max_norm=1.0)
    assert norm == pytest.approx(5.0)
    joint = np.sqrt(sum(float((p.grad ** 2).sum()) for p in params))
    assert joint == pytest.approx(1.0, rel=1e-6)
    # Below the threshold nothing changes.
    params[0].grad = np.array([0.1, 0, 0, 0])
    params[1].grad = np.zeros(4)
    clip_global_norm(params, max_norm=1.0)
    assert float(params[0].grad[0]) == pytest.approx(0.1)
