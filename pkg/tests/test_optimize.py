import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from layerwise_lab.autodiff import Tensor
from layerwise_lab.optimize import Adam, AdamState, DecaySchedule, adam_step, lr_at_epoch


def scalar_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar ADAM written out per step."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


def test_first_step_moves_by_lr():
    # |m_hat| / sqrt(v_hat) = 1 at t=1, so the step is lr / (1 + eps/|g|)
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True, dtype=np.float64)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([1.0, -1.0])
    opt.step()
    np.testing.assert_allclose(p.data, [1.0 - 0.1 / (1 + 1e-8), -2.0 + 0.1 / (1 + 1e-8)], rtol=1e-15)


@given(st.lists(st.floats(-5, 5, allow_nan=False).filter(lambda g: abs(g) > 1e-3), min_size=1, max_size=20),
       st.floats(1e-5, 1e-1))
def test_matches_scalar_reference(grads, lr):
    p = Tensor(np.array([0.5]), requires_grad=True, dtype=np.float64)
    opt = Adam([p], lr=lr)
    for g in grads:
        p.grad = np.array([g])
        opt.step()
    assert p.data[0] == pytest.approx(scalar_adam(0.5, grads, lr), rel=1e-12, abs=1e-14)


def test_zero_lr_updates_moments_only():
    p = Tensor(np.ones(3), requires_grad=True, dtype=np.float64)
    st_ = AdamState(lr=0.0, m=[np.zeros(3)], v=[np.zeros(3)])
    adam_step([p], [np.full(3, 2.0)], st_, 0.0)
    np.testing.assert_array_equal(p.data, np.ones(3))
    np.testing.assert_allclose(st_.m[0], 0.2)
    np.testing.assert_allclose(st_.v[0], 0.004)
    assert st_.t == 1


def test_missing_gradient_raises():
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ValueError, match="missing gradient"):
        Adam([p]).step()


def test_bad_betas_rejected():
    with pytest.raises(ValueError):
        Adam([], betas=(1.0, 0.999))


def test_boundaries_for_400_epochs():
    assert DecaySchedule(400).boundaries() == [200, 300, 356, 376]


@pytest.mark.parametrize("epoch,expected", [
    (0, 3e-4), (199, 3e-4), (200, 7.5e-5), (299, 7.5e-5), (300, 1.875e-5),
    (355, 1.875e-5), (356, 4.6875e-6), (375, 4.6875e-6), (376, 1.171875e-6), (399, 1.171875e-6),
])
def test_lr_values_400(epoch, expected):
    assert lr_at_epoch(DecaySchedule(400), 3e-4, epoch) == pytest.approx(expected, rel=1e-12)


def test_boundaries_for_30_epochs():
    # floor(15), floor(22.5), floor(26.7), floor(28.2)
    assert DecaySchedule(30).boundaries() == [15, 22, 26, 28]


def test_epoch_out_of_range():
    s = DecaySchedule(10)
    for e in (-1, 10):
        with pytest.raises(ValueError):
            lr_at_epoch(s, 1e-3, e)


@pytest.mark.parametrize("kw", [dict(total_epochs=0), dict(total_epochs=10, milestones=(0.5, 0.4)),
                                dict(total_epochs=10, factor=0.0), dict(total_epochs=10, milestones=(1.0,))])
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        DecaySchedule(**kw)


@given(st.integers(1, 1000), st.floats(1e-6, 1.0))
def test_schedule_monotone_and_bounded(total, base):
    s = DecaySchedule(total)
    lrs = [lr_at_epoch(s, base, e) for e in range(total)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert lrs[-1] == pytest.approx(base * 0.25 ** 4)
    # one discontinuity per distinct boundary that falls after epoch 0
    jumps = sum(a != b for a, b in zip(lrs, lrs[1:]))
    assert jumps == len({b for b in s.boundaries() if b > 0})
    if total >= 2:
        assert lrs[0] == base


def test_four_discontinuities_at_400():
    lrs = [lr_at_epoch(DecaySchedule(400), 3e-4, e) for e in range(400)]
    assert [e for e in range(1, 400) if lrs[e] != lrs[e - 1]] == [200, 300, 356, 376]
