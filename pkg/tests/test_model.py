import numpy as np
import pytest

from mshepard.model import (MarketParams, apply_L, far_field, near_field,
                            operator_coefficients, payoff)


def test_payoff_kink(market):
    x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 1.0], [4.0, 4.0]])
    np.testing.assert_allclose(payoff(x, market), [0, 0, 0.5, 3.0])


def test_linear_functions_in_kernel(market):
    # x and y are annihilated: r x - r x = 0
    x = np.array([[1.5, 0.3], [0.0, 4.0]])
    zero = np.zeros(3)
    for g, grad in [(x[:, 0], [1.0, 0.0]), (x[:, 1], [0.0, 1.0])]:
        out = apply_L(g, np.tile(grad, (2, 1)), np.tile(zero, (2, 1)), x, market)
        np.testing.assert_allclose(out, 0, atol=1e-15)


def test_quadratic_monomials(market):
    m = market
    x, y = 1.3, 2.1
    pt = np.array([x, y])
    # L(x y) = 2 r x y + rho s1 s2 x y - r x y
    got = apply_L(x * y, [y, x], [0, 1, 0], pt, m)
    assert got == pytest.approx((m.r + m.rho * m.sigma1 * m.sigma2) * x * y)
    got = apply_L(x * x, [2 * x, 0], [2, 0, 0], pt, m)
    assert got == pytest.approx((m.r + m.sigma1**2) * x * x)


def test_far_field_solves_the_equation(market):
    # d/dt of the asymptotic price equals L applied to it
    pts = np.array([[8.0, 0.0], [3.0, 5.0]])
    t = 0.37
    val = far_field(pts, t, market)
    Lv = apply_L(val, np.full((2, 2), 0.5), np.zeros((2, 3)), pts, market)
    dt = market.r * market.K * np.exp(-market.r * t)
    np.testing.assert_allclose(Lv, dt, rtol=1e-14)
    np.testing.assert_allclose(far_field(pts, 0.0, market), payoff(pts, market))


def test_coefficients_shape_and_origin(market):
    c = operator_coefficients(np.zeros((4, 2)), market)
    assert c.shape == (4, 6)
    np.testing.assert_allclose(c[:, 1:], 0)
    assert near_field(0.3) == 0.0


@pytest.mark.parametrize("kw", [dict(sigma1=-0.1), dict(rho=1.5), dict(K=0), dict(T=-1)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        MarketParams(**kw)
