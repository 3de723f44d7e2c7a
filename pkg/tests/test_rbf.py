import numpy as np
import pytest

from mshepard.geometry import SIDE
from mshepard.model import MarketParams
from mshepard.rbf import (RbfError, _apportion, _derivative_bundle, default_shape,
                          rbf_assemble, rbf_model, rbf_nodeset_fig1)
from mshepard.timestepper import full_state, run


@pytest.fixture(scope="module")
def fig1():
    return rbf_nodeset_fig1()


@pytest.fixture(scope="module")
def assembled(fig1):
    return rbf_assemble(fig1, market=MarketParams())


def test_fig1_counts_and_domain(fig1):
    assert (fig1.n_interior, fig1.n_farfield) == (370, 20)
    assert np.all(fig1.interior >= 0) and np.all(fig1.interior.sum(1) < SIDE)
    np.testing.assert_array_equal(rbf_nodeset_fig1().points, fig1.points)


def test_fig1_density_toward_kink(fig1):
    s = fig1.points.sum(axis=1)
    w = 0.5 * np.sqrt(2)        # distance 0.5 measured across the diagonals
    near = (np.abs(s - 2) < w).sum() / (((2 + w) ** 2 - (2 - w) ** 2) / 2)
    far = (np.abs(s - 7) < w).sum() / ((SIDE**2 - (7 - w) ** 2) / 2)
    assert near > 2 * far


def test_apportion():
    c = _apportion(np.array([1.0, 2.0, 3.0, 0.5]), 50, 2)
    assert c.sum() == 50 and c.min() >= 2


def test_interpolation_is_cardinal_and_symmetric(fig1, assembled):
    _, model = assembled
    E = model.eval_matrix(fig1.points)
    np.testing.assert_allclose(E, np.eye(fig1.n), atol=1e-6)
    d2 = ((fig1.points[:, None] - fig1.points[None]) ** 2).sum(-1)
    np.testing.assert_array_equal(d2, d2.T)


def test_constants_give_minus_r(assembled):
    system, _ = assembled
    np.testing.assert_allclose(system.full_operator().sum(axis=1), -system.market.r, atol=1e-6)


def test_multiquadric_derivatives_by_finite_differences():
    rng = np.random.default_rng(0)
    c = rng.random((5, 2)) * 8
    x = rng.random((1, 2)) * 8
    h = 1e-5
    b = _derivative_bundle(x, c, 0.7)[0]
    e = np.eye(2) * h
    val = lambda z: _derivative_bundle(z[None], c, 0.7)[0]
    fx = (val(x[0] + e[0]) - val(x[0] - e[0])) / (2 * h)
    fy = (val(x[0] + e[1]) - val(x[0] - e[1])) / (2 * h)
    np.testing.assert_allclose(b[:, 1], fx[:, 0], rtol=1e-7)
    np.testing.assert_allclose(b[:, 2], fy[:, 0], rtol=1e-7)
    np.testing.assert_allclose(b[:, 3], fx[:, 1], rtol=1e-6)
    np.testing.assert_allclose(b[:, 4], fy[:, 1], rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(b[:, 5], fy[:, 2], rtol=1e-6)


def test_default_shape(fig1):
    pts = fig1.points
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1)) + np.diag(np.full(len(pts), np.inf))
    assert default_shape(pts) == pytest.approx(2 * d.min(axis=1).mean())


def test_ill_conditioned(fig1):
    with pytest.raises(RbfError, match="ill-conditioned"):
        rbf_model(fig1, shape=50.0)
    with pytest.raises(ValueError):
        rbf_model(fig1, shape=-1.0)


def test_baseline_run_is_stable(assembled):
    system, model = assembled
    tr = run(system, M=20)
    X = np.array([[1.0, 1.2], [3.0, 1.0], [0.5, 4.0]])
    E = model.eval_matrix(X)
    vals = [E @ full_state(system, tr.states[l], tr.times[l]) for l in range(21)]
    assert np.all(np.isfinite(vals)) and np.abs(vals).max() < 5
