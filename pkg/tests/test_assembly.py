import io

import numpy as np
import pytest

from mshepard.assembly import assemble, boundary_vector
from mshepard.model import far_field


QUADRATICS = {
    "x": (lambda x, y: x, lambda m, x, y: 0 * x),
    "y": (lambda x, y: y, lambda m, x, y: 0 * x),
    "x2": (lambda x, y: x * x, lambda m, x, y: (m.r + m.sigma1**2) * x * x),
    "xy": (lambda x, y: x * y, lambda m, x, y: (m.r + m.rho * m.sigma1 * m.sigma2) * x * y),
    "y2": (lambda x, y: y * y, lambda m, x, y: (m.r + m.sigma2**2) * y * y),
}


@pytest.fixture(scope="module")
def system(small_nodes, small_basis):
    from mshepard.model import MarketParams
    return assemble(small_basis, small_nodes, MarketParams())


@pytest.mark.parametrize("name", list(QUADRATICS))
def test_quadratic_exactness(system, small_nodes, name):
    g, Lg = QUADRATICS[name]
    I, F = small_nodes.interior, small_nodes.farfield
    lhs = system.A @ g(*I.T) + system.Bmat @ g(*F.T) + system.origin_column * g(0.0, 0.0)
    np.testing.assert_allclose(lhs, Lg(system.market, *I.T), atol=1e-9)


def test_shapes_and_constant(system, small_nodes):
    nI, nF = small_nodes.n_interior, small_nodes.n_farfield
    assert system.A.shape == (nI, nI) and system.Bmat.shape == (nI, nF)
    full = system.full_operator()
    assert full.shape == (nI, small_nodes.n)
    # L 1 = -r
    np.testing.assert_allclose(full.sum(axis=1), -system.market.r, atol=1e-9)


def test_sparsity_summary(system):
    s = system.sparsity()
    assert s["rows"] == system.n_interior
    assert 0 < s["density"] <= 1 and s["max_row_support"] >= s["mean_row_support"]


def test_write_coo(system):
    buf = io.StringIO()
    system.write_coo(buf, "A", tol=1e-14)
    lines = buf.getvalue().splitlines()
    assert len(lines) == int((np.abs(system.A) > 1e-14).sum())
    i, j, v = lines[0].split()
    assert float(v) == system.A[int(i), int(j)]


def test_boundary_vector(small_nodes, market):
    b = boundary_vector(small_nodes.farfield, market, 0.5)
    np.testing.assert_allclose(b, far_field(small_nodes.farfield, 0.5, market))
    with pytest.raises(ValueError):
        boundary_vector(small_nodes.farfield, market, -1.0)
