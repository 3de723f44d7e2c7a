"""Global multiquadric collocation baseline.

The expansion ``s(x) = sum_j c_j phi(|x - x_j|) + d`` with
``phi(r) = sqrt(r^2 + c^2)`` and the side condition ``sum_j c_j = 0``
interpolates nodal values on every node (interior, origin, far-field).
Applying L to the expansion gives differentiation matrices with the same
interior/far-field split as the multinode Shepard assembly, so the same
time stepper drives both methods.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial import cKDTree

from .assembly import SpatialSystem
from .geometry import SIDE, NodeSet, farfield_line
from .model import MarketParams, operator_coefficients

COND_LIMIT = 1e14

# node distribution with 370 interior and 20 far-field nodes
FIG1_INTERIOR = 370
FIG1_FARFIELD = 20
FIG1_LEVELS = 24
FIG1_GRADING = 0.6


class RbfError(RuntimeError):
    pass


def _graded_levels(count: int, focus: float, alpha: float) -> np.ndarray:
    """`count` levels in (0, 8) from a sinh map clustering toward `focus`.

    ``a(xi) = focus + alpha sinh(c1 xi + c0 (1 - xi))`` maps [0, 1] onto
    [0, 8]; smaller `alpha` means stronger clustering.
    """
    c0 = np.arcsinh(-focus / alpha)
    c1 = np.arcsinh((SIDE - focus) / alpha)
    xi = np.arange(1, count + 1) / (count + 1)
    return focus + alpha * np.sinh(c1 * xi + c0 * (1.0 - xi))


def _apportion(weights: np.ndarray, total: int, minimum: int) -> np.ndarray:
    """Integer counts summing to `total`, proportional to `weights` (largest remainder)."""
    free = total - minimum * len(weights)
    if free < 0:
        raise ValueError("total too small for the requested minimum")
    share = free * weights / weights.sum()
    counts = np.floor(share).astype(int)
    short = free - counts.sum()
    counts[np.argsort(-(share - counts), kind="stable")[:short]] += 1
    return counts + minimum


def rbf_nodeset_fig1(n_interior: int = FIG1_INTERIOR, n_farfield: int = FIG1_FARFIELD,
                     levels: int = FIG1_LEVELS, alpha: float = FIG1_GRADING,
                     focus: float = 2.0) -> NodeSet:
    """Deterministic node set graded toward the payoff kink ``x + y = focus``.

    Interior nodes lie on `levels` diagonals ``x + y = a_k`` whose spacing
    follows a sinh grading centered at `focus`.  Each diagonal carries
    equispaced nodes (endpoints on the axes) in number proportional to its
    length, with at least two per diagonal; the counts are apportioned to
    give exactly `n_interior` nodes.
    """
    a = _graded_levels(levels, focus, alpha)
    counts = _apportion(a, n_interior, 2)
    interior = []
    for level, k in zip(a, counts):
        u = np.linspace(0.0, 1.0, k)[:, None]
        interior.append(level * np.hstack([1.0 - u, u]))
    meta = {"generator": "rbf-fig1", "levels": levels, "alpha": alpha, "focus": focus}
    return NodeSet(np.vstack(interior), farfield_line(n_farfield), meta).validate()


def multiquadric(r2, shape: float):
    return np.sqrt(r2 + shape * shape)


def _derivative_bundle(X: np.ndarray, centers: np.ndarray, shape: float) -> np.ndarray:
    """(phi, phi_x, phi_y, phi_xx, phi_xy, phi_yy) of every center at X, shape (m, n, 6)."""
    dx = X[:, None, 0] - centers[None, :, 0]
    dy = X[:, None, 1] - centers[None, :, 1]
    c2 = shape * shape
    phi = np.sqrt(dx * dx + dy * dy + c2)
    phi3 = phi**3
    return np.stack([phi, dx / phi, dy / phi, (dy * dy + c2) / phi3,
                     -dx * dy / phi3, (dx * dx + c2) / phi3], axis=-1)


def default_shape(points: np.ndarray) -> float:
    """Twice the mean nearest-neighbor distance."""
    d, _ = cKDTree(points).query(points, k=2)
    return 2.0 * float(d[:, 1].mean())


@dataclass(frozen=True)
class RbfModel:
    """Multiquadric interpolation on all nodes plus an appended constant.

    `cardinal` maps nodal values (ordered like ``NodeSet.points``) to the
    expansion coefficients ``[c; d]``.
    """

    nodes: NodeSet
    shape: float
    cardinal: np.ndarray
    condition: float

    def eval_matrix(self, X) -> np.ndarray:
        """Matrix taking nodal values to interpolant values at X."""
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        d2 = ((X[:, None, :] - self.nodes.points[None, :, :]) ** 2).sum(axis=-1)
        basis = np.hstack([multiquadric(d2, self.shape), np.ones((len(X), 1))])
        return basis @ self.cardinal

    def interpolate(self, values, X) -> np.ndarray:
        return self.eval_matrix(X) @ np.asarray(values, dtype=float)


def rbf_model(nodes: NodeSet, shape: float | None = None) -> RbfModel:
    pts = nodes.points
    if shape is None:
        shape = default_shape(pts)
    if not shape > 0:
        raise ValueError("shape parameter must be positive")
    n = len(pts)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = multiquadric(d2, shape)
    aug[:n, n] = aug[n, :n] = 1.0
    cond = float(np.linalg.cond(aug))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RbfError(f"RBF system ill-conditioned (condition {cond:.3e})")
    rhs = np.vstack([np.eye(n), np.zeros((1, n))])
    cardinal = lu_solve(lu_factor(aug), rhs)
    return RbfModel(nodes, float(shape), cardinal, cond)


def rbf_assemble(nodes: NodeSet, shape: float | None = None,
                 market: MarketParams | None = None) -> tuple[SpatialSystem, RbfModel]:
    """Collocate L on the interior nodes of the multiquadric expansion.

    Returns the split system ``dP/dt = A P + Bmat b(t)`` and the model
    used for evaluation.
    """
    market = market or MarketParams()
    model = rbf_model(nodes, shape)
    X = nodes.interior
    coef = operator_coefficients(X, market)
    Lphi = (_derivative_bundle(X, nodes.points, model.shape) * coef[:, None, :]).sum(axis=-1)
    # L applied to the constant term is -r
    L_basis = np.hstack([Lphi, np.full((len(X), 1), -market.r)])
    D = L_basis @ model.cardinal
    nI = nodes.n_interior
    system = SpatialSystem(
        A=D[:, :nI],
        Bmat=D[:, nI + 1:],
        origin_column=D[:, nI].copy(),
        interior=np.asarray(nodes.interior),
        farfield=np.asarray(nodes.farfield),
        market=market,
    )
    return system, model
