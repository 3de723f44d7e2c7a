"""Second-order finite-difference reference for the two-asset problem.

Central differences on a uniform grid over [0, 8]^2 (four-point stencil for
the cross derivative), Dirichlet far-field data on x = 8 and y = 8, and the
degenerate equation itself on the axes, where every x- (resp. y-) derivative
term carries a vanishing coefficient.  Backward Euler start, then BDF2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from .geometry import SIDE
from .model import MarketParams, far_field, payoff
from .timestepper import BDF


class ReferenceDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class FDSolution:
    """Grid functions ``values[s]`` at times ``times[s]``, indexed [i_x, j_y]."""

    N: int
    times: np.ndarray
    values: np.ndarray
    M_fd: int

    @property
    def h(self) -> float:
        return SIDE / self.N

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, SIDE, self.N + 1)

    def level(self, t: float, tol: float = 1e-12) -> int:
        hit = np.nonzero(np.abs(self.times - t) <= tol * max(1.0, abs(t)))[0]
        if len(hit) == 0:
            raise KeyError(f"time {t!r} is not stored in the reference")
        return int(hit[0])

    def write_slice(self, fh: IO[str], t: float) -> None:
        """``x y value`` lines of the stored level at time t."""
        s = self.level(t)
        ax = self.axis
        for i, x in enumerate(ax):
            for j, y in enumerate(ax):
                fh.write(f"{x:.17g} {y:.17g} {self.values[s, i, j]:.17g}\n")


def _grid_operator(N: int, market: MarketParams):
    """Sparse L_h on all (N+1)^2 nodes, rows restricted to unknowns."""
    h = SIDE / N
    n1 = N + 1
    I, J = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    I, J = I.ravel(), J.ravel()
    x, y = I * h, J * h
    p = market
    a = 0.5 * p.sigma1**2 * x**2 / h**2
    b = 0.5 * p.sigma2**2 * y**2 / h**2
    cx = p.r * x / (2 * h)
    cy = p.r * y / (2 * h)
    cr = p.rho * p.sigma1 * p.sigma2 * x * y / (4 * h**2)
    stencil = [
        (0, 0, -p.r - 2 * a - 2 * b),
        (1, 0, a + cx), (-1, 0, a - cx),
        (0, 1, b + cy), (0, -1, b - cy),
        (1, 1, cr), (-1, -1, cr), (1, -1, -cr), (-1, 1, -cr),
    ]
    rows, cols, vals = [], [], []
    row_id = I + N * J
    for di, dj, c in stencil:
        ii, jj = I + di, J + dj
        ok = (ii >= 0) & (jj >= 0) & (c != 0)
        rows.append(row_id[ok])
        cols.append((ii + n1 * jj)[ok])
        vals.append(c[ok] if np.ndim(c) else np.full(ok.sum(), c))
    L = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N * N, n1 * n1))
    unknown = (np.arange(n1 * n1) % n1 < N) & (np.arange(n1 * n1) // n1 < N)
    return L, unknown


def grid_operator(N: int, market: MarketParams):
    """Split ``(L_II, L_IB)`` of the discrete operator plus the index masks."""
    L, unknown = _grid_operator(N, market)
    return L[:, unknown], L[:, ~unknown], unknown


def fd_solve(market: MarketParams, N: int = 512, M_fd: int = 520,
             save_steps: Iterable[int] | None = None) -> FDSolution:
    """Reference solution on the (N+1)^2 grid with M_fd uniform steps.

    `save_steps` selects which time levels are kept (all by default).
    """
    if N < 8 or M_fd < 2:
        raise ValueError("need N >= 8 and M_fd >= 2")
    n1 = N + 1
    ax = np.linspace(0.0, SIDE, n1)
    grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    # flat index i + n1*j  <->  grid[i*n1 + j] from meshgrid "ij": reorder
    grid = grid.reshape(n1, n1, 2).transpose(1, 0, 2).reshape(-1, 2)
    L_II, L_IB, unknown = grid_operator(N, market)
    bnd = grid[~unknown]
    dt = market.T / M_fd
    save = set(range(M_fd + 1)) if save_steps is None else set(save_steps)
    u = payoff(grid[unknown], market)
    limit = 1e6 * max(1.0, np.abs(u).max())
    history = [u]
    saved_t, saved_v = [], []

    def keep(step, u_int, t):
        full = np.empty(n1 * n1)
        full[unknown] = u_int
        full[~unknown] = far_field(bnd, t, market) if step else payoff(bnd, market)
        saved_t.append(t)
        saved_v.append(full.reshape(n1, n1).T.copy())   # -> [i_x, j_y]

    if 0 in save:
        keep(0, u, 0.0)
    eye = sparse.identity(L_II.shape[0], format="csc")
    solvers = {}
    for n in range(1, M_fd + 1):
        t = market.T if n == M_fd else n * dt
        k = min(n, 2)
        beta, alpha = BDF[k]
        if k not in solvers:
            solvers[k] = splu((eye - beta * dt * L_II).tocsc())
        rhs = sum(a * v for a, v in zip(alpha, history[-1:-k - 1:-1]))
        rhs = rhs + beta * dt * (L_IB @ far_field(bnd, t, market))
        u = solvers[k].solve(rhs)
        if not np.all(np.isfinite(u)) or np.abs(u).max() > limit:
            raise ReferenceDivergedError("reference diverged")
        history = (history + [u])[-2:]
        if n in save:
            keep(n, u, t)
    return FDSolution(N, np.array(saved_t), np.array(saved_v), M_fd)


def fd_interpolate(solution: FDSolution, x, t: float) -> np.ndarray | float:
    """Bilinear interpolation of the stored level at time t."""
    s = solution.level(t)
    interp = RegularGridInterpolator((solution.axis, solution.axis), solution.values[s])
    X = np.asarray(x, dtype=float)
    out = interp(X.reshape(-1, 2))
    return float(out[0]) if X.ndim == 1 else out
