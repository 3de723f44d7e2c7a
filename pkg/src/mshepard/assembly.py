"""Collocation matrices of the Black-Scholes operator on the cardinal basis."""
from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np

from .model import MarketParams, far_field, operator_coefficients
from .shepard import MultinodeShepard


@dataclass(frozen=True)
class SpatialSystem:
    """``dP/dt = A P + Bmat b(t)`` on the interior nodes.

    `A` couples interior nodes, `Bmat` the far-field nodes; the origin
    column is kept separately in `origin_column` (its value is pinned to 0
    and it never enters the time stepping).
    """

    A: np.ndarray
    Bmat: np.ndarray
    origin_column: np.ndarray
    interior: np.ndarray
    farfield: np.ndarray
    market: MarketParams

    @property
    def n_interior(self) -> int:
        return self.A.shape[0]

    def full_operator(self) -> np.ndarray:
        """``[A | origin | Bmat]``: L applied to every cardinal function."""
        return np.hstack([self.A, self.origin_column[:, None], self.Bmat])

    def write_coo(self, fh: IO[str], which: str = "A", tol: float = 0.0) -> None:
        M = self.A if which == "A" else self.Bmat
        rows, cols = np.nonzero(np.abs(M) > tol)
        for i, j in zip(rows, cols):
            fh.write(f"{i} {j} {M[i, j]:.17g}\n")

    def sparsity(self, tol: float = 1e-14) -> dict:
        full = np.abs(self.full_operator()) > tol
        per_row = full.sum(axis=1)
        return {
            "rows": int(full.shape[0]),
            "cols": int(full.shape[1]),
            "nnz": int(full.sum()),
            "density": float(full.mean()),
            "max_row_support": int(per_row.max()),
            "mean_row_support": float(per_row.mean()),
        }


def assemble(basis: MultinodeShepard, nodes, market: MarketParams) -> SpatialSystem:
    """Apply L to every cardinal function at every interior collocation node."""
    nI = nodes.n_interior
    X = nodes.interior
    mats = basis.matrices(X)
    coef = operator_coefficients(X, market)
    L = sum(mats[c].multiply(coef[:, c:c + 1]) for c in range(6)).toarray()
    return SpatialSystem(
        A=L[:, :nI],
        Bmat=L[:, nI + 1:],
        origin_column=L[:, nI].copy(),
        interior=np.asarray(nodes.interior),
        farfield=np.asarray(nodes.farfield),
        market=market,
    )


def boundary_vector(farfield, market: MarketParams, t: float) -> np.ndarray:
    """Prescribed far-field values at time t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return far_field(np.asarray(farfield), t, market)
