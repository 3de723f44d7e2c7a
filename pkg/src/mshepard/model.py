"""Two-asset Black-Scholes operator, basket-call payoff and boundary data.

Time ``t`` runs forward from the payoff (time to maturity), so the pricing
problem is ``P_t = L P`` with ``P(0, x) = payoff(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MarketParams:
    r: float = 0.03
    sigma1: float = 0.15
    sigma2: float = 0.15
    rho: float = 0.5
    K: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("volatilities must be nonnegative")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.K <= 0 or self.T <= 0:
            raise ValueError("strike and maturity must be positive")


def payoff(x, params: MarketParams):
    """Average-of-two basket call ``max((x + y)/2 - K, 0)``."""
    x = np.asarray(x, dtype=float)
    return np.maximum(0.5 * (x[..., 0] + x[..., 1]) - params.K, 0.0)


def operator_coefficients(x, params: MarketParams) -> np.ndarray:
    """Weights of (P, P_x, P_y, P_xx, P_xy, P_yy) in L P at points x.

    Shape ``(..., 6)``; row-wise dot with a derivative bundle gives ``L P``.
    """
    x = np.asarray(x, dtype=float)
    X, Y = x[..., 0], x[..., 1]
    p = params
    return np.stack([
        np.full_like(X, -p.r),
        p.r * X,
        p.r * Y,
        0.5 * p.sigma1**2 * X**2,
        p.rho * p.sigma1 * p.sigma2 * X * Y,
        0.5 * p.sigma2**2 * Y**2,
    ], axis=-1)


def apply_L(value, gradient, hessian, x, params: MarketParams):
    """``L P`` from the value, gradient and packed Hessian (xx, xy, yy) of P."""
    bundle = np.concatenate([np.asarray(value, dtype=float)[..., None],
                             np.asarray(gradient, dtype=float),
                             np.asarray(hessian, dtype=float)], axis=-1)
    out = (operator_coefficients(x, params) * bundle).sum(axis=-1)
    return out if np.ndim(out) else float(out)


def far_field(x, t, params: MarketParams):
    """Asymptotic price ``(x + y)/2 - K exp(-r t)`` on the far-field line."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x[..., 0] + x[..., 1]) - params.K * np.exp(-params.r * t)


def near_field(t=None) -> float:
    return 0.0
