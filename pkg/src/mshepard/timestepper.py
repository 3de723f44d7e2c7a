"""Backward differentiation time stepping of ``dP/dt = A P + Bmat b(t)``.

A run starts with one backward Euler step, continues with BDF2 (and, for
``scheme="bdf3"``, one BDF2 step before switching to BDF3).  Steps are
uniform, so every distinct iteration matrix ``I - beta dt A`` is LU
factored once and reused.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

from .assembly import SpatialSystem, boundary_vector
from .model import payoff

COND_LIMIT = 1e12

# (beta, history weights alpha_1..alpha_k):  P^n = sum alpha_i P^{n-i} + beta dt F^n
BDF = {
    1: (1.0, (1.0,)),
    2: (2.0 / 3.0, (4.0 / 3.0, -1.0 / 3.0)),
    3: (6.0 / 11.0, (18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0)),
}
SCHEME_ORDER = {"bdf1": 1, "bdf2": 2, "bdf3": 3}


class TimeStepError(RuntimeError):
    pass


@dataclass
class _Factor:
    lu: tuple
    cond: float


def factor_iteration_matrix(A: np.ndarray, beta_dt: float) -> _Factor:
    """LU factors of ``I - beta_dt A`` with a 1-norm condition estimate."""
    M = np.eye(A.shape[0]) - beta_dt * A
    anorm = np.abs(M).sum(axis=0).max()
    with warnings.catch_warnings():
        # exact singularity is reported through the condition estimate below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(M, check_finite=False)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise TimeStepError(f"time-step matrix singular (condition {cond:.3e})")
    return _Factor((lu, piv), float(cond))


def _bdf_step(system, factor, history, dt, t, order, freeze_t=None):
    beta, alpha = BDF[order]
    rhs = sum(a * P for a, P in zip(alpha, history))
    tb = t if freeze_t is None else freeze_t
    b = boundary_vector(system.farfield, system.market, tb)
    rhs = rhs + beta * dt * (system.Bmat @ b)
    return lu_solve(factor.lu, rhs, check_finite=False)


def initial_condition(nodes, market) -> np.ndarray:
    return payoff(np.asarray(getattr(nodes, "interior", nodes)), market)


def step_bdf1(system: SpatialSystem, P0, dt: float, t1: float) -> np.ndarray:
    """``(I - dt A) P1 = P0 + dt Bmat b(t1)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = factor_iteration_matrix(system.A, dt)
    return _bdf_step(system, f, [np.asarray(P0, dtype=float)], dt, t1, 1)


def step_bdf2(system: SpatialSystem, P_prev, P_prev2, dt: float, t: float) -> np.ndarray:
    """``(I - 2/3 dt A) P = 4/3 P_prev - 1/3 P_prev2 + 2/3 dt Bmat b(t)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = factor_iteration_matrix(system.A, 2.0 / 3.0 * dt)
    return _bdf_step(system, f, [np.asarray(P_prev, float), np.asarray(P_prev2, float)],
                     dt, t, 2)


@dataclass(frozen=True)
class Trajectory:
    """Interior solution vectors at ``times`` (row l is P^l)."""

    times: np.ndarray
    states: np.ndarray
    dt: np.ndarray
    scheme: str
    conditions: dict = field(default_factory=dict)
    factorizations: int = 0

    @property
    def M(self) -> int:
        return len(self.times) - 1

    @property
    def cond_first(self) -> float:
        return self.conditions.get(1, np.nan)

    @property
    def cond_rest(self) -> float:
        return self.conditions.get(max(self.conditions), np.nan) if self.conditions else np.nan


def run(system: SpatialSystem, M: int = 20, scheme: str = "bdf2", P0=None,
        freeze_boundary: bool = False) -> Trajectory:
    """Integrate from t=0 to T in M uniform steps.

    With `freeze_boundary` the far-field vector is evaluated once at the
    first time level and reused for every step.
    """
    order = SCHEME_ORDER[scheme]
    if M < max(2, order):
        raise ValueError(f"{scheme} needs at least {max(2, order)} steps")
    market = system.market
    dt = market.T / M
    times = np.arange(M + 1) * dt
    times[-1] = market.T
    P = np.empty((M + 1, system.n_interior))
    P[0] = payoff(system.interior, market) if P0 is None else P0
    factors: dict[int, _Factor] = {}
    freeze_t = times[1] if freeze_boundary else None
    for n in range(1, M + 1):
        k = min(n, order)
        if k not in factors:
            factors[k] = factor_iteration_matrix(system.A, BDF[k][0] * dt)
        history = [P[n - i] for i in range(1, k + 1)]
        P[n] = _bdf_step(system, factors[k], history, dt, times[n], k, freeze_t)
    if not np.all(np.isfinite(P)):
        raise TimeStepError("non-finite solution")
    return Trajectory(times, P, np.full(M, dt), scheme,
                      {k: f.cond for k, f in factors.items()}, len(factors))


def full_state(system: SpatialSystem, P_interior, t: float) -> np.ndarray:
    """Nodal vector ``[interior, origin=0, far-field b(t)]``."""
    return np.concatenate([P_interior, [0.0],
                           boundary_vector(system.farfield, system.market, t)])
