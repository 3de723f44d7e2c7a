"""Fundamental Lagrange polynomials on unisolvent node subsets.

Polynomials are expanded in monomials of the shifted and scaled coordinates
``u = (x - cx) / rho``, ``v = (y - cy) / rho``, ordered by total degree
(1, u, v, u^2, uv, v^2, ...).  Derivatives are returned in physical
coordinates; Hessians are packed as ``(xx, xy, yy)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


class DegenerateSubsetError(np.linalg.LinAlgError):
    pass


@lru_cache(maxsize=None)
def exponents(p: int) -> np.ndarray:
    """Monomial exponents of total degree <= p, graded order, shape (tau, 2)."""
    exps = [(d - b, b) for d in range(p + 1) for b in range(d + 1)]
    out = np.array(exps, dtype=int)
    out.setflags(write=False)
    return out


def tau(p: int) -> int:
    return comb(p + 2, 2)


def _powers(u: np.ndarray, p: int) -> np.ndarray:
    """u**k for k = 0..p, stacked on a trailing axis."""
    out = np.ones(u.shape + (p + 1,))
    for k in range(1, p + 1):
        out[..., k] = out[..., k - 1] * u
    return out


def monomials(uv: np.ndarray, p: int, derivatives: bool = False):
    """Evaluate the monomial basis at scaled coordinates `uv` (..., 2).

    Returns the values (..., tau).  With ``derivatives=True`` also returns
    first derivatives (..., 2, tau) and second derivatives (..., 3, tau)
    with respect to (u, v).
    """
    e = exponents(p)
    a, b = e[:, 0], e[:, 1]
    pu = _powers(uv[..., 0], p)
    pv = _powers(uv[..., 1], p)
    val = pu[..., a] * pv[..., b]
    if not derivatives:
        return val

    def dpow(pw, k, order):
        # d^order/du^order of u**k
        coef = np.ones_like(k, dtype=float)
        for o in range(order):
            coef = coef * np.maximum(k - o, 0)
        return coef * pw[..., np.maximum(k - order, 0)]

    du = dpow(pu, a, 1) * pv[..., b]
    dv = pu[..., a] * dpow(pv, b, 1)
    duu = dpow(pu, a, 2) * pv[..., b]
    duv = dpow(pu, a, 1) * dpow(pv, b, 1)
    dvv = pu[..., a] * dpow(pv, b, 2)
    grad = np.stack([du, dv], axis=-2)
    hess = np.stack([duu, duv, dvv], axis=-2)
    return val, grad, hess


def vandermonde(points: np.ndarray, center, scale: float, p: int) -> np.ndarray:
    uv = (np.asarray(points, dtype=float) - center) / scale
    return monomials(uv, p)


@dataclass(frozen=True)
class LocalInterpolant:
    """Lagrange basis of one covering subset.

    ``coeffs[:, i]`` holds the monomial coefficients of the i-th fundamental
    polynomial, i.e. ``coeffs`` is the inverse of the subset Vandermonde.
    """

    subset: np.ndarray
    coeffs: np.ndarray
    center: np.ndarray
    scale: float
    p: int


def build_local_interpolant(points: np.ndarray, subset, p: int = 2,
                            center=None, scale: float | None = None,
                            check: bool = True) -> LocalInterpolant:
    """Fundamental Lagrange polynomials on ``points[subset]``.

    The basis is centred at the first subset node unless `center` is given,
    and scaled by the largest distance from the centre unless `scale` is.
    """
    subset = np.asarray(subset, dtype=int)
    pts = np.asarray(points, dtype=float)[subset]
    if len(subset) != tau(p):
        raise ValueError(f"subset must have {tau(p)} nodes for degree {p}")
    center = pts[0] if center is None else np.asarray(center, dtype=float)
    if scale is None:
        scale = float(np.max(np.hypot(*(pts - center).T)))
    V = vandermonde(pts, center, scale, p)
    try:
        coeffs = np.linalg.solve(V, np.eye(len(subset)))
    except np.linalg.LinAlgError as exc:
        raise DegenerateSubsetError("degenerate subset") from exc
    if check and not np.allclose(V @ coeffs, np.eye(len(subset)), rtol=0, atol=1e-10):
        raise DegenerateSubsetError("degenerate subset")
    return LocalInterpolant(subset, coeffs, np.array(center), float(scale), p)


def eval_lambda(interp: LocalInterpolant, x):
    """Values (tau,), gradients (tau, 2) and Hessians (tau, 3) at x."""
    uv = (np.asarray(x, dtype=float) - interp.center) / interp.scale
    phi, dphi, d2phi = monomials(uv, interp.p, derivatives=True)
    s = interp.scale
    val = phi @ interp.coeffs
    grad = (dphi @ interp.coeffs).T / s
    hess = (d2phi @ interp.coeffs).T / s**2
    return val, grad, hess


def batch_coefficients(points: np.ndarray, subsets: np.ndarray, centers: np.ndarray,
                       scales: np.ndarray, p: int) -> np.ndarray:
    """Inverse Vandermondes of many subsets at once, shape (m, tau, tau)."""
    uv = (points[subsets] - centers[:, None, :]) / scales[:, None, None]
    V = monomials(uv, p)
    t = V.shape[-1]
    return np.linalg.solve(V, np.broadcast_to(np.eye(t), V.shape))


def batch_eval(coeffs: np.ndarray, centers: np.ndarray, scales: np.ndarray,
               x: np.ndarray, p: int, derivatives: bool = True):
    """Evaluate subset bases ``coeffs[k]`` at points ``x[k]`` (pairwise).

    Returns values (K, tau) and, with derivatives, gradients (K, 2, tau) and
    Hessians (K, 3, tau) in physical coordinates.
    """
    uv = (x - centers) / scales[:, None]
    if not derivatives:
        return np.einsum("ka,kai->ki", monomials(uv, p), coeffs)
    phi, dphi, d2phi = monomials(uv, p, derivatives=True)
    val = np.einsum("ka,kai->ki", phi, coeffs)
    grad = np.einsum("kda,kai->kdi", dphi, coeffs) / scales[:, None, None]
    hess = np.einsum("kda,kai->kdi", d2phi, coeffs) / scales[:, None, None] ** 2
    return val, grad, hess
