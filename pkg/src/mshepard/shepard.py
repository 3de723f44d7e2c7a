"""Multinode Shepard weights and the cardinal basis W_i with derivatives.

The weight of subset j at x is proportional to ``prod_l |x - x_{j_l}|^-mu``.
All evaluation goes through one regularized representation: the weights are
multiplied by ``d**mu`` where ``d`` is the distance from x to its nearest
node k.  For subsets containing k this cancels the singular factor; for the
others it contributes ``d**mu``, which vanishes together with its first
three derivatives at ``x = x_k`` (mu even, mu > 2).  Points closer than
``near_node_tol`` to a node are snapped onto it.

Weights are normalised in log space (log-sum-exp), and the derivatives come
from the log-derivatives of the weights.  Hessians are packed
``(xx, xy, yy)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .covering import Covering
from .geometry import SIDE
from .localpoly import batch_coefficients, batch_eval, monomials

DOMAIN_DIAMETER = SIDE * np.sqrt(2.0)
PRUNE_TOL = 1e-16
DROP_TOL = 1e-14
_CHUNK_ELEMS = 3_000_000


@dataclass(frozen=True)
class ShepardParams:
    mu: int = 4
    near_node_tol: float = 1e-8 * DOMAIN_DIAMETER

    def __post_init__(self):
        if self.mu != int(self.mu) or self.mu % 2 or self.mu <= 2:
            raise ValueError("mu must be an even integer greater than 2")


@dataclass(frozen=True)
class ShepardRow:
    """Nonzero cardinal functions at one point.

    ``grads[k]`` is the gradient and ``hess[k]`` the packed Hessian of
    ``W_{indices[k]}`` at `eval_point`.
    """

    eval_point: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    hess: np.ndarray

    def dense(self, n: int) -> np.ndarray:
        """Dense (n, 6) array of value, gradient and Hessian components."""
        out = np.zeros((n, 6))
        out[self.indices, 0] = self.values
        out[self.indices, 1:3] = self.grads
        out[self.indices, 3:] = self.hess
        return out


class MultinodeShepard:
    """Cardinal basis evaluator for a node set and its covering."""

    def __init__(self, nodes, covering: Covering, params: ShepardParams | None = None):
        self.params = params or ShepardParams()
        self.points = np.asarray(getattr(nodes, "points", nodes), dtype=float)
        self.covering = covering
        self.n = len(self.points)
        self.subsets = covering.subsets
        self.coeffs = batch_coefficients(self.points, covering.subsets,
                                         covering.centers, covering.scales, covering.p)
        self._self_test()
        self.tree = cKDTree(self.points)

    def _self_test(self):
        cov = self.covering
        uv = (self.points[cov.subsets] - cov.centers[:, None]) / cov.scales[:, None, None]
        V = monomials(uv, cov.p)
        err = np.abs(V @ self.coeffs - np.eye(cov.tau)).max()
        if err > 1e-10:
            raise np.linalg.LinAlgError(f"local Lagrange bases fail the Kronecker test ({err:.2e})")

    # -- subset weights --------------------------------------------------

    def _snap(self, X):
        X = np.array(X, dtype=float).reshape(-1, 2)
        d, k = self.tree.query(X)
        snap = d < self.params.near_node_tol
        X[snap] = self.points[k[snap]]
        d = np.where(snap, 0.0, d)
        return X, k, d

    def _log_weights(self, X, k, d, cand, valid, derivatives):
        """Regularized log-weights of subsets ``cand`` (P, c) and derivatives."""
        mu = self.params.mu
        members = self.subsets[cand]                                  # (P, c, tau)
        diff = X[:, None, None, :] - self.points[members]             # (P, c, tau, 2)
        r2 = np.einsum("...i,...i->...", diff, diff)
        own = members == k[:, None, None]
        r2 = np.where(own, 1.0, r2)
        a = -0.5 * mu * np.log(r2).sum(axis=-1)
        contains = own.any(axis=-1)
        at_node = d == 0.0
        with np.errstate(divide="ignore"):
            a = np.where(contains, a, a + mu * np.log(d)[:, None])
        a = np.where(valid, a, -np.inf)
        if not derivatives:
            return a, None, None
        inv = np.where(own, 0.0, 1.0 / r2)
        dx, dy = diff[..., 0], diff[..., 1]
        g = -mu * np.stack([(dx * inv).sum(-1), (dy * inv).sum(-1)], axis=-1)
        inv2 = inv * inv
        H = -mu * np.stack([
            (inv - 2 * dx * dx * inv2).sum(-1),
            (-2 * dx * dy * inv2).sum(-1),
            (inv - 2 * dy * dy * inv2).sum(-1),
        ], axis=-1)
        # d**mu factor on subsets that do not contain the nearest node
        e = X - self.points[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            id2 = np.where(at_node, 0.0, 1.0 / (d * d))
        ge = mu * e * id2[:, None]
        He = mu * np.stack([
            id2 - 2 * e[:, 0] ** 2 * id2 ** 2,
            -2 * e[:, 0] * e[:, 1] * id2 ** 2,
            id2 - 2 * e[:, 1] ** 2 * id2 ** 2,
        ], axis=-1)
        g = g + np.where(contains[..., None], 0.0, ge[:, None, :])
        H = H + np.where(contains[..., None], 0.0, He[:, None, :])
        return a, g, H

    def _subset_weights(self, X, k, d, cand=None, valid=None, derivatives=True):
        if cand is None:
            cand = np.broadcast_to(np.arange(self.covering.m), (len(X), self.covering.m))
            valid = np.ones(cand.shape, dtype=bool)
        a, g, H = self._log_weights(X, k, d, cand, valid, derivatives)
        w = np.exp(a - a.max(axis=1, keepdims=True))
        B = w / w.sum(axis=1, keepdims=True)
        if not derivatives:
            return B, None, None
        live = B > 0
        g = np.where(live[..., None], g, 0.0)
        H = np.where(live[..., None], H, 0.0)
        gbar = np.einsum("pm,pmi->pi", B, g)
        gc = g - gbar[:, None, :]
        outer = np.stack([gc[..., 0] ** 2, gc[..., 0] * gc[..., 1], gc[..., 1] ** 2], axis=-1)
        hess_logS = np.einsum("pm,pmi->pi", B, H + outer)
        dB = B[..., None] * gc
        HB = B[..., None] * (outer + H - hess_logS[:, None, :])
        return B, dB, HB

    def _candidates(self, k, d):
        """Subsets that can be nonzero at each point, padded, with a mask.

        At a node only the subsets containing it contribute; elsewhere all do.
        """
        P, m = len(k), self.covering.m
        if np.any(d > 0):
            return (np.broadcast_to(np.arange(m), (P, m)),
                    np.ones((P, m), dtype=bool))
        rev = [self.covering.reverse[i] for i in k]
        width = max(len(r) for r in rev)
        cand = np.zeros((P, width), dtype=int)
        valid = np.zeros((P, width), dtype=bool)
        for p, r in enumerate(rev):
            cand[p, :len(r)] = r
            valid[p, :len(r)] = True
        return cand, valid

    def _chunks(self, P, width):
        size = max(1, _CHUNK_ELEMS // (width * self.covering.tau))
        for s in range(0, P, size):
            yield slice(s, min(P, s + size))

    def eval_B(self, x):
        """Subset weights B_j with gradients and Hessians at one point."""
        X, k, d = self._snap(x)
        B, dB, HB = self._subset_weights(X, k, d)
        return B[0], dB[0], HB[0]

    def weights(self, X, derivatives: bool = True):
        """Dense B (P, m), gradients (P, m, 2) and Hessians (P, m, 3) at points X."""
        X, k, d = self._snap(X)
        out = [], [], []
        for sl in self._chunks(len(X), self.covering.m):
            for acc, part in zip(out, self._subset_weights(X[sl], k[sl], d[sl],
                                                           derivatives=derivatives)):
                acc.append(part)
        B = np.concatenate(out[0])
        if not derivatives:
            return B, None, None
        return B, np.concatenate(out[1]), np.concatenate(out[2])

    # -- cardinal basis --------------------------------------------------

    def _row_block(self, X, k, d, derivatives):
        cand, valid = self._candidates(k, d)
        B, dB, HB = self._subset_weights(X, k, d, cand, valid, derivatives)
        mag = B if not derivatives else np.maximum(
            B, np.maximum(np.abs(dB).max(-1), np.abs(HB).max(-1)))
        pp, cc = np.nonzero(mag > PRUNE_TOL)
        jj = cand[pp, cc]
        cov = self.covering
        res = batch_eval(self.coeffs[jj], cov.centers[jj], cov.scales[jj], X[pp],
                         cov.p, derivatives)
        b = B[pp, cc][:, None]
        if derivatives:
            lam, dlam, hlam = res
            db, hb = dB[pp, cc], HB[pp, cc]
            data = np.stack([
                b * lam,
                db[:, :1] * lam + b * dlam[:, 0],
                db[:, 1:] * lam + b * dlam[:, 1],
                hb[:, :1] * lam + 2 * db[:, :1] * dlam[:, 0] + b * hlam[:, 0],
                hb[:, 1:2] * lam + db[:, :1] * dlam[:, 1] + db[:, 1:] * dlam[:, 0]
                + b * hlam[:, 1],
                hb[:, 2:] * lam + 2 * db[:, 1:] * dlam[:, 1] + b * hlam[:, 2],
            ], axis=-1)                                        # (K, tau, 6)
        else:
            data = (b * res)[..., None]
        cols = self.subsets[jj]
        rows = np.broadcast_to(pp[:, None], cols.shape)
        return rows.ravel(), cols.ravel(), data.reshape(-1, data.shape[-1])

    def sparse_rows(self, X, derivatives: bool = True):
        """Cardinal functions at points X as CSR-like (indptr, indices, data).

        ``data`` has one column (values) or six (value, d/dx, d/dy, d2/dx2,
        d2/dxdy, d2/dy2).  Entries whose components all fall below 1e-14 are
        dropped.
        """
        X, k, d = self._snap(X)
        P = len(X)
        rows, cols, data = [], [], []
        # node points and general points take different candidate sets
        at_node = d == 0.0
        order = np.concatenate([np.nonzero(at_node)[0], np.nonzero(~at_node)[0]])
        n_node = int(at_node.sum())
        width = max((len(r) for r in self.covering.reverse), default=1)
        slices = [sl for sl in self._chunks(n_node, width)]
        slices += [slice(n_node + s.start, n_node + s.stop)
                   for s in self._chunks(P - n_node, self.covering.m)]
        for sl in slices:
            sel = order[sl]
            r, c, v = self._row_block(X[sel], k[sel], d[sel], derivatives)
            rows.append(sel[r])
            cols.append(c)
            data.append(v)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        key = rows.astype(np.int64) * self.n + cols
        order = np.argsort(key, kind="stable")
        key, data = key[order], data[order]
        uniq, start = np.unique(key, return_index=True)
        summed = np.add.reduceat(data, start, axis=0)
        keep = np.abs(summed).max(axis=1) >= DROP_TOL
        uniq, summed = uniq[keep], summed[keep]
        r, c = np.divmod(uniq, self.n)
        indptr = np.searchsorted(r, np.arange(P + 1))
        return indptr, c.astype(int), summed

    def eval_W_row(self, x) -> ShepardRow:
        indptr, idx, data = self.sparse_rows(np.reshape(x, (1, 2)))
        return ShepardRow(np.asarray(x, dtype=float), idx, data[:, 0],
                          data[:, 1:3], data[:, 3:])

    def matrices(self, X) -> list[sparse.csr_matrix]:
        """Six sparse (P, n) matrices: W, W_x, W_y, W_xx, W_xy, W_yy at X."""
        indptr, idx, data = self.sparse_rows(X)
        shape = (len(indptr) - 1, self.n)
        return [sparse.csr_matrix((data[:, c], idx, indptr), shape=shape) for c in range(6)]

    def eval_matrix(self, X) -> sparse.csr_matrix:
        """Sparse (P, n) matrix of cardinal function values at X."""
        indptr, idx, data = self.sparse_rows(X, derivatives=False)
        return sparse.csr_matrix((data[:, 0], idx, indptr), shape=(len(indptr) - 1, self.n))

    def interpolate(self, values, X) -> np.ndarray:
        """Multinode Shepard interpolant of nodal `values` at points X."""
        return self.eval_matrix(X) @ np.asarray(values, dtype=float)


def eval_B(nodes, covering, params, x):
    return MultinodeShepard(nodes, covering, params).eval_B(x)


def eval_W_row(nodes, covering, params, x) -> ShepardRow:
    return MultinodeShepard(nodes, covering, params).eval_W_row(x)


def ms_interpolate(basis: MultinodeShepard, values, x) -> float | np.ndarray:
    X = np.asarray(x, dtype=float)
    out = basis.interpolate(values, X.reshape(-1, 2))
    return float(out[0]) if X.ndim == 1 else out
