"""Coverings of a node set by unisolvent subsets.

Each node anchors one subset made of itself plus the Leja points selected
among its nearest neighbours, so the subsets cover every node.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import IO

import numpy as np
from scipy.spatial import cKDTree

from .localpoly import monomials, tau as tau_of

log = logging.getLogger(__name__)

PIVOT_RTOL = 1e-10
COND_LIMIT = 1e8
Q_STEP = 10
Q_MAX = 50


class InsufficientNodesError(ValueError):
    pass


class DegenerateNeighborhoodError(ValueError):
    def __init__(self, anchor: int, detail: str = ""):
        self.anchor = anchor
        msg = f"degenerate neighborhood at node {anchor}"
        super().__init__(msg + (f": {detail}" if detail else ""))


def _coords(nodes) -> np.ndarray:
    pts = getattr(nodes, "points", nodes)
    return np.asarray(pts, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class Covering:
    """Subsets ``t_j`` (rows of `subsets`) and their shifted/scaled frames.

    ``subsets[j, 0]`` is the anchor of subset j.  ``reverse[i]`` lists the
    subsets containing node i.
    """

    subsets: np.ndarray
    centers: np.ndarray
    scales: np.ndarray
    reverse: tuple
    p: int
    q_used: np.ndarray

    @property
    def tau(self) -> int:
        return self.subsets.shape[1]

    @property
    def m(self) -> int:
        return self.subsets.shape[0]

    def write(self, fh: IO[str]) -> None:
        for j, row in enumerate(self.subsets):
            fh.write(f"{j} : " + " ".join(str(int(i)) for i in row) + "\n")


def _ordered(idx: np.ndarray, dist: np.ndarray, k: int):
    order = np.lexsort((idx, dist))
    return idx[order][:k], dist[order][:k]


def nearest_neighbors(nodes, anchor_index: int, k: int, tree: cKDTree | None = None) -> np.ndarray:
    """The k nodes closest to the anchor (itself included), nearest first.

    Ties in distance go to the smaller index.
    """
    pts = _coords(nodes)
    n = len(pts)
    if k > n:
        raise InsufficientNodesError(f"insufficient nodes: need {k}, have {n}")
    tree = tree or cKDTree(pts)
    extra = 8
    while True:
        kq = min(n, k + extra)
        _, idx = tree.query(pts[anchor_index], k=kq)
        idx = np.atleast_1d(idx)
        dist = np.hypot(*(pts[idx] - pts[anchor_index]).T)
        # candidates tied with the k-th must all be present before ordering
        if kq == n or dist.max() > np.sort(dist)[k - 1]:
            return _ordered(idx, dist, k)[0]
        extra *= 2


def leja_select(nodes, candidates, anchor_index: int, p: int = 2,
                pivot_rtol: float = PIVOT_RTOL):
    """Greedy Leja selection of tau(p) candidates, the anchor forced first.

    Runs row-pivoted Gaussian elimination on the candidate Vandermonde (in
    monomials centred at the anchor, scaled by the candidate radius): at
    each column the remaining row with the largest pivot is taken.

    Returns the selected indices (anchor first) and the (center, scale) of
    the basis frame.
    """
    pts = _coords(nodes)
    cand = np.asarray(candidates, dtype=int)
    t = tau_of(p)
    if anchor_index not in cand:
        raise ValueError("candidates must contain the anchor")
    if len(cand) < t:
        raise InsufficientNodesError(f"insufficient nodes: need {t}, have {len(cand)}")
    # put the anchor in row 0
    cand = np.concatenate([[anchor_index], cand[cand != anchor_index]])
    center = pts[anchor_index]
    scale = float(np.max(np.hypot(*(pts[cand] - center).T)))
    if scale == 0.0:
        raise DegenerateNeighborhoodError(anchor_index, "coincident candidates")
    U = monomials((pts[cand] - center) / scale, p).copy()
    rows = np.arange(len(cand))
    first = None
    for col in range(t):
        if col == 0:
            piv = 0
        else:
            piv = col + int(np.argmax(np.abs(U[col:, col])))
        U[[col, piv]] = U[[piv, col]]
        rows[[col, piv]] = rows[[piv, col]]
        pivot = U[col, col]
        if first is None:
            first = abs(pivot)
        if abs(pivot) < pivot_rtol * first:
            raise DegenerateNeighborhoodError(
                anchor_index, f"pivot {abs(pivot):.3e} in column {col}")
        U[col + 1:, col:] -= np.outer(U[col + 1:, col] / pivot, U[col, col:])
    return cand[rows[:t]], center, scale


def subset_condition(nodes, subset, center, scale: float, p: int) -> float:
    V = monomials((_coords(nodes)[np.asarray(subset)] - center) / scale, p)
    return float(np.linalg.cond(V))


def build_covering(nodes, p: int = 2, q: int = 10, q_step: int = Q_STEP,
                   q_max: int = Q_MAX, cond_limit: float = COND_LIMIT) -> Covering:
    """One Leja subset per node from its ``tau + q`` nearest neighbours.

    A neighbourhood whose selection is degenerate, or whose Vandermonde is
    worse conditioned than `cond_limit`, is retried with ``q + q_step``
    candidates while ``q <= q_max``.
    """
    pts = _coords(nodes)
    n = len(pts)
    t = tau_of(p)
    if n < t + q:
        raise InsufficientNodesError(f"insufficient nodes: need {t + q}, have {n}")
    tree = cKDTree(pts)
    subsets = np.empty((n, t), dtype=int)
    centers = np.empty((n, 2))
    scales = np.empty(n)
    q_used = np.empty(n, dtype=int)
    for i in range(n):
        qi = q
        while True:
            err = None
            try:
                cand = nearest_neighbors(pts, i, min(n, t + qi), tree)
                sel, c, s = leja_select(pts, cand, i, p)
                cond = subset_condition(pts, sel, c, s, p)
                if cond > cond_limit:
                    err = DegenerateNeighborhoodError(i, f"condition {cond:.3e}")
            except DegenerateNeighborhoodError as exc:
                err = exc
            if err is None:
                break
            if qi + q_step > q_max or t + qi >= n:
                raise err
            qi += q_step
            log.debug("node %d: retrying covering with q=%d", i, qi)
        subsets[i], centers[i], scales[i], q_used[i] = sel, c, s, qi
    reverse = [[] for _ in range(n)]
    for j, row in enumerate(subsets):
        for i in row:
            reverse[i].append(j)
    reverse = tuple(np.array(r, dtype=int) for r in reverse)
    return Covering(subsets, centers, scales, reverse, p, q_used)
