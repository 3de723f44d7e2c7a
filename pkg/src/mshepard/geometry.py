"""Node distributions on the pricing triangle with vertices (0,0), (8,0), (0,8).

Every generator returns a :class:`NodeSet` laid out in the order used by the
collocation matrices: interior nodes first, then the origin, then the nodes
on the far-field line ``x + y = 8``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
from numpy.polynomial import legendre
from scipy.spatial import cKDTree
from scipy.stats import qmc

SIDE = 8.0
FARFIELD_TOL = 1e-12
MERGE_TOL = 1e-9

ROLE_INTERIOR = "interior"
ROLE_ORIGIN = "origin"
ROLE_FARFIELD = "farfield"


class NodeSetError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSet:
    """Partitioned collocation nodes.

    Attributes
    ----------
    interior : ndarray, shape (n_I, 2)
        Nodes with ``x + y < 8`` other than the origin (indices ``0..n_I-1``).
    farfield : ndarray, shape (n_F, 2)
        Nodes on ``x + y = 8`` (indices ``n_I+1..n-1``).
    meta : dict
        Free-form generator metadata (e.g. whether a fallback was used).
    """

    interior: np.ndarray
    farfield: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        interior = np.ascontiguousarray(self.interior, dtype=float).reshape(-1, 2)
        farfield = np.ascontiguousarray(self.farfield, dtype=float).reshape(-1, 2)
        interior.setflags(write=False)
        farfield.setflags(write=False)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "farfield", farfield)

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(2)

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_farfield(self) -> int:
        return len(self.farfield)

    @property
    def n(self) -> int:
        return self.n_interior + 1 + self.n_farfield

    @property
    def origin_index(self) -> int:
        return self.n_interior

    @property
    def farfield_slice(self) -> slice:
        return slice(self.n_interior + 1, self.n)

    @property
    def points(self) -> np.ndarray:
        """All nodes, shape ``(n, 2)``, in collocation order."""
        pts = np.vstack([self.interior, np.zeros((1, 2)), self.farfield])
        pts.setflags(write=False)
        return pts

    @property
    def roles(self) -> list[str]:
        return ([ROLE_INTERIOR] * self.n_interior + [ROLE_ORIGIN]
                + [ROLE_FARFIELD] * self.n_farfield)

    def min_separation(self) -> float:
        pts = self.points
        if len(pts) < 2:
            return np.inf
        d, _ = cKDTree(pts).query(pts, k=2)
        return float(d[:, 1].min())

    def validate(self) -> "NodeSet":
        """Check the layout invariants, raising :class:`NodeSetError`."""
        s_int = self.interior.sum(axis=1)
        if np.any(~np.isfinite(self.interior)) or np.any(~np.isfinite(self.farfield)):
            raise NodeSetError("non-finite node coordinates")
        if np.any(self.interior < 0) or np.any(s_int >= SIDE):
            raise NodeSetError("interior node outside the open triangle")
        if np.any(np.all(self.interior == 0.0, axis=1)):
            raise NodeSetError("origin listed among interior nodes")
        if np.any(self.farfield < 0) or np.any(
                np.abs(self.farfield.sum(axis=1) - SIDE) > FARFIELD_TOL):
            raise NodeSetError("far-field node off the line x+y=8")
        if self.min_separation() <= 0.0:
            raise NodeSetError("coincident nodes")
        return self


def halton_unit_square(count: int) -> np.ndarray:
    """First `count` Halton points (bases 2 and 3), starting at index 1."""
    if count < 1:
        raise ValueError("count must be positive")
    sampler = qmc.Halton(d=2, scramble=False)
    sampler.fast_forward(1)  # index 0 is the corner (0, 0)
    return sampler.random(count)


def _equispaced_segment(a, b, count: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, count)[:, None]
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a + t * (b - a)


def farfield_line(count: int) -> np.ndarray:
    """`count` equispaced nodes on x+y=8 from (0,8) to (8,0), endpoints included."""
    x = np.linspace(0.0, SIDE, count)
    return np.column_stack([x, SIDE - x])


def dedupe(points: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    """Drop points closer than `tol` to an earlier point (first occurrence wins)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) < 2:
        return points.copy()
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return points.copy()
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    removed = np.zeros(len(points), dtype=bool)
    for i, j in pairs:
        if not removed[i]:
            removed[j] = True
    return points[~removed]


def partition_points(points: Iterable, meta: dict | None = None,
                     tol: float = MERGE_TOL) -> NodeSet:
    """Sort raw points of the closed triangle into interior/origin/far-field.

    The origin is always present in the result, whether or not it was given.
    Points outside the closed triangle are discarded.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = dedupe(np.vstack([np.zeros((1, 2)), pts]), tol)[1:]
    s = pts.sum(axis=1)
    inside = np.all(pts >= 0.0, axis=1) & (s <= SIDE + FARFIELD_TOL)
    pts, s = pts[inside], s[inside]
    on_far = np.abs(s - SIDE) <= FARFIELD_TOL
    interior = pts[~on_far]
    farfield = pts[on_far]
    return NodeSet(interior, farfield, dict(meta or {})).validate()


def halton_nodeset(total: int, boundary_count: int, gap: float = 0.0) -> NodeSet:
    """Halton nodes mapped to (0,8)^2 and clipped to the open triangle.

    With ``gap > 0`` interior nodes with ``x + y > 8 - gap`` are dropped:
    nodes crowding the far-field line give the collocation matrix
    eigenvalues with large positive real part.
    """
    if gap < 0:
        raise ValueError("gap must be nonnegative")
    pts = SIDE * halton_unit_square(total)
    s = pts.sum(axis=1)
    interior = pts[(s < SIDE) & (s <= SIDE - gap)]
    nodes = NodeSet(dedupe(interior), farfield_line(boundary_count),
                    {"generator": "halton", "total": total, "gap": gap})
    return nodes.validate()


def _simplex_lattice(degree: int) -> np.ndarray:
    """Integer lattice (i, j), i + j <= degree, in row-major order."""
    ij = [(i, j) for j in range(degree + 1) for i in range(degree + 1 - j)]
    return np.array(ij, dtype=float)


def uniform_simplex_nodes(degree: int) -> np.ndarray:
    """Uniform degree-`degree` distribution on the pricing triangle."""
    if degree < 1:
        raise ValueError("degree must be positive")
    return SIDE * _simplex_lattice(degree) / degree


def lobatto_simplex_nodes(degree: int) -> np.ndarray:
    """Symmetric Lobatto-type nodes on the unit simplex.

    Built from the 1D Gauss-Lobatto-Legendre points ``v`` on [0, 1] by the
    symmetric averaging rule ``x = (1 + 2 v_i - v_j - v_k) / 3``; edge nodes
    coincide with the 1D points, so neighbouring cells share their edges.
    """
    if degree == 1:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    inner = legendre.Legendre.basis(degree).deriv().roots()
    v = np.concatenate([[0.0], np.sort((inner.real + 1.0) / 2.0), [1.0]])
    out = []
    for j in range(degree + 1):
        for i in range(degree + 1 - j):
            k = degree - i - j
            out.append(((1 + 2 * v[i] - v[j] - v[k]) / 3,
                        (1 + 2 * v[j] - v[i] - v[k]) / 3))
    return np.array(out)


def _unit_cell_nodes(degree: int, family: str) -> np.ndarray:
    if family == "uniform":
        return _simplex_lattice(degree) / degree
    if family == "lobatto":
        return lobatto_simplex_nodes(degree)
    raise ValueError(f"unknown cell family {family!r}")


def net_triangles(net_degree: int) -> np.ndarray:
    """Vertices of the net_degree**2 congruent subtriangles, shape (T, 3, 2)."""
    h = SIDE / net_degree
    tris = []
    for j in range(net_degree):
        for i in range(net_degree - j):
            tris.append([(i, j), (i + 1, j), (i, j + 1)])
            if i + j <= net_degree - 2:
                tris.append([(i + 1, j + 1), (i, j + 1), (i + 1, j)])
    return h * np.array(tris, dtype=float)


def waldron_composite_nodes(net_degree: int, cell_degree: int,
                            cell_family: str = "uniform") -> np.ndarray:
    """Composite distribution: one cell_degree distribution per net subtriangle.

    The cell distribution is the affine image of a distribution on the unit
    simplex.  Waldron's construction is not available here; ``"uniform"``
    (the documented fallback) and ``"lobatto"`` are provided instead.
    """
    if net_degree < 1 or cell_degree < 1:
        raise ValueError("degrees must be positive")
    ref = _unit_cell_nodes(cell_degree, cell_family)
    pts = []
    for v0, v1, v2 in net_triangles(net_degree):
        pts.append(v0 + ref[:, :1] * (v1 - v0) + ref[:, 1:] * (v2 - v0))
    pts = np.vstack(pts)
    # affine images carry rounding noise; snap the triangle edges exactly
    pts[np.abs(pts) < 1e-9] = 0.0
    s = pts.sum(axis=1)
    near = np.abs(s - SIDE) < 1e-9
    pts[near, 1] = SIDE - pts[near, 0]
    return dedupe(pts)


def waldron_nodeset(net_degree: int = 7, cell_degree: int = 10,
                    cell_family: str = "uniform") -> NodeSet:
    pts = waldron_composite_nodes(net_degree, cell_degree, cell_family)
    return partition_points(pts, {
        "generator": "waldron", "net_degree": net_degree,
        "cell_degree": cell_degree, "cell_family": cell_family,
        "waldron_fallback": True,
    })


def uniform_nodeset(degree: int) -> NodeSet:
    return partition_points(uniform_simplex_nodes(degree),
                            {"generator": "uniform", "degree": degree})


KINK_LEVELS = (1.5, 1.8, 2.0, 2.1, 2.3, 2.5, 2.7)
OUTER_LEVELS = (7.1, 7.5)


def diagonal_line(level: float, count: int) -> np.ndarray:
    """`count` equispaced nodes on x+y=level clipped to the triangle."""
    return _equispaced_segment((level, 0.0), (0.0, level), count)


def enrich_with_lines(base: NodeSet, per_line: int = 52, axis_extent: float = 2.5,
                      kink_levels: Iterable[float] = KINK_LEVELS,
                      outer_levels: Iterable[float] = OUTER_LEVELS,
                      gap: float = 0.4, tol: float = 1e-10) -> NodeSet:
    """Refine near the axes and the payoff kink, and open a gap below x+y=8.

    Adds `per_line` equispaced nodes on each of: the axis segments from the
    origin to `axis_extent`; each line ``x + y = a`` for ``a`` in
    `kink_levels` and `outer_levels`.  Base interior nodes with
    ``x + y > 8 - gap`` are removed.
    """
    keep = base.interior[base.interior.sum(axis=1) <= SIDE - gap]
    added = [
        _equispaced_segment((0.0, 0.0), (axis_extent, 0.0), per_line),
        _equispaced_segment((0.0, 0.0), (0.0, axis_extent), per_line),
    ]
    added += [diagonal_line(a, per_line) for a in kink_levels]
    added += [diagonal_line(a, per_line) for a in outer_levels]
    fixed = np.vstack([np.zeros((1, 2)), base.farfield])
    merged = dedupe(np.vstack([fixed, keep, *added]), max(tol, MERGE_TOL))
    interior = merged[len(fixed):]
    interior = interior[interior.sum(axis=1) <= SIDE - gap]
    meta = dict(base.meta)
    meta.update(enriched=True, per_line=per_line, gap=gap)
    return NodeSet(interior, base.farfield, meta).validate()


def write_nodeset(nodes: NodeSet, fh: IO[str]) -> None:
    """Write one ``x y role`` line per node with 17 significant digits."""
    for (x, y), role in zip(nodes.points, nodes.roles):
        fh.write(f"{x:.17g} {y:.17g} {role}\n")


def read_nodeset(fh: IO[str]) -> NodeSet:
    interior, farfield = [], []
    for line in fh:
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        xy = (float(parts[0]), float(parts[1]))
        if parts[2] == ROLE_INTERIOR:
            interior.append(xy)
        elif parts[2] == ROLE_FARFIELD:
            farfield.append(xy)
    return NodeSet(np.array(interior), np.array(farfield)).validate()
