"""Adaptive quadtree over 2-D point sets.

The tree stores its cells in flat numpy arrays (breadth-first order, so a
parent always precedes its children and the children of one parent are
contiguous).  Points are kept in a permuted copy such that every cell owns a
contiguous slice ``[start, end)`` of the point array; ``perm`` maps tree
order back to the caller's original ordering.

Cells carry a tight geometry: the expansion center is the centroid of the
contained points and the radius is the largest distance from that centroid
to any contained point.  Splitting happens at the geometric center of the
cell's bounding square (the root square is the tight bounding box expanded
to a square), and empty quadrants produce no child.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Cell", "QuadTree", "build_quadtree"]

# Bail out of splitting once a cell's bounding square is this small; protects
# against duplicate points, which could otherwise recurse forever.
_MIN_HALF_WIDTH = 1e-300
_MAX_DEPTH = 96


@dataclass(frozen=True)
class Cell:
    """Read-only view of a single tree cell."""

    index: int
    level: int
    center: complex
    radius: float
    start: int
    end: int
    children: tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return len(self.children) == 0

    @property
    def count(self) -> int:
        return self.end - self.start


class QuadTree:
    """Flat-array quadtree; build with :func:`build_quadtree`.

    Attributes
    ----------
    z : complex ndarray, shape (n,)
        Points in tree order, encoded as x + iy.
    perm : int ndarray, shape (n,)
        ``perm[i]`` is the original index of tree-order point ``i``.
    center, radius : ndarray, shape (ncells,)
        Centroid (complex) and tight radius of each cell.
    start, end : int ndarray
        Point slice owned by each cell.
    child0, nchild : int ndarray
        First child index and child count (0 for leaves).
    parent, level : int ndarray
        Parent index (-1 for the root) and depth.
    point_leaf : int ndarray, shape (n,)
        Leaf cell owning each tree-order point.
    """

    def __init__(self, z, perm, center, radius, start, end,
                 child0, nchild, parent, level, point_leaf):
        self.z = z
        self.perm = perm
        self.center = center
        self.radius = radius
        self.start = start
        self.end = end
        self.child0 = child0
        self.nchild = nchild
        self.parent = parent
        self.level = level
        self.point_leaf = point_leaf

    @property
    def ncells(self) -> int:
        return self.center.size

    @property
    def npoints(self) -> int:
        return self.z.size

    @property
    def root(self) -> int:
        return 0

    @property
    def depth(self) -> int:
        return int(self.level.max())

    def is_leaf(self, i) -> bool:
        return self.nchild[i] == 0

    def children_of(self, i):
        c0 = self.child0[i]
        return range(c0, c0 + self.nchild[i])

    def leaves(self):
        """Indices of all leaf cells."""
        return np.flatnonzero(self.nchild == 0)

    def cell(self, i: int) -> Cell:
        return Cell(
            index=i,
            level=int(self.level[i]),
            center=complex(self.center[i]),
            radius=float(self.radius[i]),
            start=int(self.start[i]),
            end=int(self.end[i]),
            children=tuple(int(c) for c in self.children_of(i)),
        )

    def cells(self):
        for i in range(self.ncells):
            yield self.cell(i)


def build_quadtree(points, ncrit: int = 64) -> QuadTree:
    """Build an adaptive quadtree over ``points``.

    Parameters
    ----------
    points : array_like, shape (n, 2)
        Point coordinates.
    ncrit : int
        Maximum number of points in a leaf; cells holding more are split
        recursively at the geometric center of their bounding square.

    Returns
    -------
    QuadTree

    Raises
    ------
    ValueError
        If the point set is empty or ``ncrit < 1``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("empty point set")
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if ncrit < 1:
        raise ValueError("ncrit must be >= 1")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")

    n = pts.shape[0]
    x = pts[:, 0].copy()
    y = pts[:, 1].copy()
    perm = np.arange(n, dtype=np.int64)

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    root_cx, root_cy = (lo + hi) / 2.0
    root_half = max((hi - lo).max() / 2.0, _MIN_HALF_WIDTH)

    starts = [0]
    ends = [n]
    child0 = [0]
    nchild = [0]
    parents = [-1]
    levels = [0]
    point_leaf = np.zeros(n, dtype=np.int64)

    # Breadth-first frontier of cells pending a split decision, carrying the
    # bounding-square geometry that only matters during construction.
    frontier = [(0, 0, n, root_cx, root_cy, root_half)]
    while frontier:
        next_frontier = []
        for ci, s, e, cx, cy, half in frontier:
            count = e - s
            if count <= ncrit or half <= _MIN_HALF_WIDTH or levels[ci] >= _MAX_DEPTH:
                point_leaf[s:e] = ci
                continue
            xs = x[s:e]
            ys = y[s:e]
            code = (xs >= cx).astype(np.int8) + 2 * (ys >= cy).astype(np.int8)
            if code.min() == code.max():
                # All points in one quadrant of an already tiny square:
                # duplicates (or near-duplicates); keep as a leaf.
                span = max(xs.ptp(), ys.ptp())
                if span == 0.0:
                    point_leaf[s:e] = ci
                    continue
            order = np.argsort(code, kind="stable")
            x[s:e] = xs[order]
            y[s:e] = ys[order]
            perm[s:e] = perm[s:e][order]
            counts = np.bincount(code, minlength=4)

            qhalf = half / 2.0
            qcenters = (
                (cx - qhalf, cy - qhalf),
                (cx + qhalf, cy - qhalf),
                (cx - qhalf, cy + qhalf),
                (cx + qhalf, cy + qhalf),
            )
            child0[ci] = len(starts)
            offset = s
            for q in range(4):
                if counts[q] == 0:
                    continue
                qcx, qcy = qcenters[q]
                idx = len(starts)
                starts.append(offset)
                ends.append(offset + int(counts[q]))
                child0.append(0)
                nchild.append(0)
                parents.append(ci)
                levels.append(levels[ci] + 1)
                next_frontier.append((idx, offset, offset + int(counts[q]),
                                      qcx, qcy, qhalf))
                offset += int(counts[q])
                nchild[ci] += 1
        frontier = next_frontier

    z = x + 1j * y
    start = np.asarray(starts, dtype=np.int64)
    end = np.asarray(ends, dtype=np.int64)
    level = np.asarray(levels, dtype=np.int64)

    # Tight expansion geometry: centroid and max point distance per cell.
    zsum = np.concatenate(([0.0 + 0.0j], np.cumsum(z)))
    counts_all = end - start
    center = (zsum[end] - zsum[start]) / counts_all

    radius = np.zeros(start.size)
    for lev in range(level.max() + 1):
        sel = np.flatnonzero(level == lev)
        idx = _flat_ranges(start[sel], counts_all[sel])
        if idx.size == 0:
            continue
        d = np.abs(z[idx] - np.repeat(center[sel], counts_all[sel]))
        offsets = np.concatenate(([0], np.cumsum(counts_all[sel])[:-1]))
        radius[sel] = np.maximum.reduceat(d, offsets)

    return QuadTree(
        z=z,
        perm=perm,
        center=center,
        radius=radius,
        start=start,
        end=end,
        child0=np.asarray(child0, dtype=np.int64),
        nchild=np.asarray(nchild, dtype=np.int64),
        parent=np.asarray(parents, dtype=np.int64),
        level=level,
        point_leaf=point_leaf,
    )


def _flat_ranges(starts, counts):
    """Concatenate ``arange(s, s + c)`` for each (s, c) pair, vectorized."""
    starts = np.asarray(starts, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    keep = counts > 0
    starts = starts[keep]
    counts = counts[keep]
    if starts.size == 0:
        return np.empty(0, dtype=np.int64)
    total = int(counts.sum())
    step = np.ones(total, dtype=np.int64)
    step[0] = starts[0]
    pos = np.cumsum(counts)[:-1]
    step[pos] = starts[1:] - (starts[:-1] + counts[:-1]) + 1
    return np.cumsum(step)
