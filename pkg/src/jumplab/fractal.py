"""Discrete metric measure spaces: gasket graphs and the integer line.

The level-n gasket graph lives on the triangular lattice with unit edges.
Vertices are stored in integer lattice coordinates (p, q) mapped to the
plane by ``x = p + q/2, y = q*sqrt(3)/2``; the construction doubles the
triangle footprint per level via

    level n+1  =  level n  +  (2**n, 0)-shift  +  (0, 2**n)-shift,

giving ``(3**(n+1) + 3)/2`` vertices and ``3**(n+1)`` unit edges.  Metric is
the hop metric (unit edge length); mass is one per vertex; balls are open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ResourceError

MAX_GASKET_LEVEL = 13


@dataclass
class MetricMeasureGraph:
    """Finite connected graph with hop metric and per-vertex mass."""

    name: str
    coords: np.ndarray  # [V, 2] float planar coordinates
    indptr: np.ndarray  # CSR adjacency
    indices: np.ndarray
    mass: np.ndarray  # [V] positive weights
    boundary: np.ndarray  # vertex ids whose neighborhoods are truncated
    level: int | None = None
    half_length: int | None = None
    pq: np.ndarray | None = None  # integer lattice coords for gasket graphs
    _dist_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return int(self.indptr.size - 1)

    @property
    def n_edges(self) -> int:
        return int(self.indices.size // 2)

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def distances_from(self, source: int) -> np.ndarray:
        """Single-source hop distances by frontier BFS (memoized)."""
        cached = self._dist_cache.get(source)
        if cached is not None:
            return cached
        n = self.n_vertices
        dist = np.full(n, -1, dtype=np.int32)
        dist[source] = 0
        frontier = np.array([source], dtype=np.int64)
        d = 0
        while frontier.size:
            d += 1
            counts = self.indptr[frontier + 1] - self.indptr[frontier]
            total = int(counts.sum())
            offsets = np.repeat(self.indptr[frontier], counts)
            within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            cand = np.unique(self.indices[offsets + within])
            cand = cand[dist[cand] < 0]
            dist[cand] = d
            frontier = cand
        if np.any(dist < 0):
            raise DomainError("graph is not connected")
        self._dist_cache[source] = dist
        return dist

    def distance(self, x: int, y: int) -> int:
        return int(self.distances_from(x)[y])

    def ball_volume(self, x: int, r: float) -> float:
        """Mass of the open ball ``{y : d(x, y) < r}``."""
        if r <= 0:
            raise DomainError("ball volume requires r > 0")
        dist = self.distances_from(x)
        return float(self.mass[dist < r].sum())

    def shortest_path(self, x: int, y: int) -> list[int]:
        """One geodesic from x to y (backtracking through BFS levels)."""
        dist = self.distances_from(x)
        if dist[y] < 0:
            raise DomainError("vertices not connected")
        path = [y]
        v = y
        while v != x:
            nbrs = self.neighbors(v)
            v = int(nbrs[np.argmin(dist[nbrs])])
            path.append(v)
        path.reverse()
        return path

    def vertex_at(self, pq_or_coord) -> int:
        """Vertex id at integer lattice coordinates (gasket) or position (line)."""
        if self.pq is not None:
            key = _pack(np.asarray([pq_or_coord], dtype=np.int64))
            order = self._pq_order
            j = np.searchsorted(self._pq_sorted, key[0])
            if j >= self._pq_sorted.size or self._pq_sorted[j] != key[0]:
                raise DomainError(f"no vertex at lattice coordinates {pq_or_coord}")
            return int(order[j])
        pos = int(pq_or_coord)
        if self.half_length is None or abs(pos) > self.half_length:
            raise DomainError(f"no vertex at position {pq_or_coord}")
        return pos + self.half_length

    def export_tables(self):
        """Vertex and edge tables for external plotting."""
        verts = [(i, float(self.coords[i, 0]), float(self.coords[i, 1]), float(self.mass[i])) for i in range(self.n_vertices)]
        edges = []
        for v in range(self.n_vertices):
            for w in self.neighbors(v):
                if v < w:
                    edges.append((v, int(w)))
        return verts, edges


def _pack(pq: np.ndarray) -> np.ndarray:
    # bijective packing of small non-negative lattice coords into int64
    return pq[:, 0].astype(np.int64) * (1 << 32) + pq[:, 1].astype(np.int64)


def build_gasket(level: int) -> MetricMeasureGraph:
    """Level-n gasket graph on the unit-edge triangular lattice.

    The construction tracks the anchors of the 3**n upward unit triangles
    (the same doubling recursion as the vertex set); edges are exactly the
    triangle sides, which excludes the unit-distance vertex pairs that face
    each other across a hole.  The three extreme corners are marked as
    boundary: they are the only vertices whose neighborhoods differ from the
    unbounded fractal's.
    """
    if level < 0:
        raise DomainError("level must be >= 0")
    if level > MAX_GASKET_LEVEL:
        raise ResourceError(f"gasket level {level} exceeds the configured maximum {MAX_GASKET_LEVEL}")
    anchors = np.array([(0, 0)], dtype=np.int64)
    for n in range(level):
        shift = 1 << n
        anchors = np.concatenate([anchors, anchors + (shift, 0), anchors + (0, shift)])
    corners = np.concatenate([anchors, anchors + (1, 0), anchors + (0, 1)])
    keys_sorted, first = np.unique(_pack(corners), return_index=True)
    pts = corners[first]
    order = np.arange(pts.shape[0])  # pts already sorted by packed key

    def vid(pq):
        j = np.searchsorted(keys_sorted, _pack(pq))
        return j

    a0 = vid(anchors)
    a1 = vid(anchors + (1, 0))
    a2 = vid(anchors + (0, 1))
    rows = np.concatenate([a0, a1, a0, a2, a1, a2])
    cols = np.concatenate([a1, a0, a2, a0, a2, a1])
    orderr = np.lexsort((cols, rows))
    rows, cols = rows[orderr], cols[orderr]
    counts = np.bincount(rows, minlength=pts.shape[0])
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = cols.astype(np.int64)

    coords = np.empty((pts.shape[0], 2), dtype=np.float64)
    coords[:, 0] = pts[:, 0] + pts[:, 1] * 0.5
    coords[:, 1] = pts[:, 1] * (math.sqrt(3.0) / 2.0)

    side = 1 << level
    corner_pq = np.array([(0, 0), (side, 0), (0, side)], dtype=np.int64)
    corner_keys = _pack(corner_pq)
    boundary = order[np.searchsorted(keys_sorted, corner_keys)]

    g = MetricMeasureGraph(
        name=f"gasket-{level}",
        coords=coords,
        indptr=indptr,
        indices=indices,
        mass=np.ones(pts.shape[0]),
        boundary=np.asarray(boundary, dtype=np.int64),
        level=level,
        pq=pts,
    )
    g._pq_sorted = keys_sorted
    g._pq_order = order
    expected = (3 ** (level + 1) + 3) // 2
    if g.n_vertices != expected:
        raise ResourceError(f"gasket construction produced {g.n_vertices} vertices, expected {expected}")
    return g


def build_line(half_length: int) -> MetricMeasureGraph:
    """Path graph on ``{-L, ..., L}`` with unit masses and hop metric."""
    if half_length < 1:
        raise DomainError("half_length must be >= 1")
    n = 2 * half_length + 1
    indptr = np.empty(n + 1, dtype=np.int64)
    indices = np.empty(2 * (n - 1), dtype=np.int64)
    pos = 0
    for v in range(n):
        indptr[v] = pos
        if v > 0:
            indices[pos] = v - 1
            pos += 1
        if v < n - 1:
            indices[pos] = v + 1
            pos += 1
    indptr[n] = pos
    coords = np.stack([np.arange(n, dtype=np.float64) - half_length, np.zeros(n)], axis=1)
    return MetricMeasureGraph(
        name=f"line-{half_length}",
        coords=coords,
        indptr=indptr,
        indices=indices,
        mass=np.ones(n),
        boundary=np.array([0, n - 1], dtype=np.int64),
        half_length=half_length,
    )


def ball_volume(g: MetricMeasureGraph, x: int, r: float) -> float:
    return g.ball_volume(x, r)


@dataclass(frozen=True)
class VolumeFitReport:
    d_fit: float
    residual: float
    doubling_min: float
    doubling_max: float
    radii: tuple
    n_centers: int


def interior_vertices(g: MetricMeasureGraph, clearance: float) -> np.ndarray:
    """Vertices farther than ``clearance`` from every boundary vertex."""
    ok = np.ones(g.n_vertices, dtype=bool)
    for b in g.boundary:
        ok &= g.distances_from(int(b)) > clearance
    return np.flatnonzero(ok)


def fit_volume_exponent(g: MetricMeasureGraph, radii, centers) -> VolumeFitReport:
    """Least-squares slope of log V against log r, averaged over centers.

    Also reports the spread of the empirical doubling ratios V(x,2r)/V(x,r),
    the desk-scale stand-ins for the doubling and reverse-doubling constants.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3:
        raise DomainError("need at least three radii for a slope fit")
    logV = np.zeros(radii.size)
    doubles = []
    for x in centers:
        vols = np.array([g.ball_volume(int(x), r) for r in radii])
        logV += np.log(vols)
        v2 = np.array([g.ball_volume(int(x), 2 * r) for r in radii])
        doubles.append(v2 / vols)
    logV /= len(list(centers))
    slope, intercept = np.polyfit(np.log(radii), logV, 1)
    resid = float(np.sqrt(np.mean((logV - (slope * np.log(radii) + intercept)) ** 2)))
    doubles = np.concatenate(doubles)
    return VolumeFitReport(
        d_fit=float(slope),
        residual=resid,
        doubling_min=float(doubles.min()),
        doubling_max=float(doubles.max()),
        radii=tuple(float(r) for r in radii),
        n_centers=len(list(centers)),
    )


@dataclass(frozen=True)
class ChainCheckReport:
    worst_ratio: float
    passed: bool
    a_candidate: float
    n_pairs: int


def chain_condition_check(
    g: MetricMeasureGraph,
    a_candidate: float,
    sample_pairs,
    n_values,
) -> ChainCheckReport:
    """Chain condition by geodesic subsampling.

    For each pair (x, y) and chain length n, waypoints are taken along a
    shortest path at equally spaced indices; the reported ratio is
    ``max_k d(z_{k-1}, z_k) * n / d(x, y)``.  Hop rounding grants one hop of
    slack: a pair passes when the ratio is at most
    ``a_candidate + n/d(x,y)``.
    """
    worst = 0.0
    count = 0
    passed = True
    for x, y in sample_pairs:
        if x == y:
            raise DomainError("chain pairs must be distinct")
        path = g.shortest_path(int(x), int(y))
        d = len(path) - 1
        for n in n_values:
            if n < 1:
                raise DomainError("chain length n must be >= 1")
            idx = np.round(np.linspace(0, d, n + 1)).astype(int)
            steps = np.diff(idx)
            ratio = float(steps.max()) * n / d
            worst = max(worst, ratio)
            if ratio > a_candidate + n / d:
                passed = False
            count += 1
    return ChainCheckReport(worst_ratio=worst, passed=passed, a_candidate=a_candidate, n_pairs=count)


def euclidean_comparability(g: MetricMeasureGraph, source: int) -> tuple[float, float]:
    """Range of hop-distance over Euclidean distance from one source."""
    dist = g.distances_from(source).astype(float)
    delta = g.coords - g.coords[source]
    euc = np.hypot(delta[:, 0], delta[:, 1])
    sel = euc > 0
    ratios = dist[sel] / euc[sel]
    return float(ratios.min()), float(ratios.max())
