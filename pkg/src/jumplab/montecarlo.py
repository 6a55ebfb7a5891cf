"""Simulators: random-walk proxy, subordinator, subordinate chain, jump chain.

Time conventions: one walk step is one time unit on the unit-edge graphs.
The subordinate chain evaluates the walk after ``round(S_t)`` steps, where S
is the increasing process with truncated characteristics (drift below the
cut ``eps``, compound-Poisson jumps above it).  Estimators are blocked over
walkers; each block owns a counter-based random stream keyed by
``(seed, block)``, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import spsolve

from .backend import select_backend
from .errors import DomainError, ResourceError, SolveError, TabulationError
from .fractal import MetricMeasureGraph
from .scalefn import ScalingFunction

BLOCK_SIZE = 25_000
CHUNK_ROUNDS = 1024

STATUS_ACTIVE, STATUS_DONE, STATUS_KILLED = 0, 1, 2


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))


# ---------------------------------------------------------------------------
# subordinator


@dataclass(frozen=True)
class SubordinatorSpec:
    """Truncated characteristics of the subordinator driven by (F, psi).

    The jump intensity has density ``u -> 1 / (u * psi(F^{-1}(u)))``.  Jumps
    below ``eps`` are replaced by their mean drift; jumps above it are
    compound Poisson with the tabulated inverse CDF (power-law extrapolation
    past the table's top node).
    """

    F: ScalingFunction
    psi: ScalingFunction
    eps: float
    rate: float  # nu((eps, inf))
    drift: float  # int_0^eps u nu(du)
    log_nodes: np.ndarray  # log-u table nodes, starting at log(eps)
    cdf: np.ndarray  # cumulative jump probability at the nodes
    tail_prob: float  # mass past the top node, sampled by Pareto tail
    tail_index: float

    def levy_density(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for i, ui in np.ndenumerate(u):
            out[i] = 1.0 / (ui * self.psi(self.F.inverse(float(ui))))
        return out if out.ndim else float(out)

    def sample_jumps(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if size == 0:
            return np.empty(0)
        xi = rng.random(size)
        body = xi < (1.0 - self.tail_prob)
        out = np.empty(size)
        if body.any():
            q = xi[body] / (1.0 - self.tail_prob) * self.cdf[-1]
            j = np.searchsorted(self.cdf, q, side="left")
            j = np.clip(j, 1, self.cdf.size - 1)
            c0, c1 = self.cdf[j - 1], self.cdf[j]
            frac = (q - c0) / np.maximum(c1 - c0, 1e-300)
            out[body] = np.exp(self.log_nodes[j - 1] + frac * (self.log_nodes[j] - self.log_nodes[j - 1]))
        if (~body).any():
            u = rng.random(int((~body).sum()))
            out[~body] = math.exp(self.log_nodes[-1]) * u ** (-1.0 / self.tail_index)
        return out

    def truncated_exponent(self, lam: float) -> float:
        """Laplace exponent of the truncated process: ``lam*drift + int_eps
        (1 - e^{-lam u}) nu(du)``."""

        def g(v):
            if v > 690.0:
                return 0.0
            u = math.exp(v)
            return -math.expm1(-lam * u) / self.psi(self.F.inverse(u))

        val, _ = integrate.quad(g, math.log(self.eps), np.inf, limit=400, epsrel=1e-10)
        return lam * self.drift + float(val)


def build_subordinator(
    F: ScalingFunction,
    psi: ScalingFunction,
    t_ref: float,
    scale_proxy: float,
    var_budget: float = 1e-4,
    nodes_per_decade: int = 256,
    span_decades: float = 16.0,
) -> SubordinatorSpec:
    """Chooses the cut and tabulates the jump law.

    ``scale_proxy`` is the typical magnitude of S at the reference time (the
    caller supplies ``F(Phi^{-1}(t_ref))``); the cut is the largest eps whose
    neglected small-jump variance ``t_ref * int_0^eps u^2 nu(du)`` stays
    below ``var_budget * scale_proxy**2``.
    """
    if t_ref <= 0 or scale_proxy <= 0:
        raise DomainError("need positive reference time and scale proxy")

    def w_of_logu(v):
        if v > 690.0 or v < -690.0:
            return 0.0
        u = math.exp(v)
        denom = u * psi(F.inverse(u))
        if denom == 0.0 or not math.isfinite(denom):
            return 0.0
        return 1.0 / denom

    def var_below(eps):
        # integrand u^2 w(u) du = e^{3v} w(e^v) dv; vanishes at the deep end
        val, _ = integrate.quad(
            lambda v: math.exp(3.0 * v) * w_of_logu(v) if v > -200.0 else 0.0,
            -np.inf,
            math.log(eps),
            limit=200,
            epsrel=1e-8,
        )
        return val

    budget = var_budget * scale_proxy**2 / t_ref
    lo, hi = 1e-12 * scale_proxy, scale_proxy
    if var_below(hi) <= budget:
        eps = hi
    else:
        for _ in range(80):
            mid = math.sqrt(lo * hi)
            if var_below(mid) <= budget:
                lo = mid
            else:
                hi = mid
        eps = lo

    drift, _ = integrate.quad(
        lambda v: math.exp(2.0 * v) * w_of_logu(v) if v > -200.0 else 0.0,
        -np.inf,
        math.log(eps),
        limit=200,
        epsrel=1e-8,
    )

    n_nodes = int(span_decades * nodes_per_decade) + 1
    log_nodes = np.linspace(math.log(eps), math.log(eps) + span_decades * math.log(10.0), n_nodes)
    g_vals = np.array([w_of_logu(v) * math.exp(v) for v in log_nodes])
    mids = 0.5 * (log_nodes[:-1] + log_nodes[1:])
    g_mid = np.array([w_of_logu(v) * math.exp(v) for v in mids])
    h = np.diff(log_nodes)
    panel = h / 6.0 * (g_vals[:-1] + 4.0 * g_mid + g_vals[1:])
    cdf = np.concatenate([[0.0], np.cumsum(panel)])

    tail_mass, _ = integrate.quad(
        lambda v: w_of_logu(v) * math.exp(v) if v <= 690.0 else 0.0,
        log_nodes[-1],
        np.inf,
        limit=200,
        epsrel=1e-8,
    )
    # tail index of u*nu(u) from the top decade (exact for power-law tails)
    u1, u2 = math.exp(log_nodes[-1] - math.log(10.0)), math.exp(log_nodes[-1])
    tail_index = math.log((u1 * w_of_logu(math.log(u1))) / (u2 * w_of_logu(math.log(u2)))) / math.log(u2 / u1)
    if tail_index <= 0:
        raise TabulationError("jump density tail is not decaying; cannot extrapolate")

    rate = float(cdf[-1] + tail_mass)
    if rate <= 0:
        raise TabulationError("truncated jump rate vanished; cut too large")
    if panel.max() > 0.02 * rate:
        raise TabulationError("inverse-CDF table under-resolves the jump density")
    tail_prob = tail_mass / rate
    if tail_prob > 0.05:
        raise TabulationError("tabulated span misses too much tail mass; widen span_decades")

    return SubordinatorSpec(
        F=F,
        psi=psi,
        eps=float(eps),
        rate=rate,
        drift=float(drift),
        log_nodes=log_nodes,
        cdf=cdf,
        tail_prob=float(tail_prob),
        tail_index=float(tail_index),
    )


def sample_subordinator_increments(
    spec: SubordinatorSpec, dts, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Matrix [len(dts), n] of independent increments of S over the intervals."""
    dts = np.asarray(dts, dtype=float)
    out = np.empty((dts.size, n))
    for k, dt in enumerate(dts):
        counts = rng.poisson(dt * spec.rate, n)
        total = int(counts.sum())
        jumps = spec.sample_jumps(total, rng)
        ends = np.cumsum(counts)
        csum = np.concatenate([[0.0], np.cumsum(jumps)])
        out[k] = csum[ends] - csum[ends - counts] + dt * spec.drift
    return out


def sample_subordinator(spec: SubordinatorSpec, t: float, rng: np.random.Generator, n: int = 1):
    """S_t samples (pathwise non-decreasing in t by construction)."""
    vals = sample_subordinator_increments(spec, [t], n, rng)[0]
    return float(vals[0]) if n == 1 else vals


# ---------------------------------------------------------------------------
# walk proxy and exact expectations


def diffusion_walk(g: MetricMeasureGraph, x0: int, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """One simple-random-walk trajectory (uniform over neighbors)."""
    path = np.empty(n_steps + 1, dtype=np.int64)
    path[0] = x0
    v = x0
    for i in range(n_steps):
        nbrs = g.neighbors(v)
        v = int(nbrs[rng.integers(nbrs.size)])
        path[i + 1] = v
    return path


def _degmask(g: MetricMeasureGraph) -> np.ndarray:
    degs = np.diff(g.indptr)
    if np.any(degs <= 0) or np.any(degs & (degs - 1)):
        raise DomainError("stepping kernel requires power-of-two degrees")
    return (degs - 1).astype(np.uint8)


def walk_positions(
    g: MetricMeasureGraph,
    x0: int,
    step_targets: np.ndarray,
    rng: np.random.Generator,
    kill_on_boundary: bool = False,
    backend: str | None = None,
    chunk_rounds: int = CHUNK_ROUNDS,
) -> tuple[np.ndarray, np.ndarray]:
    """Walk positions at per-walker step targets.

    ``step_targets`` is int64 [K, n], non-decreasing along axis 0.  Returns
    (snaps, status): ``snaps[k, i]`` is the vertex after ``step_targets[k,
    i]`` steps, or -1 if walker i was absorbed earlier.
    """
    mod, _ = select_backend(backend)
    targets = np.ascontiguousarray(step_targets, dtype=np.int64)
    K, n = targets.shape
    degmask = _degmask(g)
    killmask = np.zeros(g.n_vertices, dtype=np.uint8)
    if kill_on_boundary:
        killmask[g.boundary] = 1
    pos = np.full(n, x0, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    next_k = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int64)
    snaps = np.full((K, n), -1, dtype=np.int64)

    sel = np.arange(n)
    while sel.size:
        pos_c = np.ascontiguousarray(pos[sel])
        steps_c = np.ascontiguousarray(steps[sel])
        next_c = np.ascontiguousarray(next_k[sel])
        stat_c = np.ascontiguousarray(status[sel])
        targ_c = np.ascontiguousarray(targets[:, sel])
        snap_c = np.ascontiguousarray(snaps[:, sel])
        rnd = rng.integers(0, 256, size=(chunk_rounds, sel.size), dtype=np.uint8)
        mod.step_walkers_chunk(
            pos_c, steps_c, next_c, targ_c, snap_c, rnd, g.indptr, g.indices, degmask, killmask, stat_c
        )
        pos[sel] = pos_c
        steps[sel] = steps_c
        next_k[sel] = next_c
        status[sel] = stat_c
        snaps[:, sel] = snap_c
        sel = sel[stat_c == STATUS_ACTIVE]
    return snaps, status


def diffusion_endpoints(
    g: MetricMeasureGraph, x0: int, n_steps: int, n_walkers: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized endpoints of n_walkers independent n_steps walks."""
    targets = np.full((1, n_walkers), n_steps, dtype=np.int64)
    snaps, _ = walk_positions(g, x0, targets, rng)
    return snaps[0]


def sample_exit_steps(
    g: MetricMeasureGraph, x0: int, r: float, n_walkers: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo exit times (in steps) from the open ball B(x0, r)."""
    dist = g.distances_from(x0)
    killmask = (dist >= r).astype(np.uint8)
    if killmask[x0]:
        raise DomainError("x0 must lie inside the ball")
    if not killmask.any():
        raise DomainError("ball exhausts the graph; exit undefined")
    mod, _ = select_backend()
    degmask = _degmask(g)
    n = n_walkers
    pos = np.full(n, x0, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    next_k = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int64)
    horizon = np.full((1, n), np.iinfo(np.int64).max // 2, dtype=np.int64)
    snaps = np.full((1, n), -1, dtype=np.int64)
    sel = np.arange(n)
    while sel.size:
        pos_c = np.ascontiguousarray(pos[sel])
        steps_c = np.ascontiguousarray(steps[sel])
        next_c = np.ascontiguousarray(next_k[sel])
        stat_c = np.ascontiguousarray(status[sel])
        targ_c = np.ascontiguousarray(horizon[:, sel])
        snap_c = np.ascontiguousarray(snaps[:, sel])
        rnd = rng.integers(0, 256, size=(CHUNK_ROUNDS, sel.size), dtype=np.uint8)
        mod.step_walkers_chunk(
            pos_c, steps_c, next_c, targ_c, snap_c, rnd, g.indptr, g.indices, degmask, killmask, stat_c
        )
        pos[sel] = pos_c
        steps[sel] = steps_c
        status[sel] = stat_c
        sel = sel[stat_c == STATUS_ACTIVE]
    return steps


def _absorbed_expectation(g: MetricMeasureGraph, interior: np.ndarray, x0: int) -> float:
    idx = np.flatnonzero(interior)
    if idx.size == 0:
        raise DomainError("empty interior")
    if not interior[x0]:
        raise DomainError("start vertex is not interior")
    ren = -np.ones(g.n_vertices, dtype=np.int64)
    ren[idx] = np.arange(idx.size)
    rows, cols, vals = [], [], []
    degs = np.diff(g.indptr)
    for v in idx:
        nbrs = g.indices[g.indptr[v] : g.indptr[v + 1]]
        w = 1.0 / degs[v]
        for u in nbrs:
            if interior[u]:
                rows.append(ren[v])
                cols.append(ren[u])
                vals.append(w)
    P = sparse.csr_matrix((vals, (rows, cols)), shape=(idx.size, idx.size))
    A = sparse.eye(idx.size, format="csr") - P
    try:
        u = spsolve(A.tocsc(), np.ones(idx.size))
    except Exception as exc:  # pragma: no cover - singular systems can't arise on proper subsets
        raise SolveError(f"absorbed expectation solve failed: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SolveError("absorbed expectation solve returned non-finite values")
    return float(u[ren[x0]])


def mean_exit_time(g: MetricMeasureGraph, x0: int, r: float) -> float:
    """Exact mean exit time (in steps) from the open ball B(x0, r)."""
    dist = g.distances_from(x0)
    interior = dist < r
    if interior.all():
        raise DomainError("ball has empty exterior; exit time undefined")
    return _absorbed_expectation(g, interior, x0)


def mean_hitting_time(g: MetricMeasureGraph, x0: int, targets) -> float:
    """Exact mean hitting time of a target vertex set."""
    interior = np.ones(g.n_vertices, dtype=bool)
    for v in targets:
        interior[int(v)] = False
    return _absorbed_expectation(g, interior, x0)


# ---------------------------------------------------------------------------
# samplers returning positions at a time grid


def _line_positions_subordinate(g, x0, t_grid, spec, n, rng, **_):
    """Exact endpoint sampler on the line: the walk increment over m steps is
    ``2 Binomial(m, 1/2) - m``, so no stepping is needed.  Walkers observed
    outside the stored graph are absorbed into the defect bucket (sticky)."""
    L = g.half_length
    x0_pos = int(x0) - L
    dts = np.diff(np.concatenate([[0.0], np.asarray(t_grid, dtype=float)]))
    incs = sample_subordinator_increments(spec, dts, n, rng)
    # clip astronomically rare giant step demands; such walkers sit far
    # outside any stored graph and land in the defect bucket regardless
    steps = np.rint(np.minimum(np.cumsum(incs, axis=0), 4e17)).astype(np.int64)
    m = np.diff(np.concatenate([np.zeros((1, n), dtype=np.int64), steps]), axis=0)
    K = len(t_grid)
    out = np.full((K, n), -1, dtype=np.int64)
    pos = np.full(n, x0_pos, dtype=np.int64)
    dead = np.zeros(n, dtype=bool)
    for k in range(K):
        pos = pos + 2 * rng.binomial(m[k], 0.5) - m[k]
        dead |= np.abs(pos) > L
        alive = ~dead
        out[k, alive] = pos[alive] + L
    return out, {"truncated": np.zeros(K, dtype=np.int64)}


def _graph_positions_subordinate(g, x0, t_grid, spec, n, rng, step_cap=None, kill_on_boundary=False):
    """Generic sampler: walk the graph for round(S_t) steps (capped).

    Walkers whose step demand exceeds the cap are frozen at their capped
    position; on closed graphs the cap is set at/above the mixing scale so
    the freeze is indistinguishable from further stepping.  The per-time
    count of capped walkers is reported.
    """
    dts = np.diff(np.concatenate([[0.0], np.asarray(t_grid, dtype=float)]))
    incs = sample_subordinator_increments(spec, dts, n, rng)
    S = np.cumsum(incs, axis=0)
    cap = np.iinfo(np.int64).max // 4 if step_cap is None else int(step_cap)
    truncated = (S > cap).sum(axis=1).astype(np.int64)
    targets = np.rint(np.minimum(S, float(cap))).astype(np.int64)
    snaps, _ = walk_positions(g, x0, targets, rng, kill_on_boundary=kill_on_boundary)
    return snaps, {"truncated": truncated}


def subordinate_chain(
    g: MetricMeasureGraph,
    x0: int,
    t: float,
    spec: SubordinatorSpec,
    rng: np.random.Generator,
    **kw,
) -> int:
    """Position of the subordinate chain at time t (-1 if absorbed)."""
    snaps, _ = _graph_positions_subordinate(g, x0, [t], spec, 1, rng, **kw)
    return int(snaps[0, 0])


def _line_jump_table(g, psi):
    L = g.half_length
    k = np.arange(1, 2 * L + 1, dtype=float)
    weights = 1.0 / ((2.0 * k - 1.0) * psi(k))
    onesided = float(weights.sum())
    cdf = np.cumsum(weights) / onesided
    return 2.0 * onesided, cdf


def _line_positions_jump(g, x0, t_grid, psi, n, rng, **_):
    """Translation-invariant jump chain on the line.

    The displacement law ``p(k) ~ 1/(V(|k|) psi(|k|))`` is tabulated once;
    event counts per interval are Poisson with the constant total rate.
    Walkers are killed at the first partial sum leaving the graph.
    """
    L = g.half_length
    x0_pos = int(x0) - L
    lam, cdf = _line_jump_table(g, psi)
    K = len(t_grid)
    dts = np.diff(np.concatenate([[0.0], np.asarray(t_grid, dtype=float)]))
    out = np.full((K, n), -1, dtype=np.int64)
    pos = np.full(n, x0_pos, dtype=np.int64)
    dead = np.zeros(n, dtype=bool)
    for k in range(K):
        counts = rng.poisson(lam * dts[k], n)
        width = int(counts.max()) if counts.size else 0
        if width:
            mags = np.searchsorted(cdf, rng.random((width, n))) + 1
            signs = rng.integers(0, 2, size=(width, n)) * 2 - 1
            jumps = mags * signs
            live_rows = np.arange(width)[:, None] < counts[None, :]
            jumps = np.where(live_rows, jumps, 0)
            traj = pos[None, :] + np.cumsum(jumps, axis=0)
            overs = np.where(live_rows, np.abs(traj), 0).max(axis=0)
            dead |= overs > L
            pos = traj[-1]
        alive = ~dead
        out[k, alive] = pos[alive] + L
    return out, {"truncated": np.zeros(K, dtype=np.int64)}


def _graph_positions_jump(g, x0, t_grid, psi, n, rng, max_state_product=5e7, **_):
    """Dense continuous-time jump chain for small graphs.

    Exponential clocks with per-vertex total rate; one jump distribution row
    per vertex.  Memory guard keeps ``n_walkers * n_vertices`` products sane.
    """
    V = g.n_vertices
    if n * V > max_state_product:
        raise ResourceError("dense jump chain too large; use the line fast path or fewer walkers")
    rates = np.zeros((V, V))
    for x in range(V):
        dist = g.distances_from(x).astype(float)
        for y in range(V):
            if y == x:
                continue
            d = dist[y]
            rates[x, y] = g.mass[y] / (g.ball_volume(x, d) * psi(d))
    lam = rates.sum(axis=1)
    cdf = np.cumsum(rates, axis=1) / lam[:, None]

    K = len(t_grid)
    out = np.full((K, n), -1, dtype=np.int64)
    pos = np.full(n, x0, dtype=np.int64)
    t_next = rng.exponential(1.0, n) / lam[pos]
    for k, t_k in enumerate(t_grid):
        while True:
            movers = t_next <= t_k
            if not movers.any():
                break
            mi = np.flatnonzero(movers)
            u = rng.random(mi.size)
            rowcdf = cdf[pos[mi]]
            newpos = (rowcdf < u[:, None]).sum(axis=1)
            pos[mi] = newpos
            t_next[mi] += rng.exponential(1.0, mi.size) / lam[newpos]
        out[k] = pos
    return out, {"truncated": np.zeros(K, dtype=np.int64)}


def jump_chain(
    g: MetricMeasureGraph,
    x0: int,
    t: float,
    psi: ScalingFunction,
    rng: np.random.Generator,
) -> int:
    """Position at time t of the continuous-time chain with rate kernel
    ``J(x, y) = 1 / (V(x, d(x,y)) psi(d(x,y)))``."""
    out, _ = _graph_positions_jump(g, x0, [t], psi, 1, rng)
    return int(out[0, 0])


# ---------------------------------------------------------------------------
# kernel estimation


@dataclass
class EmpiricalKernel:
    """Histogram estimate of p(t, x0, .) with binomial confidence widths."""

    graph: MetricMeasureGraph
    origin: int
    t: float
    counts: np.ndarray  # int64 per vertex
    n_walkers: int
    defect: int  # walkers absorbed at the boundary by time t
    truncated: int  # walkers whose step demand hit the cap (generic sampler)

    def p_hat(self) -> np.ndarray:
        return self.counts / (self.n_walkers * self.graph.mass)

    def halfwidth(self) -> np.ndarray:
        p = self.counts / self.n_walkers
        return 1.96 * np.sqrt(p * (1 - p) / self.n_walkers) / self.graph.mass

    def survival(self) -> float:
        return float(self.counts.sum()) / self.n_walkers

    def by_distance(self):
        """Aggregates vertices into distance shells around the origin.

        Returns (r, counts, shell_mass, p_cell, halfwidth_cell) arrays; the
        cell density is count / (N * shell mass).
        """
        dist = self.graph.distances_from(self.origin)
        rmax = int(dist.max())
        shell_counts = np.bincount(dist, weights=self.counts, minlength=rmax + 1)
        shell_mass = np.bincount(dist, weights=self.graph.mass, minlength=rmax + 1)
        r = np.arange(rmax + 1, dtype=float)
        keep = shell_mass > 0
        p = shell_counts[keep] / (self.n_walkers * shell_mass[keep])
        frac = shell_counts[keep] / self.n_walkers
        hw = 1.96 * np.sqrt(frac * (1 - frac) / self.n_walkers) / shell_mass[keep]
        return r[keep], shell_counts[keep], shell_mass[keep], p, hw


_SAMPLERS = {
    ("subordinate", "binomial"): _line_positions_subordinate,
    ("subordinate", "steps"): _graph_positions_subordinate,
    ("jump", "line"): _line_positions_jump,
    ("jump", "dense"): _graph_positions_jump,
}


def _resolve_sampler(g, sampler, method):
    if method == "auto":
        if sampler == "subordinate":
            method = "binomial" if g.half_length is not None else "steps"
        else:
            method = "line" if g.half_length is not None else "dense"
    return _SAMPLERS[(sampler, method)]


def estimate_kernel_grid(
    g: MetricMeasureGraph,
    x0: int,
    t_grid,
    sampler: str,
    n_walkers: int,
    rng_seed: int,
    spec: SubordinatorSpec | None = None,
    psi: ScalingFunction | None = None,
    method: str = "auto",
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
    **sampler_kw,
) -> list[EmpiricalKernel]:
    """Blocked, thread-agnostic kernel estimation at several times at once.

    One trajectory per walker serves every time in ``t_grid``.  Blocks are a
    fixed partition of the walker range; per-block Philox streams keyed by
    (seed, block) make the result independent of ``threads``.
    """
    if n_walkers < 1000:
        raise DomainError("kernel estimation needs at least 1000 walkers")
    t_grid = [float(t) for t in t_grid]
    if sorted(t_grid) != t_grid:
        raise DomainError("t_grid must be increasing")
    fn = _resolve_sampler(g, sampler, method)
    driver = spec if sampler == "subordinate" else psi
    if driver is None:
        raise DomainError("subordinate sampler needs spec=, jump sampler needs psi=")

    blocks = [(b, min(block_size, n_walkers - b * block_size)) for b in range((n_walkers + block_size - 1) // block_size)]

    def run_block(args):
        b, size = args
        rng = _block_rng(rng_seed, b)
        snaps, extra = fn(g, x0, t_grid, driver, size, rng, **sampler_kw)
        K = len(t_grid)
        counts = np.zeros((K, g.n_vertices), dtype=np.int64)
        defect = np.zeros(K, dtype=np.int64)
        for k in range(K):
            alive = snaps[k] >= 0
            counts[k] = np.bincount(snaps[k, alive], minlength=g.n_vertices)
            defect[k] = size - int(alive.sum())
        return counts, defect, extra["truncated"]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run_block, blocks))
    else:
        parts = [run_block(b) for b in blocks]

    K = len(t_grid)
    counts = np.zeros((K, g.n_vertices), dtype=np.int64)
    defect = np.zeros(K, dtype=np.int64)
    truncated = np.zeros(K, dtype=np.int64)
    for c, d, tr in parts:
        counts += c
        defect += d
        truncated += tr
    return [
        EmpiricalKernel(
            graph=g,
            origin=x0,
            t=t_grid[k],
            counts=counts[k],
            n_walkers=n_walkers,
            defect=int(defect[k]),
            truncated=int(truncated[k]),
        )
        for k in range(K)
    ]


def estimate_kernel(g, x0, t, sampler, n_walkers, rng_seed, **kw) -> EmpiricalKernel:
    return estimate_kernel_grid(g, x0, [t], sampler, n_walkers, rng_seed, **kw)[0]


# ---------------------------------------------------------------------------
# envelope comparison and moments


def envelope_sandwich_test(
    kernels,
    spec,
    vol,
    r_max: float | None = None,
    min_count: int = 30,
) -> tuple[float, list]:
    """Largest violation factor of the unit-constant envelope sandwich.

    For each distance cell with at least ``min_count`` hits,
    ``C = max(p_hat/upper, lower/p_hat)`` against the indicator-form bounds
    evaluated with unit constants; the max over cells and times is returned
    together with the per-cell table.
    """
    from dataclasses import replace

    from .envelope import hk_bounds

    unit = replace(spec, c=1.0)
    worst = 0.0
    rows = []
    for ker in kernels:
        r, cnt, mass, p, _ = ker.by_distance()
        for j in range(r.size):
            if cnt[j] < min_count:
                continue
            if r_max is not None and r[j] > r_max:
                continue
            lo, hi = hk_bounds(unit, ker.t, ker.origin, float(r[j]), vol)
            c_here = max(p[j] / hi, lo / p[j])
            worst = max(worst, float(c_here))
            rows.append((ker.t, float(r[j]), float(p[j]), lo, hi, float(c_here)))
    if not rows:
        raise DomainError("no cells passed the count threshold")
    return worst, rows


@dataclass(frozen=True)
class MomentLilReport:
    moment_checkpoints: np.ndarray  # prefix sizes
    moment_curve: np.ndarray  # running mean of F(d) at the horizon
    lil_sup_quantiles: dict
    horizon: float
    defect_fraction: float


def moment_and_lil(
    g: MetricMeasureGraph,
    x0: int,
    F: ScalingFunction,
    psi: ScalingFunction,
    sampler: str,
    horizon: float,
    n_walkers: int,
    rng_seed: int,
    spec: SubordinatorSpec | None = None,
    method: str = "auto",
) -> MomentLilReport:
    """Running moment estimate at the horizon and the pathwise LIL statistic.

    Checkpoints are dyadic times up to the horizon; the LIL statistic is
    ``max_k d(x0, X_{t_k}) / h(t_k)`` over checkpoints ``t_k >= 16`` with
    ``h(t) = loglog(t) F^{-1}(t / loglog t)``.
    """
    from .envelope import lil_h

    if horizon < 16:
        raise DomainError("horizon must be >= 16 time units")
    t_ks = []
    tk = 1.0
    while tk < horizon:
        t_ks.append(tk)
        tk *= 2.0
    t_ks.append(float(horizon))

    fn = _resolve_sampler(g, sampler, method)
    driver = spec if sampler == "subordinate" else psi
    blocks = [(b, min(BLOCK_SIZE, n_walkers - b * BLOCK_SIZE)) for b in range((n_walkers + BLOCK_SIZE - 1) // BLOCK_SIZE)]
    dist = g.distances_from(x0).astype(float)

    final_vals = []
    lil_sups = []
    dead_total = 0
    for b, size in blocks:
        rng = _block_rng(rng_seed, b)
        snaps, _ = fn(g, x0, t_ks, driver, size, rng)
        alive = snaps[-1] >= 0
        dead_total += size - int(alive.sum())
        final_vals.append(np.asarray(F(np.maximum(dist[snaps[-1, alive]], 1e-300))))
        sup = np.zeros(size)
        seen = np.zeros(size, dtype=bool)
        for k, tk in enumerate(t_ks):
            if tk < 16:
                continue
            h = lil_h(F, tk)
            ok = snaps[k] >= 0
            ratio = np.zeros(size)
            ratio[ok] = dist[snaps[k, ok]] / h
            sup = np.maximum(sup, ratio)
            seen |= ok
        lil_sups.append(sup[seen])

    final_vals = np.concatenate(final_vals)
    checkpoints = []
    m = final_vals.size
    c = m
    while c >= max(1000, m // 16):
        checkpoints.append(c)
        c //= 2
    checkpoints = np.array(sorted(checkpoints))
    curve = np.array([final_vals[:k].mean() for k in checkpoints])
    lil_sups = np.concatenate(lil_sups)
    qs = {q: float(np.quantile(lil_sups, q)) for q in (0.5, 0.9, 0.99)}
    return MomentLilReport(
        moment_checkpoints=checkpoints,
        moment_curve=curve,
        lil_sup_quantiles=qs,
        horizon=float(horizon),
        defect_fraction=dead_total / n_walkers,
    )
