"""Evaluable monotone functions with weak scaling metadata.

A scaling function is a positive non-decreasing function on (0, inf).  A
scaling bound records a one-sided power-law growth condition on its ratios:
the lower bound with exponent ``beta`` and constant ``c <= 1`` asserts
``f(R)/f(r) >= c (R/r)**beta`` for all admissible ``r <= R`` inside the
window, the upper bound the reversed inequality with ``C >= 1``.  Windows are
``below a`` (pairs with ``R < a``), ``above a`` (pairs with ``r >= a``) or
global.

Bound verification is a sampled check on a geometric grid: failure is
definitive, passage is grid-relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BracketError, DomainError, ViolationError

#: default relative tolerance for generalized inversion (log-scale bisection)
EPS_INV = 1e-10

#: default span and resolution of verification grids
DEFAULT_SPAN = (1e-6, 1e6)
POINTS_PER_DECADE = 64

_MAX_BRACKET = 2.0**100


def geometric_grid(lo: float, hi: float, per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    """Log-uniform grid with roughly ``per_decade`` points per decade."""
    if not (0 < lo < hi):
        raise DomainError(f"grid span must satisfy 0 < lo < hi, got ({lo}, {hi})")
    n = max(2, int(round(per_decade * math.log10(hi / lo))) + 1)
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class ScalingFunction:
    """Positive non-decreasing function with optional analytic extras.

    ``fn`` must accept a float ndarray of positive arguments.  ``zero_profile``
    and ``inf_profile`` record the local behaviour ``s**p * log(1/s)**a *
    loglog(1/s)**b`` near 0 (resp. ``s**p * log(s)**a * loglog(s)**b`` near
    infinity) when the constructor knows it; they drive exact integrability
    decisions at the Bertrand borderlines where sampled ratio tests cannot.
    """

    kind: str
    fn: Callable[[np.ndarray], np.ndarray]
    params: tuple = ()
    label: str = ""
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    exact_inverse: Callable[[float], float] | None = None
    breakpoints: tuple[float, ...] = ()
    zero_profile: tuple[float, float, float] | None = None
    inf_profile: tuple[float, float, float] | None = None
    # log-space evaluators (u = ln s -> ln f, ln f'), immune to under/overflow;
    # the singular-quadrature head relies on them to reach arbitrarily deep scales
    log_eval: Callable | None = None
    log_deriv: Callable | None = None
    # split forms u -> (p, rem) with ln f(e^u) = p*u + rem(u); combining the
    # power coefficients before multiplying by huge u avoids the catastrophic
    # cancellation that plain composition suffers at iterated-log depths
    log_eval_parts: Callable | None = None
    log_deriv_parts: Callable | None = None

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(arr <= 0):
            raise DomainError(f"{self.label or self.kind}: argument must be positive")
        out = np.asarray(self.fn(arr), dtype=float)
        if np.ndim(s) == 0:
            return float(out)
        return out

    def inverse(self, t: float, rtol: float = EPS_INV) -> float:
        """Generalized inverse ``inf{s : f(s) > t}`` (exact form if known)."""
        if self.exact_inverse is not None:
            if t <= 0:
                raise DomainError("inverse requires t > 0")
            return float(self.exact_inverse(t))
        return generalized_inverse(self, t, rtol=rtol)

    def assert_monotone(self, grid: np.ndarray | None = None, rtol: float = 1e-9) -> None:
        if grid is None:
            grid = geometric_grid(*DEFAULT_SPAN, per_decade=16)
        vals = self(grid)
        if np.any(vals <= 0):
            raise DomainError(f"{self.label or self.kind}: not positive on the test grid")
        drops = vals[1:] < vals[:-1] * (1 - rtol)
        if np.any(drops):
            i = int(np.argmax(drops))
            raise DomainError(
                f"{self.label or self.kind}: decreasing near s={grid[i]:.3g} "
                f"({vals[i]:.6g} -> {vals[i + 1]:.6g})"
            )


def power(exponent: float, scale: float = 1.0, label: str = "") -> ScalingFunction:
    """``f(s) = scale * s**exponent`` with exact derivative and inverse."""
    if exponent < 0:
        raise DomainError("power exponent must be >= 0 for a non-decreasing function")
    if scale <= 0:
        raise DomainError("power scale must be positive")
    inv = None
    if exponent > 0:
        inv = lambda t: (t / scale) ** (1.0 / exponent)
    lc = math.log(scale)
    return ScalingFunction(
        kind="power",
        fn=lambda s: scale * s**exponent,
        params=(exponent, scale),
        label=label or f"{scale:g}*s^{exponent:g}",
        derivative=lambda s: scale * exponent * s ** (exponent - 1.0),
        exact_inverse=inv,
        zero_profile=(exponent, 0.0, 0.0),
        inf_profile=(exponent, 0.0, 0.0),
        log_eval=lambda u: lc + exponent * u,
        log_deriv=(None if exponent == 0 else (lambda u: lc + math.log(exponent) + (exponent - 1.0) * u)),
        log_eval_parts=lambda u: (exponent, lc),
        log_deriv_parts=(None if exponent == 0 else (lambda u: (exponent - 1.0, lc + math.log(exponent)))),
    )


def piecewise_power(
    exponents,
    breakpoints,
    scale: float = 1.0,
    jumps=None,
    label: str = "",
) -> ScalingFunction:
    """Continuous piecewise power, optional upward jump factors at the breaks.

    Piece ``i`` applies on the left-closed interval ``[b_{i-1}, b_i)``; the
    value at a breakpoint belongs to the right piece, so ``jumps[i] > 1``
    makes the function right-continuous with an upward jump there.
    """
    exps = [float(e) for e in exponents]
    brks = [float(b) for b in breakpoints]
    if len(exps) != len(brks) + 1:
        raise DomainError("need one exponent per piece: len(exponents) == len(breakpoints)+1")
    if any(e < 0 for e in exps):
        raise DomainError("piecewise exponents must be >= 0")
    if sorted(brks) != brks or any(b <= 0 for b in brks):
        raise DomainError("breakpoints must be positive and increasing")
    if jumps is None:
        jumps = [1.0] * len(brks)
    if any(j < 1 for j in jumps):
        raise DomainError("jump factors must be >= 1 (non-decreasing function)")

    # chain coefficients so pieces meet continuously up to the jump factor
    coefs = [scale]
    for i, b in enumerate(brks):
        left = coefs[i] * b ** exps[i]
        coefs.append(jumps[i] * left / b ** exps[i + 1])
    coefs = np.asarray(coefs)
    exps_a = np.asarray(exps)
    brks_a = np.asarray(brks)

    def fn(s):
        idx = np.searchsorted(brks_a, s, side="right")
        return coefs[idx] * s ** exps_a[idx]

    def deriv(s):
        idx = np.searchsorted(brks_a, s, side="right")
        return coefs[idx] * exps_a[idx] * s ** (exps_a[idx] - 1.0)

    log_brks = np.log(brks_a)
    log_coefs = np.log(coefs)
    with np.errstate(divide="ignore"):
        log_cd = np.log(coefs * exps_a)  # -inf on plateau pieces

    def log_eval(u):
        idx = np.searchsorted(log_brks, u, side="right")
        return log_coefs[idx] + exps_a[idx] * np.asarray(u, dtype=float)

    def log_deriv(u):
        idx = np.searchsorted(log_brks, u, side="right")
        return log_cd[idx] + (exps_a[idx] - 1.0) * np.asarray(u, dtype=float)

    def log_eval_parts(u):
        idx = int(np.searchsorted(log_brks, u, side="right"))
        return float(exps_a[idx]), float(log_coefs[idx])

    def log_deriv_parts(u):
        idx = int(np.searchsorted(log_brks, u, side="right"))
        return float(exps_a[idx] - 1.0), float(log_cd[idx])

    f = ScalingFunction(
        kind="piecewise-power",
        fn=fn,
        params=(tuple(exps), tuple(brks), scale, tuple(float(j) for j in jumps)),
        label=label or "piecewise[" + ",".join(f"{e:g}" for e in exps) + "]",
        derivative=deriv,
        breakpoints=tuple(brks),
        zero_profile=(exps[0], 0.0, 0.0),
        inf_profile=(exps[-1], 0.0, 0.0),
        log_eval=log_eval,
        log_deriv=log_deriv,
        log_eval_parts=log_eval_parts,
        log_deriv_parts=log_deriv_parts,
    )
    return f


def power_log_small(
    exponent: float,
    log_exp: float,
    loglog_exp: float = 0.0,
    pivot: float = 2.0**-4,
    scale: float = 1.0,
    label: str = "",
) -> ScalingFunction:
    """``s**p * log(1/s)**a * loglog(1/s)**b`` below the pivot, pure power above.

    The two branches meet continuously at the pivot, which must sit below
    ``exp(-e)`` so the iterated logarithm is positive on the corrected branch.
    """
    if pivot >= math.exp(-math.e):
        raise DomainError("pivot must be < exp(-e) for a positive iterated log")
    lp = math.log(1.0 / pivot)
    cpiv = lp**log_exp * math.log(lp) ** loglog_exp

    def fn(s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        small = s < pivot
        if np.any(small):
            v = np.log(1.0 / s[small])
            out[small] = s[small] ** exponent * v**log_exp * np.log(v) ** loglog_exp
        if np.any(~small):
            out[~small] = cpiv * s[~small] ** exponent
        return scale * out

    def deriv(s):
        s = np.asarray(s, dtype=float)
        base = fn(s)
        small = s < pivot
        corr = np.full_like(s, exponent)
        if np.any(small):
            v = np.log(1.0 / s[small])
            corr[small] = exponent - log_exp / v - loglog_exp / (v * np.log(v))
        return base * corr / s

    lsc = math.log(scale)
    lpiv = math.log(pivot)

    def log_eval(u):
        ua = np.atleast_1d(np.asarray(u, dtype=float))
        out = lsc + exponent * ua + math.log(cpiv)
        small = ua < lpiv
        if small.any():
            v = -ua[small]
            out[small] = lsc + exponent * ua[small] + log_exp * np.log(v) + loglog_exp * np.log(np.log(v))
        return float(out[0]) if np.ndim(u) == 0 else out

    def log_deriv(u):
        ua = np.atleast_1d(np.asarray(u, dtype=float))
        base = np.atleast_1d(np.asarray(log_eval(ua), dtype=float))
        corr = np.full_like(base, exponent)
        small = ua < lpiv
        if small.any():
            v = -ua[small]
            corr[small] = exponent - log_exp / v - loglog_exp / (v * np.log(v))
        out = base - ua + np.log(corr)
        return float(out[0]) if np.ndim(u) == 0 else out

    def log_eval_parts(u):
        if u < lpiv:
            v = -u
            return exponent, lsc + log_exp * math.log(v) + loglog_exp * math.log(math.log(v))
        return exponent, lsc + math.log(cpiv)

    def log_deriv_parts(u):
        p, rem = log_eval_parts(u)
        if u < lpiv:
            v = -u
            corr = exponent - log_exp / v - loglog_exp / (v * math.log(v))
        else:
            corr = exponent
        return p - 1.0, rem + math.log(corr)

    f = ScalingFunction(
        kind="power-log",
        fn=fn,
        params=(exponent, log_exp, loglog_exp, pivot, scale),
        label=label or f"s^{exponent:g}*log^{log_exp:g}*loglog^{loglog_exp:g}@0",
        derivative=deriv,
        breakpoints=(pivot,),
        zero_profile=(exponent, log_exp, loglog_exp),
        inf_profile=(exponent, 0.0, 0.0),
        log_eval=log_eval,
        log_deriv=log_deriv,
        log_eval_parts=log_eval_parts,
        log_deriv_parts=log_deriv_parts,
    )
    f.assert_monotone(geometric_grid(1e-12, 1e6, 16))
    return f


def power_log_large(
    exponent: float,
    log_exp: float,
    loglog_exp: float = 0.0,
    pivot: float = 16.0,
    scale: float = 1.0,
    label: str = "",
) -> ScalingFunction:
    """``s**p * log(s)**a * loglog(s)**b`` above the pivot, pure power below."""
    if pivot <= math.exp(math.e):
        raise DomainError("pivot must be > exp(e) for a positive iterated log")
    lp = math.log(pivot)
    cpiv = lp**log_exp * math.log(lp) ** loglog_exp

    def fn(s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        big = s > pivot
        if np.any(big):
            v = np.log(s[big])
            out[big] = s[big] ** exponent * v**log_exp * np.log(v) ** loglog_exp
        if np.any(~big):
            out[~big] = cpiv * s[~big] ** exponent
        return scale * out

    def deriv(s):
        s = np.asarray(s, dtype=float)
        base = fn(s)
        corr = np.full_like(s, exponent)
        big = s > pivot
        if np.any(big):
            v = np.log(s[big])
            corr[big] = exponent + log_exp / v + loglog_exp / (v * np.log(v))
        return base * corr / s

    lsc = math.log(scale)
    lpiv = math.log(pivot)

    def log_eval(u):
        ua = np.atleast_1d(np.asarray(u, dtype=float))
        out = lsc + exponent * ua + math.log(cpiv)
        big = ua > lpiv
        if big.any():
            v = ua[big]
            out[big] = lsc + exponent * v + log_exp * np.log(v) + loglog_exp * np.log(np.log(v))
        return float(out[0]) if np.ndim(u) == 0 else out

    def log_deriv(u):
        ua = np.atleast_1d(np.asarray(u, dtype=float))
        base = np.atleast_1d(np.asarray(log_eval(ua), dtype=float))
        corr = np.full_like(base, exponent)
        big = ua > lpiv
        if big.any():
            v = ua[big]
            corr[big] = exponent + log_exp / v + loglog_exp / (v * np.log(v))
        out = base - ua + np.log(corr)
        return float(out[0]) if np.ndim(u) == 0 else out

    def log_eval_parts(u):
        if u > lpiv:
            return exponent, lsc + log_exp * math.log(u) + loglog_exp * math.log(math.log(u))
        return exponent, lsc + math.log(cpiv)

    def log_deriv_parts(u):
        p, rem = log_eval_parts(u)
        if u > lpiv:
            corr = exponent + log_exp / u + loglog_exp / (u * math.log(u))
        else:
            corr = exponent
        return p - 1.0, rem + math.log(corr)

    f = ScalingFunction(
        kind="power-log",
        fn=fn,
        params=(exponent, log_exp, loglog_exp, pivot, scale),
        label=label or f"s^{exponent:g}*log^{log_exp:g}*loglog^{loglog_exp:g}@inf",
        derivative=deriv,
        breakpoints=(pivot,),
        zero_profile=(exponent, 0.0, 0.0),
        inf_profile=(exponent, log_exp, loglog_exp),
        log_eval=log_eval,
        log_deriv=log_deriv,
        log_eval_parts=log_eval_parts,
        log_deriv_parts=log_deriv_parts,
    )
    f.assert_monotone(geometric_grid(1e-6, 1e12, 16))
    return f


def tabulated(r_grid: np.ndarray, values: np.ndarray, label: str = "") -> ScalingFunction:
    """Monotone piecewise-linear interpolation in log-log coordinates.

    Outside the table the end slopes extend the function as pure powers, so
    scaling ratios stay sensible on queries slightly past the span.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if r_grid.ndim != 1 or r_grid.shape != values.shape or r_grid.size < 2:
        raise DomainError("tabulated needs matching 1-d grids with >= 2 nodes")
    if np.any(np.diff(r_grid) <= 0) or np.any(values <= 0):
        raise DomainError("tabulated grid must increase and values must be positive")
    if np.any(np.diff(values) < -1e-12 * values[:-1]):
        raise DomainError("tabulated values must be non-decreasing")
    xs = np.log(r_grid)
    ys = np.log(values)
    slope_lo = (ys[1] - ys[0]) / (xs[1] - xs[0])
    slope_hi = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

    def fn(s):
        x = np.log(np.asarray(s, dtype=float))
        y = np.interp(x, xs, ys)
        y = np.where(x < xs[0], ys[0] + slope_lo * (x - xs[0]), y)
        y = np.where(x > xs[-1], ys[-1] + slope_hi * (x - xs[-1]), y)
        return np.exp(y)

    def inv(t):
        ly = math.log(t)
        if ly <= ys[0]:
            return math.exp(xs[0] + (ly - ys[0]) / max(slope_lo, 1e-300))
        if ly >= ys[-1]:
            return math.exp(xs[-1] + (ly - ys[-1]) / max(slope_hi, 1e-300))
        j = int(np.searchsorted(ys, ly, side="right"))
        j = min(max(j, 1), len(ys) - 1)
        # within a flat node pair the exceedance infimum is the right node
        if ys[j] == ys[j - 1]:
            return math.exp(xs[j])
        x = xs[j - 1] + (ly - ys[j - 1]) * (xs[j] - xs[j - 1]) / (ys[j] - ys[j - 1])
        return math.exp(x)

    def log_eval(u):
        x = np.asarray(u, dtype=float)
        y = np.interp(x, xs, ys)
        y = np.where(x < xs[0], ys[0] + slope_lo * (x - xs[0]), y)
        y = np.where(x > xs[-1], ys[-1] + slope_hi * (x - xs[-1]), y)
        return float(y) if np.ndim(u) == 0 else y

    return ScalingFunction(
        kind="tabulated",
        fn=fn,
        params=(float(r_grid[0]), float(r_grid[-1]), int(r_grid.size)),
        label=label or f"tabulated[{r_grid.size}]",
        exact_inverse=inv,
        zero_profile=(float(slope_lo), 0.0, 0.0),
        inf_profile=(float(slope_hi), 0.0, 0.0),
        log_eval=log_eval,
    )


def from_callable(
    fn,
    label: str = "",
    derivative=None,
    breakpoints=(),
    zero_profile=None,
    inf_profile=None,
) -> ScalingFunction:
    return ScalingFunction(
        kind="composed",
        fn=lambda s: np.asarray(fn(s), dtype=float),
        label=label or "composed",
        derivative=derivative,
        breakpoints=tuple(breakpoints),
        zero_profile=zero_profile,
        inf_profile=inf_profile,
    )


def scaled(f: ScalingFunction, c: float, label: str = "") -> ScalingFunction:
    """``c * f`` keeping the scaling metadata (indices are scale-free)."""
    if c <= 0:
        raise DomainError("scale factor must be positive")
    return ScalingFunction(
        kind="composed",
        fn=lambda s: c * np.asarray(f.fn(np.asarray(s, dtype=float)), dtype=float),
        label=label or f"{c:g}*({f.label})",
        derivative=(None if f.derivative is None else (lambda s: c * f.derivative(s))),
        exact_inverse=(None if f.exact_inverse is None else (lambda t: f.exact_inverse(t / c))),
        breakpoints=f.breakpoints,
        zero_profile=f.zero_profile,
        inf_profile=f.inf_profile,
    )


# ---------------------------------------------------------------------------
# scaling bounds


@dataclass(frozen=True)
class ScalingBound:
    """One condition L_a(beta, c) or U_a(beta, C) with its window."""

    side: str  # "lower" | "upper"
    exponent: float
    constant: float
    window: str = "global"  # "below" | "above" | "global"
    threshold: float = math.inf

    def __post_init__(self):
        if self.side not in ("lower", "upper"):
            raise DomainError("side must be 'lower' or 'upper'")
        if self.exponent <= 0:
            raise DomainError("scaling exponent must be positive")
        if self.side == "lower" and not (0 < self.constant <= 1):
            raise DomainError("lower-side constant must lie in (0, 1]")
        if self.side == "upper" and self.constant < 1:
            raise DomainError("upper-side constant must be >= 1")
        if self.window not in ("below", "above", "global"):
            raise DomainError("window must be 'below', 'above' or 'global'")
        if self.window == "global" and not math.isinf(self.threshold):
            raise DomainError("global window takes threshold = inf")
        if self.window != "global" and not (0 < self.threshold < math.inf):
            raise DomainError("window threshold must be positive and finite")

    def admits(self, r: np.ndarray, R: np.ndarray) -> np.ndarray:
        if self.window == "below":
            return R < self.threshold
        if self.window == "above":
            return r >= self.threshold
        return np.ones_like(np.asarray(r, dtype=float), dtype=bool)


def lower_bound(exponent, constant=1.0, window="global", threshold=math.inf) -> ScalingBound:
    return ScalingBound("lower", exponent, constant, window, threshold)


def upper_bound(exponent, constant=1.0, window="global", threshold=math.inf) -> ScalingBound:
    return ScalingBound("upper", exponent, constant, window, threshold)


@dataclass(frozen=True)
class ScalingReport:
    passed: bool
    worst_ratio: float
    witness: tuple[float, float]
    bound: ScalingBound
    grid_span: tuple[float, float]
    grid_size: int


def _window_grid(f: ScalingFunction, bound: ScalingBound, grid, span, per_decade):
    if grid is None:
        grid = geometric_grid(*span, per_decade=per_decade)
    else:
        grid = np.asarray(grid, dtype=float)
    # refine around breakpoints so jump discontinuities are seen by pair checks
    if f.breakpoints:
        extra = []
        for b in f.breakpoints:
            extra.extend([b * (1 - 1e-9), b, b * (1 + 1e-9)])
        grid = np.unique(np.concatenate([grid, np.asarray(extra)]))
    if bound.window == "below":
        grid = grid[grid < bound.threshold]
    elif bound.window == "above":
        grid = grid[grid >= bound.threshold]
    if grid.size < 2:
        raise DomainError("verification window contains fewer than two grid points")
    return grid


def check_scaling(
    f: ScalingFunction,
    bound: ScalingBound,
    grid=None,
    span=DEFAULT_SPAN,
    per_decade=POINTS_PER_DECADE,
    rtol: float = 1e-9,
) -> ScalingReport:
    """Sampled verification of a scaling bound over all grid pairs r <= R.

    Works through ``h(s) = f(s) / s**beta``: the lower condition is
    ``h(R)/h(r) >= c``, so the worst pair ratio is found with a running
    extremum in O(grid) instead of O(grid**2).
    """
    grid = _window_grid(f, bound, grid, span, per_decade)
    vals = f(grid)
    with np.errstate(over="ignore"):
        hh = vals / grid**bound.exponent
    if bound.side == "lower":
        prefix = np.maximum.accumulate(hh)
        ratios = hh / prefix
        j = int(np.argmin(ratios))
        worst = float(ratios[j])
        i = int(np.argmax(hh[: j + 1]))
        passed = worst >= bound.constant * (1 - rtol)
    else:
        prefix = np.minimum.accumulate(hh)
        ratios = hh / prefix
        j = int(np.argmax(ratios))
        worst = float(ratios[j])
        i = int(np.argmin(hh[: j + 1]))
        passed = worst <= bound.constant * (1 + rtol)
    return ScalingReport(
        passed=bool(passed),
        worst_ratio=worst,
        witness=(float(grid[i]), float(grid[j])),
        bound=bound,
        grid_span=(float(grid[0]), float(grid[-1])),
        grid_size=int(grid.size),
    )


def fit_scaling_constant(
    f: ScalingFunction,
    side: str,
    exponent: float,
    window: str = "global",
    threshold: float = math.inf,
    grid=None,
    span=DEFAULT_SPAN,
    per_decade=POINTS_PER_DECADE,
) -> ScalingBound:
    """Empirically tight constant for the given side/exponent on the grid.

    The returned bound passes :func:`check_scaling` on the same grid by
    construction (a hair of slack absorbs float noise).
    """
    probe = ScalingBound(side, exponent, 1.0 if side == "lower" else 1.0, window, threshold)
    grid = _window_grid(f, probe, grid, span, per_decade)
    vals = f(grid)
    hh = vals / grid**exponent
    if side == "lower":
        worst = float(np.min(hh / np.maximum.accumulate(hh)))
        c = min(1.0, worst) * (1 - 1e-12)
        return ScalingBound("lower", exponent, c, window, threshold)
    worst = float(np.max(hh / np.minimum.accumulate(hh)))
    C = max(1.0, worst) * (1 + 1e-12)
    return ScalingBound("upper", exponent, C, window, threshold)


# ---------------------------------------------------------------------------
# generalized inverse


def generalized_inverse(
    f,
    t: float,
    rtol: float = EPS_INV,
    s_init: float = 1.0,
) -> float:
    """``inf{s >= 0 : f(s) > t}`` by log-scale bisection.

    On flat plateaus at level ``t`` this converges to the right endpoint of
    the plateau (the infimum of the strict-exceedance set).  The bracket is
    expanded by doubling up to 2**100 in each direction.
    """
    if t <= 0:
        raise DomainError("generalized inverse requires t > 0")
    call = f if callable(f) and not isinstance(f, ScalingFunction) else f.__call__
    hi = float(s_init)
    while float(call(hi)) <= t:
        hi *= 2.0
        if hi > _MAX_BRACKET:
            raise BracketError(f"function never exceeds t={t:g} below 2^100")
    lo = hi / 2.0
    while float(call(lo)) > t:
        lo /= 2.0
        if lo < 1.0 / _MAX_BRACKET:
            # exceeds t arbitrarily close to zero: the infimum is ~0
            return lo
    # invariant: f(lo) <= t < f(hi)
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if float(call(mid)) > t:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class InverseSandwichReport:
    min_ratio: float
    max_ratio: float
    worst_ratio: float
    n_points: int


def check_inverse_sandwich(
    f: ScalingFunction,
    bound_U: ScalingBound,
    t_grid,
    slack: float = 1e-8,
    rtol: float = EPS_INV,
) -> InverseSandwichReport:
    """Checks ``C**-1 t <= f(f^{-1}(t)) <= C t`` for a verified global upper bound."""
    if bound_U.side != "upper" or bound_U.window != "global":
        raise DomainError("inverse sandwich needs a global upper scaling bound")
    rep = check_scaling(f, bound_U)
    if not rep.passed:
        raise ViolationError(
            f"upper bound U({bound_U.exponent:g}, {bound_U.constant:g}) not verified "
            f"(worst ratio {rep.worst_ratio:g} at {rep.witness})",
            witness=rep.witness,
            ratio=rep.worst_ratio,
        )
    C = bound_U.constant
    ratios = []
    for t in np.asarray(t_grid, dtype=float):
        s = generalized_inverse(f, float(t), rtol=rtol)
        rho = f(s) / t
        if rho > C * (1 + slack) or rho < 1.0 / (C * (1 + slack)):
            raise ViolationError(
                f"inverse sandwich violated at t={t:g}: f(f^-1(t))/t = {rho:g} "
                f"outside [{1 / C:g}, {C:g}]",
                witness=float(t),
                ratio=float(rho),
            )
        ratios.append(rho)
    ratios = np.asarray(ratios)
    return InverseSandwichReport(
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
        worst_ratio=float(max(ratios.max(), 1.0 / ratios.min())),
        n_points=len(ratios),
    )


# ---------------------------------------------------------------------------
# bound algebra


def extend_window(b: ScalingBound, new_threshold: float) -> ScalingBound:
    """Enlarge the window of a lower-side bound at the cost of its constant.

    Below-window: L_a(beta, c) holds up to b > a with constant c*(a/b)**beta.
    Above-window: L^a(beta, c) extends down to b < a with constant
    c*(b/a)**beta.  No monotonicity-only rule exists for upper-side windows
    (a jump at the old threshold defeats any candidate constant), so those
    are rejected.
    """
    if b.side != "lower":
        raise DomainError("window extension is only available for lower-side bounds")
    if b.window == "below":
        if new_threshold <= b.threshold:
            raise DomainError("below-window extension needs new_threshold > threshold")
        factor = (b.threshold / new_threshold) ** b.exponent
        return ScalingBound("lower", b.exponent, b.constant * factor, "below", new_threshold)
    if b.window == "above":
        if new_threshold >= b.threshold:
            raise DomainError("above-window extension needs new_threshold < threshold")
        factor = (new_threshold / b.threshold) ** b.exponent
        return ScalingBound("lower", b.exponent, b.constant * factor, "above", new_threshold)
    raise DomainError("a global bound has no window to extend")


def inverse_bound(f: ScalingFunction, b: ScalingBound, verify: bool = True) -> ScalingBound:
    """Bound satisfied by the generalized inverse of ``f``.

    L_a(beta, c) maps to U_{f(a)}(1/beta, c**(-1/beta)) and U to L with the
    reciprocal transform; above-window variants map the same way.  When
    ``verify`` is set, the mapped bound is grid-checked against the numeric
    generalized inverse.
    """
    new_exp = 1.0 / b.exponent
    new_const = b.constant ** (-1.0 / b.exponent)
    new_side = "upper" if b.side == "lower" else "lower"
    if b.window == "global":
        mapped = ScalingBound(new_side, new_exp, new_const, "global", math.inf)
    else:
        thr = float(f(b.threshold))
        mapped = ScalingBound(new_side, new_exp, new_const, b.window, thr)
    if verify:
        ginv = from_callable(
            lambda t: np.vectorize(lambda x: generalized_inverse(f, float(x)))(t),
            label=f"inverse({f.label})",
        )
        # verify on the image of the original window, clipped to sane range
        lo, hi = DEFAULT_SPAN
        flo, fhi = float(f(lo)), float(f(hi))
        rep = check_scaling(ginv, mapped, span=(flo * 1.01, fhi * 0.99), per_decade=8)
        if not rep.passed:
            raise ViolationError(
                f"mapped bound failed verification (worst {rep.worst_ratio:g} at {rep.witness})",
                witness=rep.witness,
                ratio=rep.worst_ratio,
            )
    return mapped


def power_compose_constant(
    h: ScalingFunction,
    k: float,
    c1: float,
    m: float,
    regime: str = "small",
    grid=None,
    rtol: float = 1e-9,
) -> float:
    """Constant for ``h(r**m) ~ h(r)`` derived from the ``h(r**k) ~ h(r)`` one.

    With ``c1**-1 h(r) <= h(r**k) <= c1 h(r)`` on the regime (r < 1 or r > 1),
    the chain argument gives ``c2 = c1`` for m in [1, k], ``c1**ceil(log_k m)``
    for m > k and ``c1**n`` with the minimal n such that ``m k**n >= 1`` for
    m < 1.  Both the hypothesis and the conclusion are grid-checked.
    """
    if k <= 1 or c1 <= 1:
        raise DomainError("need k > 1 and c1 > 1")
    if m <= 0:
        raise DomainError("need m > 0")
    if grid is None:
        grid = geometric_grid(1e-6, 0.99, 16) if regime == "small" else geometric_grid(1.01, 1e6, 16)
    grid = np.asarray(grid, dtype=float)

    base = h(grid)
    comp = h(grid**k)
    if np.any(comp > c1 * base * (1 + rtol)) or np.any(comp < base / c1 * (1 - rtol)):
        j = int(np.argmax(np.maximum(comp / base, base / comp)))
        raise ViolationError(
            f"hypothesis c1={c1:g} fails for k={k:g} at r={grid[j]:g}",
            witness=float(grid[j]),
            ratio=float(max(comp[j] / base[j], base[j] / comp[j])),
        )

    if 1.0 <= m <= k:
        c2 = c1
    elif m > k:
        n = math.ceil(math.log(m) / math.log(k) - 1e-12)
        c2 = c1**n
    else:
        n = math.ceil(math.log(1.0 / m) / math.log(k) - 1e-12)
        c2 = c1**n

    target = h(grid**m)
    if np.any(target > c2 * base * (1 + rtol)) or np.any(target < base / c2 * (1 - rtol)):
        j = int(np.argmax(np.maximum(target / base, base / target)))
        raise ViolationError(
            f"derived constant c2={c2:g} fails for m={m:g} at r={grid[j]:g}",
            witness=float(grid[j]),
            ratio=float(max(target[j] / base[j], base[j] / target[j])),
        )
    return float(c2)
