"""The sup-transform ``T(phi)(r, t) = sup_s [r/s - t/phi(s)]`` and relatives.

For a non-decreasing ``phi`` with a verified global upper bound
``U(alpha2, cU)`` and a windowed lower bound ``L_a(delta, CL)`` with
``delta > 1``, the supremum over ``s`` can be restricted — when
``r >= 2 cU phi^{-1}(t)`` — to the bracket

    [ b r**(-d1) phi^{-1}(t)**(d1+1) ,  2 phi^{-1}(t) ],
    d1 = 1/(delta-1),  b = (CL/cU)**d1,

where it is also at least ``r / (2 phi^{-1}(t))``.  Outside that regime a
wide log-grid scan is used instead.  The optimizer is a 256-point log-grid
scan refined by golden-section search; the scan guards against the mild
multimodality piecewise inputs can produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .scalefn import ScalingBound, ScalingFunction, generalized_inverse

#: default relative tolerance of the supremum search
EPS_OPT = 1e-9

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TransformResult:
    value: float
    argmax: float
    bracket: tuple[float, float]
    tag: str  # "bracketed" | "wide-scan"


def _golden_max(obj, lo: float, hi: float, iters: int = 90):
    """Golden-section maximization in log coordinates on [lo, hi]."""
    a, b = math.log(lo), math.log(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = obj(math.exp(c)), obj(math.exp(d))
    for _ in range(iters):
        if b - a < 1e-14:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = obj(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = obj(math.exp(d))
    x = math.exp((a + b) / 2.0)
    return x, obj(x)


def sup_transform(
    phi: ScalingFunction,
    r: float,
    t: float,
    upper: ScalingBound | None = None,
    lower: ScalingBound | None = None,
    n_grid: int = 256,
    rtol: float = EPS_OPT,
) -> TransformResult:
    """Supremum of ``s -> r/s - t/phi(s)`` with its location.

    ``upper`` is the verified global U(alpha2, cU) for ``phi``; ``lower`` a
    (possibly windowed) L(delta, CL) with delta > 1.  When both are present
    and ``r >= 2 cU phi^{-1}(t)`` the search runs on the tight bracket above,
    otherwise on a wide scan spanning ``[1e-6, 1e2] * phi^{-1}(t)``.  The raw
    scan value is returned; it may be near zero for small ``r``.
    """
    if r <= 0 or t <= 0:
        raise DomainError("sup_transform requires r > 0 and t > 0")
    inv = generalized_inverse(phi, t)

    def obj(s):
        return r / s - t / float(phi(s))

    tag = "wide-scan"
    if (
        upper is not None
        and lower is not None
        and lower.side == "lower"
        and lower.exponent > 1.0
        and r >= 2.0 * upper.constant * inv
    ):
        d1 = 1.0 / (lower.exponent - 1.0)
        b = (lower.constant / upper.constant) ** d1
        lo = b * r ** (-d1) * inv ** (d1 + 1.0)
        hi = 2.0 * inv
        tag = "bracketed"
    else:
        lo, hi = 1e-6 * inv, 1e2 * inv

    grid = np.geomspace(lo, hi, n_grid)
    vals = r / grid - t / phi(grid)
    j = int(np.argmax(vals))
    ref_lo = grid[max(j - 1, 0)]
    ref_hi = grid[min(j + 1, n_grid - 1)]
    if ref_lo == ref_hi:
        s_star, v_star = float(grid[j]), float(vals[j])
    else:
        s_star, v_star = _golden_max(obj, float(ref_lo), float(ref_hi))
        if vals[j] > v_star:
            s_star, v_star = float(grid[j]), float(vals[j])
    return TransformResult(value=float(v_star), argmax=float(s_star), bracket=(float(lo), float(hi)), tag=tag)


def f1_lower_bound(
    F: ScalingFunction,
    r: float,
    t: float,
    gamma1: float,
    gamma2: float,
    c_F: float = 1.0,
) -> float:
    """Explicit-constant lower bound for the sup-transform of ``F``.

    For strictly increasing ``F`` with ``L(gamma1, 1/c_F)`` and
    ``U(gamma2, c_F)``, taking ``s = r * (2 c_F t / F(r))**(1/(gamma-1))``
    (gamma = gamma2 when ``F(r) >= 2 c_F t``, else gamma1) gives

        T(F)(r, t) >= (x**(1/(gamma1-1)) ^ x**(1/(gamma2-1))) / 2,
        x = F(r) / (2 c_F t),

    valid for all r, t > 0 and sharp for exact squares (equality when
    ``F(s) = s**2``).
    """
    if gamma1 <= 1 or gamma2 < gamma1 or c_F < 1:
        raise DomainError("need 1 < gamma1 <= gamma2 and c_F >= 1")
    x = float(F(r)) / (2.0 * c_F * t)
    return 0.5 * min(x ** (1.0 / (gamma1 - 1.0)), x ** (1.0 / (gamma2 - 1.0)))


def transform_scaling_check(
    phi: ScalingFunction,
    r: float,
    t: float,
    c1: float,
    c2: float,
    upper: ScalingBound | None = None,
    lower: ScalingBound | None = None,
) -> tuple[str, float]:
    """Probes the two boundedness regimes of the sup-transform.

    Off-diagonal regime (``r >= 2 cU phi^{-1}(t)``): returns the ratio
    ``T(phi)(c1 r, c2 t) / T(phi)(r, t)``, which stays uniformly bounded.
    Near-diagonal regime (smaller r): returns the raw value
    ``T(phi)(r, t)``, itself uniformly bounded over the grid.
    """
    if r <= 0 or t <= 0 or c1 <= 0 or c2 <= 0:
        raise DomainError("all arguments must be positive")
    inv = generalized_inverse(phi, t)
    cU = upper.constant if upper is not None else 1.0
    if r >= 2.0 * cU * inv:
        base = sup_transform(phi, r, t, upper=upper, lower=lower)
        moved = sup_transform(phi, c1 * r, c2 * t, upper=upper, lower=lower)
        if base.value <= 0:
            raise DomainError("degenerate base value in the off-diagonal regime")
        return "off-diagonal", moved.value / base.value
    return "near-diagonal", sup_transform(phi, r, t, upper=upper, lower=lower).value


class KFunction:
    """Running supremum ``K(r) = sup_{0 < s <= r} phi(s)/s`` and its inverse.

    Requires a verified lower bound with exponent > 1 whose window reaches
    down to zero (so the chord slope vanishes at the origin and the sup is
    finite).  For functions that only scale above a threshold, pass the
    power-regularized version from :func:`jumplab.construct.build_tilde_phi`.
    """

    def __init__(
        self,
        phi: ScalingFunction,
        lower: ScalingBound,
        span=(1e-9, 1e9),
        per_decade: int = 64,
    ):
        if lower.side != "lower" or lower.exponent <= 1.0:
            raise DomainError("K function needs a lower scaling bound with exponent > 1")
        if lower.window == "above":
            raise DomainError(
                "above-threshold lower bounds do not control phi(s)/s near zero; "
                "regularize the function below the threshold first"
            )
        self.phi = phi
        self.lower = lower
        self._grid = np.geomspace(span[0], span[1], int(per_decade * math.log10(span[1] / span[0])) + 1)
        ratios = phi(self._grid) / self._grid
        if not np.all(np.isfinite(ratios)):
            raise DomainError("phi(s)/s not finite on the tabulation grid")
        self._prefix = np.maximum.accumulate(ratios)

    def __call__(self, r):
        arr = np.asarray(r, dtype=float)
        if np.any(arr <= 0):
            raise DomainError("K function requires r > 0")
        idx = np.searchsorted(self._grid, arr, side="right")
        base = np.where(idx > 0, self._prefix[np.maximum(idx - 1, 0)], 0.0)
        exact = np.asarray(self.phi(arr), dtype=float) / arr
        out = np.maximum(base, exact)
        return float(out) if np.ndim(r) == 0 else out

    def inverse(self, u: float, rtol: float = 1e-12) -> float:
        """Generalized inverse ``inf{s : K(s) > u}``."""
        return generalized_inverse(self, u, rtol=rtol)


def k_function(phi: ScalingFunction, lower: ScalingBound, **kw) -> KFunction:
    return KFunction(phi, lower, **kw)


def sck_compare(
    phi: ScalingFunction,
    r: float,
    t: float,
    kfn: KFunction,
    upper: ScalingBound,
    lower: ScalingBound | None = None,
    horizon: float = 1.0,
) -> float:
    """Ratio ``[r / K^{-1}(t/r)] / T(phi)(r, t)`` on the admissible regime.

    Admissible means ``t <= horizon`` and ``r >= 2 cU**2 phi^{-1}(t)``; the
    two quantities are then comparable with a constant independent of (r, t).
    """
    if t > horizon:
        raise DomainError(f"regime requires t <= {horizon:g}")
    inv = generalized_inverse(phi, t)
    if r < 2.0 * upper.constant**2 * inv:
        raise DomainError("regime requires r >= 2 cU^2 phi^{-1}(t)")
    lhs = r / kfn.inverse(t / r)
    rhs = sup_transform(phi, r, t, upper=upper, lower=lower or kfn.lower).value
    if rhs <= 0:
        raise DomainError("sup-transform vanished on the admissible regime")
    return lhs / rhs
