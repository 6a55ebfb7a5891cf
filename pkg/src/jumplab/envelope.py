"""Two-sided heat-kernel envelope forms as explicit functions of (t, r, volume).

Every form combines a near-diagonal branch ``1 / V(x, Phi^{-1}(t))`` with an
off-diagonal combination of the polynomial jump term ``t / (V(x, r) psi(r))``
and an exponentially decaying term driven by the sup-transform.  The
constants (c, eta, a0, a_L, a_U) are free comparability parameters; callers
fit or probe them, nothing here pins their values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, SpecError, ViolationError
from .scalefn import ScalingBound, ScalingFunction
from .transform import sup_transform

__all__ = [
    "VolumeOracle",
    "EnvelopeSpec",
    "g_envelope",
    "hk_bounds",
    "shk_bounds",
    "ghk_bounds",
    "stable_bounds",
    "branch_junction_factor",
    "green_envelope",
    "lil_h",
    "lil_h_checks",
    "example_envelope",
]


@dataclass(frozen=True)
class VolumeOracle:
    """Mass of the open ball ``B(x, r)`` as a function of (center, radius)."""

    evaluator: Callable[[object, float], float]
    label: str = ""

    def __call__(self, x, r: float) -> float:
        if r <= 0:
            raise DomainError("ball volume requires r > 0")
        v = float(self.evaluator(x, r))
        if v <= 0:
            raise DomainError(f"volume oracle returned non-positive mass at r={r:g}")
        return v

    @classmethod
    def from_function(cls, fn, label="analytic"):
        return cls(evaluator=lambda x, r: fn(r), label=label)

    @classmethod
    def from_graph(cls, g, label=""):
        return cls(evaluator=lambda x, r: g.ball_volume(x, r), label=label or f"graph:{g.name}")


@dataclass(frozen=True)
class EnvelopeSpec:
    """Constants and constituent functions of one two-sided bound."""

    Phi: ScalingFunction
    psi: ScalingFunction
    form: str = "HK"  # HK | UHK | UHKD | SHK | GHK | STABLE
    F: ScalingFunction | None = None
    c: float = 1.0
    eta: float = 1.0
    a0: float = 1.0
    a_L: float = 1.0
    a_U: float = 1.0
    phi_upper: ScalingBound | None = None  # verified U for Phi (bracketing)
    phi_lower: ScalingBound | None = None  # verified L(delta>1) for Phi
    F_upper: ScalingBound | None = None
    F_lower: ScalingBound | None = None

    def __post_init__(self):
        if self.c < 1:
            raise DomainError("comparability constant c must be >= 1")
        if self.eta <= 0 or self.a0 <= 0 or self.a_U <= 0:
            raise DomainError("eta, a0, a_U must be positive")
        if self.a_L < self.a_U:
            raise DomainError("need a_L >= a_U for a consistent two-sided form")

    def phi_inv(self, t: float) -> float:
        return self.Phi.inverse(t)

    def transform(self, r: float, t: float) -> float:
        return sup_transform(self.Phi, r, t, upper=self.phi_upper, lower=self.phi_lower).value


def g_envelope(spec: EnvelopeSpec, t: float, x, r: float, vol: VolumeOracle, a: float | None = None) -> float:
    """Off-diagonal profile: jump term plus exponentially damped diagonal.

    ``t/(V(x,r) psi(r)) + exp(-a * T(Phi)(r,t)) / V(x, Phi^{-1}(t))``.
    At ``r = 0`` only the diagonal branch survives.
    """
    if t <= 0:
        raise DomainError("g_envelope requires t > 0")
    a = spec.a0 if a is None else a
    inv = spec.phi_inv(t)
    diag = 1.0 / vol(x, inv)
    if r <= 0:
        return diag
    jump = t / (vol(x, r) * spec.psi(r))
    return jump + diag * math.exp(-a * spec.transform(r, t))


def _diag(spec: EnvelopeSpec, t: float, x, vol: VolumeOracle) -> float:
    return 1.0 / vol(x, spec.phi_inv(t))


def hk_bounds(spec: EnvelopeSpec, t: float, x, r: float, vol: VolumeOracle) -> tuple[float, float]:
    """Indicator-form lower bound against the capped off-diagonal upper bound."""
    diag = _diag(spec, t, x, vol)
    inv = spec.phi_inv(t)
    if r <= spec.eta * inv:
        lower = diag / spec.c
    else:
        lower = t / (vol(x, r) * spec.psi(r)) / spec.c
    upper = spec.c * min(diag, g_envelope(spec, t, x, r, vol, a=spec.a0))
    if lower > upper * (1 + 1e-12):
        raise SpecError(
            f"inconsistent envelope constants: lower {lower:g} > upper {upper:g} at (t={t:g}, r={r:g})"
        )
    return lower, upper


def shk_bounds(spec: EnvelopeSpec, t: float, x, r: float, vol: VolumeOracle) -> tuple[float, float]:
    """Symmetric form: both sides are ``V^{-1} ^ G``, decay rates a_L >= a_U."""
    diag = _diag(spec, t, x, vol)
    lower = min(diag, g_envelope(spec, t, x, r, vol, a=spec.a_L)) / spec.c
    upper = spec.c * min(diag, g_envelope(spec, t, x, r, vol, a=spec.a_U))
    if lower > upper * (1 + 1e-12):
        raise SpecError(f"SHK constants inconsistent at (t={t:g}, r={r:g})")
    return lower, upper


def ghk_bounds(spec: EnvelopeSpec, t: float, x, r: float, vol: VolumeOracle) -> tuple[float, float]:
    """Sub-Gaussian variant: the exponential term uses the walk scale F.

    The decay argument is ``T(F)(r, F(Phi^{-1}(t)))``.
    """
    if spec.F is None:
        raise DomainError("GHK form needs the walk scale F on the spec")
    diag = _diag(spec, t, x, vol)
    inv = spec.phi_inv(t)
    if r <= spec.eta * inv:
        lower = diag / spec.c
    else:
        lower = t / (vol(x, r) * spec.psi(r)) / spec.c
    if r <= 0:
        upper = spec.c * diag
    else:
        tF = float(spec.F(inv))
        expo = sup_transform(spec.F, r, tF, upper=spec.F_upper, lower=spec.F_lower).value
        jump = t / (vol(x, r) * spec.psi(r))
        upper = spec.c * min(diag, jump + diag * math.exp(-spec.a_U * expo))
    if lower > upper * (1 + 1e-12):
        raise SpecError(f"GHK constants inconsistent at (t={t:g}, r={r:g})")
    return lower, upper


def stable_bounds(spec: EnvelopeSpec, t: float, x, r: float, vol: VolumeOracle) -> tuple[float, float]:
    """Pure min-form ``V^{-1} ^ t/(V Phi)`` two-sided bound (rate = scale)."""
    diag = _diag(spec, t, x, vol)
    if r <= 0:
        val = diag
    else:
        val = min(diag, t / (vol(x, r) * spec.Phi(r)))
    return val / spec.c, spec.c * val


def branch_junction_factor(spec: EnvelopeSpec, t: float, x, vol: VolumeOracle) -> float:
    """Mismatch of the two lower-bound branches at ``r = eta Phi^{-1}(t)``.

    Returns ``max(branches)/min(branches)``; the factor is reported, not
    assumed, and is controlled by the volume-doubling and rate constants.
    """
    inv = spec.phi_inv(t)
    r = spec.eta * inv
    near = 1.0 / vol(x, inv)
    far = t / (vol(x, r) * spec.psi(r))
    return max(near, far) / min(near, far)


def green_envelope(
    Phi: ScalingFunction,
    r: float,
    vol: VolumeOracle,
    x,
    alpha2: float,
    d1: float,
    c: float = 1.0,
) -> tuple[float, float]:
    """Green-function envelope ``Phi(r) / V(x, r)`` up to the constant ``c``.

    Valid in the transient regime where the upper scaling index of the scale
    function sits below the reverse-doubling index of the space.
    """
    if alpha2 >= d1:
        raise DomainError(f"green envelope needs alpha2 < d1 (got {alpha2:g} >= {d1:g})")
    if r <= 0:
        raise DomainError("green envelope requires r > 0")
    core = float(Phi(r)) / vol(x, r)
    return core / c, core * c


# ---------------------------------------------------------------------------
# iterated-logarithm normalizer


def lil_h(F: ScalingFunction, t: float) -> float:
    """``h(t) = loglog(t) * F^{-1}(t / loglog(t))`` on [16, inf)."""
    if t < 16:
        raise DomainError("the LIL normalizer is defined for t >= 16")
    ll = math.log(math.log(t))
    return ll * F.inverse(t / ll)


@dataclass(frozen=True)
class LilCheckReport:
    lower_margins: dict  # (c1, t) -> F1((c1+1)h, t) - c1 loglog t
    upper_margins: dict  # (c2, t) -> bound - F1(c2 h, t)
    passed: bool


def lil_h_checks(
    F: ScalingFunction,
    c1_values,
    c2_values,
    t_grid,
    gamma1: float,
    c_F: float = 1.0,
    F_upper: ScalingBound | None = None,
    F_lower: ScalingBound | None = None,
    slack: float = 1e-7,
) -> LilCheckReport:
    """Checks the normalizer inequalities

    ``T(F)((c1+1) h(t), t) >= c1 loglog t``  and
    ``T(F)(c2 h(t), t) <= c_F**(1/(gamma1-1)) c2 loglog t``  (c2 in (0,1]).

    Equality can occur (c1 = 1 with exact squares), so the comparison allows
    a relative ``slack``.  Raises :class:`ViolationError` with the witness t.
    """
    lower_m, upper_m = {}, {}
    for t in t_grid:
        h = lil_h(F, float(t))
        ll = math.log(math.log(t))
        for c1 in c1_values:
            if c1 <= 0:
                raise DomainError("c1 values must be positive")
            val = sup_transform(F, (c1 + 1.0) * h, float(t), upper=F_upper, lower=F_lower).value
            if val < c1 * ll * (1 - slack):
                raise ViolationError(
                    f"lower normalizer inequality fails at t={t:g}, c1={c1:g}",
                    witness=float(t),
                    ratio=val / (c1 * ll),
                )
            lower_m[(c1, t)] = val - c1 * ll
        for c2 in c2_values:
            if not (0 < c2 <= 1):
                raise DomainError("c2 values must lie in (0, 1]")
            val = sup_transform(F, c2 * h, float(t), upper=F_upper, lower=F_lower).value
            bound = c_F ** (1.0 / (gamma1 - 1.0)) * c2 * ll
            if val > bound * (1 + slack):
                raise ViolationError(
                    f"upper normalizer inequality fails at t={t:g}, c2={c2:g}",
                    witness=float(t),
                    ratio=val / bound,
                )
            upper_m[(c2, t)] = bound - val
    return LilCheckReport(lower_margins=lower_m, upper_margins=upper_m, passed=True)


# ---------------------------------------------------------------------------
# closed-form example envelopes


def _loglog_small(s: float) -> tuple[float, float]:
    v = math.log(1.0 / s)
    if v <= 1.0:
        raise DomainError(f"argument {s:g} outside the small-scale log regime")
    return v, math.log(v)


def example_envelope(
    kind: str,
    params: dict,
    t: float,
    r: float,
    vol: VolumeOracle,
    x,
    psi: ScalingFunction,
    c: float = 1.0,
    a: float = 1.0,
) -> tuple[float, float]:
    """Closed-form envelopes for the three worked examples.

    LOG-SMALL (small times, log-corrected rate): params gamma > 1, kappa,
    (alpha, beta) with alpha > 1 or (alpha = 1 and beta > 1); valid for
    ``t < T`` (default 2**-4).  Uses
    ``f1(u) = log(1/u)**(1-(alpha-kappa)) * loglog(1/u)**(-beta)``:

        diag = 1/V(x, (t f1(t))**(1/gamma) ... ) with the t**(1/gamma) split,
        exp argument a * (r**gamma / (t f1(t)))**(1/(gamma-1)).

    LOG-LARGE (large times): params gamma_p > 1, kappa, beta <= 1; valid for
    ``t >= T`` (default 16); two displayed cases beta < 1 and beta = 1.

    MIXED: rate ``r**alpha`` below 1 and ``r**beta`` above with
    alpha < gamma1 <= gamma2 < beta; for ``t <= T`` the kernel matches
    ``1/V(x, t**(1/alpha)) ^ t/(V(x,r) psi(r))``.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    kind = kind.upper()

    if kind == "LOG-SMALL":
        gamma = params["gamma"]
        kappa = params.get("kappa", 0.0)
        alpha = params["alpha"]
        beta = params.get("beta", 0.0)
        T = params.get("T", 2.0**-4)
        if gamma <= 1:
            raise DomainError("LOG-SMALL needs gamma > 1")
        if not (alpha > 1 or (alpha == 1 and beta > 1)):
            raise DomainError("(alpha, beta) outside the admissible domain")
        if t >= T:
            raise DomainError(f"LOG-SMALL form is valid for t < {T:g}")
        aa = alpha - kappa
        v, lv = _loglog_small(t)
        f1 = v ** (1.0 - aa) * lv ** (-beta)
        diag_scale = (t * f1) ** (1.0 / gamma)
        diag = 1.0 / vol(x, diag_scale)
        if r <= 0:
            val = diag
        else:
            jump = t / (vol(x, r) * psi(r))
            expo = (r**gamma / (t * f1)) ** (1.0 / (gamma - 1.0))
            val = min(diag, jump + diag * math.exp(-a * expo))
        return val / c, val * c

    if kind == "LOG-LARGE":
        gamma_p = params["gamma"]
        kappa = params.get("kappa", 0.0)
        beta = params["beta"]
        T = params.get("T", 16.0)
        if gamma_p <= 1 or beta > 1:
            raise DomainError("LOG-LARGE needs gamma > 1 and beta <= 1")
        if t < T:
            raise DomainError(f"LOG-LARGE form is valid for t >= {T:g}")
        lt = math.log(t)
        if beta < 1:
            diag_scale = t ** (1.0 / gamma_p) * lt ** ((1.0 - beta - kappa) / gamma_p)
            denom = t * lt ** (1.0 - beta - kappa)
        else:
            llt = math.log(lt)
            diag_scale = t ** (1.0 / gamma_p) * lt ** (-kappa / gamma_p) * llt ** (1.0 / gamma_p)
            denom = t * llt * lt ** (-kappa)
        diag = 1.0 / vol(x, diag_scale)
        if r <= 0:
            val = diag
        else:
            logr = math.log(1.0 + r)
            jump = t / (vol(x, r) * r**gamma_p * logr ** (beta + kappa))
            expo = (r**gamma_p / denom) ** (1.0 / (gamma_p - 1.0))
            val = min(diag, jump + diag * math.exp(-a * expo))
        return val / c, val * c

    if kind == "MIXED":
        alpha = params["alpha"]
        beta = params["beta"]
        gamma1 = params["gamma1"]
        gamma2 = params.get("gamma2", gamma1)
        T = params.get("T", 1.0)
        if not (alpha < gamma1 <= gamma2 < beta):
            raise DomainError("MIXED needs alpha < gamma1 <= gamma2 < beta")
        if t > T:
            raise DomainError(f"MIXED form is stated for t <= {T:g}")
        diag = 1.0 / vol(x, t ** (1.0 / alpha))
        if r <= 0:
            val = diag
        else:
            val = min(diag, t / (vol(x, r) * psi(r)))
        return val / c, val * c

    raise DomainError(f"unknown example envelope kind: {kind}")
