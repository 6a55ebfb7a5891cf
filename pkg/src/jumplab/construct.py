"""Scale-function construction from a walk scale F and a rate function psi.

The scale function is ``Phi(r) = F(r) / I(r)`` with
``I(r) = int_0^r dF(s)/psi(s)``, defined whenever the integral converges at
zero.  ``I`` is computed once on a log grid by panelwise Gauss-Kronrod
quadrature; the singular head below the grid uses the iterated-log
substitution ``s = exp(-exp(w))`` which turns every admissible integrand
into a tame power decay in ``w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, InconclusiveError, QuadratureError
from .scalefn import (
    ScalingBound,
    ScalingFunction,
    check_scaling,
    fit_scaling_constant,
    geometric_grid,
    lower_bound,
    tabulated,
)

#: default relative quadrature tolerance
EPS_QUAD = 1e-8


def derivative_of(F: ScalingFunction):
    """Analytic derivative when declared, centered differences otherwise."""
    if F.derivative is not None:
        return F.derivative

    def diff(s):
        s = np.asarray(s, dtype=float)
        h = 1e-5
        return (F(s * (1 + h)) - F(s * (1 - h))) / (2 * h * s)

    return diff


def _integrand(F: ScalingFunction, psi: ScalingFunction):
    dF = derivative_of(F)

    def g(s):
        s = np.asarray(s, dtype=float)
        return dF(s) / psi(s)

    return g


# ---------------------------------------------------------------------------
# integrability of dF/psi at zero (and at infinity, for the moment test)


def _profile_converges(power_gap: float, log_gap: float, loglog_gap: float) -> bool:
    """Convergence of ``int_0 s**(p-1) log(1/s)**(-a) loglog(1/s)**(-b) ds``.

    Bertrand hierarchy with gaps (p, a, b): converges iff p > 0, or p == 0 and
    a > 1, or p == 0, a == 1 and b > 1.
    """
    tol = 1e-12
    if power_gap > tol:
        return True
    if power_gap < -tol:
        return False
    if log_gap > 1 + tol:
        return True
    if log_gap < 1 - tol:
        return False
    return loglog_gap > 1 + tol


@dataclass(frozen=True)
class IntegrabilityReport:
    converges: bool
    integral: float | None
    mode: str  # "profile" | "ratio-test"
    blocks_used: int = 0


def check_integrability(
    F: ScalingFunction,
    psi: ScalingFunction,
    blocks: int = 60,
    at: str = "zero",
) -> IntegrabilityReport:
    """Does ``int dF/psi`` converge at zero (``at="zero"``) or infinity?

    Decided exactly from the declared local profiles when both functions
    carry them (this covers the power and power-log kinds, including the
    borderline where the power indices tie and only the log corrections
    decide).  Otherwise a dyadic tail-block ratio test runs; ratios that do
    not stabilize on either side of 1 raise :class:`InconclusiveError`.
    Returns the quadrature value of ``int_0^1`` (resp. ``int_1^inf``) when
    convergent.
    """
    if at not in ("zero", "inf"):
        raise DomainError("at must be 'zero' or 'inf'")
    profF = F.zero_profile if at == "zero" else F.inf_profile
    profP = psi.zero_profile if at == "zero" else psi.inf_profile
    g = _integrand(F, psi)

    if profF is not None and profP is not None:
        # integrand ~ s**(pF-1-pP) * logcorr; near zero the log arguments are
        # log(1/s), near infinity log(s) -- the convergence rule mirrors.
        power_gap = profF[0] - profP[0]
        log_gap = profP[1] - profF[1]
        loglog_gap = profP[2] - profF[2]
        if at == "inf":
            power_gap = -power_gap
        conv = _profile_converges(power_gap, log_gap, loglog_gap)
        value = _reference_integral(F, psi, at) if conv else None
        return IntegrabilityReport(conv, value, "profile")

    # numeric fallback: dyadic blocks toward the singular end
    vals = []
    for k in range(blocks):
        if at == "zero":
            a, b = 2.0 ** -(k + 1), 2.0**-k
        else:
            a, b = 2.0**k, 2.0 ** (k + 1)
        v, _ = integrate.quad(lambda s: float(g(s)), a, b, limit=100)
        vals.append(v)
    vals = np.asarray(vals)
    tail = vals[-16:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = tail[1:] / tail[:-1]
    ratios = ratios[np.isfinite(ratios)]
    if ratios.size == 0 or float(tail.max()) == 0.0:
        return IntegrabilityReport(True, _reference_integral(F, psi, at), "ratio-test", blocks)
    rmax, rmin = float(ratios.max()), float(ratios.min())
    if rmax < 0.985:
        return IntegrabilityReport(True, _reference_integral(F, psi, at), "ratio-test", blocks)
    if rmin >= 0.999:
        return IntegrabilityReport(False, None, "ratio-test", blocks)
    raise InconclusiveError(
        f"tail block ratios in [{rmin:.4f}, {rmax:.4f}] did not stabilize "
        f"after {blocks} dyadic blocks"
    )


def _reference_integral(F, psi, at):
    if at == "zero":
        return integral_to(F, psi, 1.0)
    g = _integrand(F, psi)
    v, err = integrate.quad(lambda u: float(g(math.exp(u))) * math.exp(u), 0.0, np.inf, limit=400)
    return float(v)


def _log_ratio(F: ScalingFunction, psi: ScalingFunction):
    """``u -> ln[F'(e^u) e^u / psi(e^u)]`` when both sides expose split
    log forms (all structured kinds do); None otherwise.

    The power coefficients are combined before being multiplied by ``u``:
    at iterated-log depths ``|u|`` exceeds 1/ulp of the log corrections, so
    plain composition would cancel catastrophically.
    """
    if F.log_deriv_parts is None or psi.log_eval_parts is None:
        return None

    def lr(u):
        pF, remF = F.log_deriv_parts(u)
        pP, remP = psi.log_eval_parts(u)
        return (pF + 1.0 - pP) * u + (remF - remP)

    return lr


def integral_to(F: ScalingFunction, psi: ScalingFunction, r: float, eps: float = EPS_QUAD) -> float:
    """``I(r) = int_0^r dF(s)/psi(s)`` with the singular head at 0 handled
    by the double-log substitution ``s = exp(-exp(w))``.

    With log-space evaluators the head reaches arbitrarily deep scales (the
    borderline integrals carry visible mass at s far below float range);
    opaque callables fall back to direct evaluation, which stops at the
    underflow floor.
    """
    g = _integrand(F, psi)
    head_top = min(r, 0.25)
    w0 = math.log(math.log(1.0 / head_top))
    lr = _log_ratio(F, psi)

    if lr is not None:

        def head_integrand(w):
            if w > 690.0:
                return 0.0
            val = lr(-math.exp(w)) + w
            return math.exp(val) if val < 700.0 else math.inf

    else:

        def head_integrand(w):
            ew = math.exp(min(w, 690.0))
            if ew > 700.0:  # s = exp(-ew) underflows; cannot probe deeper
                return 0.0
            s = math.exp(-ew)
            return float(g(s)) * s * ew

    head, head_err = integrate.quad(head_integrand, w0, np.inf, limit=400, epsrel=eps, epsabs=0.0)
    total = head
    if r > head_top:
        # remaining panels in plain log coordinates, split at breakpoints
        knots = [head_top] + [b for b in sorted(set(F.breakpoints) | set(psi.breakpoints)) if head_top < b < r] + [r]
        for a, b in zip(knots[:-1], knots[1:]):
            v, verr = integrate.quad(
                lambda u: float(g(math.exp(u))) * math.exp(u),
                math.log(a),
                math.log(b),
                limit=200,
                epsrel=eps,
                epsabs=0.0,
            )
            total += v
            head_err += verr
    if not math.isfinite(total) or total <= 0:
        raise QuadratureError(f"integral to r={r:g} did not evaluate to a positive finite value")
    if head_err > 100 * eps * total + 1e-300:
        raise QuadratureError(f"quadrature error estimate {head_err:g} too large for I({r:g})={total:g}")
    return float(total)


# ---------------------------------------------------------------------------
# the scale construction


@dataclass(frozen=True)
class ScaleConstruction:
    F: ScalingFunction
    psi: ScalingFunction
    Phi: ScalingFunction
    grid: np.ndarray
    integral: np.ndarray  # I on the grid
    comparability: float | None  # sup psi/Phi when beta2 < gamma1, else None

    def integral_at(self, r: float) -> float:
        return float(np.exp(np.interp(math.log(r), np.log(self.grid), np.log(self.integral))))


def build_phi(
    F: ScalingFunction,
    psi: ScalingFunction,
    span=(1e-6, 1e6),
    per_decade: int = 64,
    eps: float = EPS_QUAD,
) -> ScaleConstruction:
    """Builds ``Phi = F / I`` as a tabulated scaling function.

    Raises :class:`DomainError` when the defining integral diverges at zero.
    The returned construction has been checked against its structural
    invariants: ``Phi < psi`` pointwise, ``Phi`` non-decreasing, and
    ``Phi(R)/Phi(r) <= F(R)/F(r)``.
    """
    rep = check_integrability(F, psi)
    if not rep.converges:
        raise DomainError("int_0 dF/psi diverges; the scale construction is undefined")

    grid = geometric_grid(*span, per_decade=per_decade)
    g = _integrand(F, psi)
    I = np.empty_like(grid)
    I[0] = integral_to(F, psi, float(grid[0]), eps=eps)
    for i in range(1, grid.size):
        knots = [grid[i - 1]] + [
            b for b in sorted(set(F.breakpoints) | set(psi.breakpoints)) if grid[i - 1] < b < grid[i]
        ] + [grid[i]]
        acc = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            v, _ = integrate.quad(
                lambda u: float(g(math.exp(u))) * math.exp(u),
                math.log(a),
                math.log(b),
                limit=100,
                epsrel=eps,
                epsabs=0.0,
            )
            acc += v
        I[i] = I[i - 1] + acc

    Fv = F(grid)
    phi_vals = Fv / I
    Phi = tabulated(grid, np.maximum.accumulate(phi_vals), label=f"scale({F.label},{psi.label})")

    # invariants
    psiv = psi(grid)
    if np.any(phi_vals >= psiv * (1 + 1e-9)):
        j = int(np.argmax(phi_vals / psiv))
        raise QuadratureError(f"Phi >= psi at r={grid[j]:g}: construction inconsistent")
    if np.any(np.diff(phi_vals) < -1e-9 * phi_vals[:-1]):
        raise QuadratureError("constructed Phi is not non-decreasing on the grid")
    hh = phi_vals / Fv
    if np.any(hh[1:] > hh[:-1] * (1 + 1e-9)):
        raise QuadratureError("Phi(R)/Phi(r) <= F(R)/F(r) violated on the grid")

    comparability = None
    if F.zero_profile is not None and F.inf_profile is not None and psi.zero_profile is not None and psi.inf_profile is not None:
        gamma1 = min(F.zero_profile[0], F.inf_profile[0])
        beta2 = max(psi.zero_profile[0], psi.inf_profile[0])
        if beta2 < gamma1 - 1e-12:
            # upper rate index below the lower walk index: rate ~ scale
            comparability = float(np.max(psiv / phi_vals))

    return ScaleConstruction(F=F, psi=psi, Phi=Phi, grid=grid, integral=I, comparability=comparability)


def doubling_constant(F: ScalingFunction, psi: ScalingFunction, factor: float = 4.0) -> float:
    """Smallest power-of-two C with ``F(Cr) >= factor*F(r)`` and the same for psi,
    over the default grid.  Feeds the constructed lower index
    ``alpha1 = log 2 / (2 log C)``."""
    grid = geometric_grid(1e-6, 1e6, 8)
    C = 2.0
    while C < 2.0**60:
        if np.all(F(C * grid) >= factor * F(grid)) and np.all(psi(C * grid) >= factor * psi(grid)):
            return C
        C *= 2.0
    raise DomainError("no doubling constant below 2**60; functions do not scale up")


def constructed_lower_bound(construction: ScaleConstruction) -> ScalingBound:
    """Global lower bound L(alpha1, 1/2) with ``alpha1 = log2/(2 log C)``
    from the doubling constant of (F, psi); verified on the grid."""
    C = doubling_constant(construction.F, construction.psi)
    alpha1 = math.log(2.0) / (2.0 * math.log(C))
    b = lower_bound(alpha1, 0.5)
    rep = check_scaling(construction.Phi, b, span=(construction.grid[0], construction.grid[-1]))
    if not rep.passed:
        raise QuadratureError(
            f"constructed scale failed L({alpha1:g}, 1/2): worst {rep.worst_ratio:g} at {rep.witness}"
        )
    return b


def build_tilde_phi(
    Phi: ScalingFunction,
    a: float,
    alpha2: float,
    c_U: float,
    verify_lower: ScalingBound | None = None,
) -> ScalingFunction:
    """Power regularization below the threshold ``a``:

    ``tilde(s) = cU^{-1} Phi(a) (s/a)**alpha2`` for s < a, ``Phi(s)`` above.
    Always sits below ``Phi``; when ``Phi`` satisfies an above-window lower
    bound L^a(delta, CL) the regularized function satisfies the global
    L(delta, CL), which is verified when ``verify_lower`` is supplied.
    """
    if a <= 0 or alpha2 <= 0 or c_U < 1:
        raise DomainError("need a > 0, alpha2 > 0 and c_U >= 1")
    Pa = float(Phi(a))
    coef = Pa / (c_U * a**alpha2)

    def fn(s):
        s = np.asarray(s, dtype=float)
        return np.where(s < a, coef * s**alpha2, Phi.fn(s))

    tilde = ScalingFunction(
        kind="composed",
        fn=fn,
        params=(a, alpha2, c_U),
        label=f"tilde({Phi.label})",
        breakpoints=tuple(sorted(set(Phi.breakpoints) | {a})),
        zero_profile=(alpha2, 0.0, 0.0),
        inf_profile=Phi.inf_profile,
    )
    grid = geometric_grid(a * 1e-6, a * 1e6, 16)
    if np.any(tilde(grid) > Phi(grid) * (1 + 1e-9)):
        raise DomainError("regularized function exceeds the original")
    if verify_lower is not None:
        glob = ScalingBound("lower", verify_lower.exponent, verify_lower.constant, "global", math.inf)
        rep = check_scaling(tilde, glob, span=(a * 1e-6, a * 1e6))
        if not rep.passed:
            raise DomainError(
                f"regularized function failed global L({glob.exponent:g}, {glob.constant:g}): "
                f"worst {rep.worst_ratio:g} at {rep.witness}"
            )
    return tilde


# ---------------------------------------------------------------------------
# subordinator Laplace exponent


def laplace_exponent(F: ScalingFunction, psi: ScalingFunction, lam: float, eps: float = 1e-10) -> float:
    """``phi(lam) = int_0^inf (1 - e^{-lam u}) du / (u psi(F^{-1}(u)))``.

    Evaluated in log coordinates split at ``u = 1/lam``; ``expm1`` keeps the
    small-``lam u`` branch accurate without an explicit series swap.
    """
    if lam <= 0:
        raise DomainError("laplace_exponent requires lam > 0")

    def g(v):
        if v > 690.0:
            # 1/psi(F^{-1}(e^v)) in log space when available, else negligible
            if psi.log_eval_parts is not None and F.inf_profile is not None:
                gamma = F.inf_profile[0]
                p, rem = psi.log_eval_parts(v / gamma)
                val = -(p * v / gamma + rem)
                return math.exp(val) if val > -700.0 else 0.0
            return 0.0
        u = math.exp(v)
        if u == 0.0:
            return 0.0
        denom = psi(F.inverse(u))
        if denom == 0.0 or not math.isfinite(denom):
            return 0.0  # below the evaluation floor the true integrand vanishes
        return -math.expm1(-lam * u) / denom

    v0 = math.log(1.0 / lam)
    lo, e1 = integrate.quad(g, -np.inf, v0, limit=400, epsrel=eps, epsabs=0.0)
    hi, e2 = integrate.quad(g, v0, np.inf, limit=400, epsrel=eps, epsabs=0.0)
    val = lo + hi
    if not math.isfinite(val) or val <= 0:
        raise QuadratureError(f"laplace exponent at lam={lam:g} did not converge")
    if e1 + e2 > 1e4 * eps * val:
        raise QuadratureError(f"laplace exponent error estimate too large at lam={lam:g}")
    return float(val)


def laplace_sandwich_report(
    F: ScalingFunction,
    psi: ScalingFunction,
    construction: ScaleConstruction,
    lam_grid,
) -> dict:
    """Checks ``1/(2 Phi(F^{-1}(1/lam))) <= phi(lam)`` and reports the tight
    upper constant ``sup phi(lam) * Phi(F^{-1}(1/lam))``."""
    lows, upps = [], []
    for lam in np.asarray(lam_grid, dtype=float):
        val = laplace_exponent(F, psi, float(lam))
        anchor = float(construction.Phi(F.inverse(1.0 / lam)))
        lows.append(val * 2.0 * anchor)  # must be >= 1
        upps.append(val * anchor)
    lows = np.asarray(lows)
    return {
        "lower_margin": float(lows.min()),  # >= 1 iff the lower half holds
        "upper_constant": float(np.max(upps)),
        "n_points": len(lows),
    }


# ---------------------------------------------------------------------------
# moment-condition equivalences


@dataclass(frozen=True)
class MomentEquivalenceReport:
    tail_integral_finite: bool  # int_1^inf dF/psi < inf
    scale_comparable_to_F: bool  # c^-1 F <= Phi <= c F on r > 1
    implied_jump_moment_finite: bool
    observed_ratio_constant: float  # sup over [1, r_hi] of F/Phi divided by its inf


def moment_equivalence_report(
    F: ScalingFunction,
    psi: ScalingFunction,
    construction: ScaleConstruction,
    r_hi: float = 1e6,
) -> MomentEquivalenceReport:
    """Evaluates the three equivalent finite-moment conditions and asserts
    they agree: the tail integral test, the grid comparability of the
    constructed scale with F above 1, and the implied jump-moment condition."""
    tail = check_integrability(F, psi, at="inf")

    grid = geometric_grid(1.0, r_hi, 16)
    ratio = F(grid) / construction.Phi(grid)  # equals I(r), non-decreasing
    observed = float(ratio.max() / ratio.min())
    # F/Phi = I(r): bounded iff the tail integral converges.  The grid view
    # checks saturation of I over the top two decades.
    top = ratio[grid >= r_hi / 100.0]
    comparable = bool(top.max() / top.min() < 1.02)

    if comparable != tail.converges:
        raise InconclusiveError(
            f"grid comparability verdict ({comparable}) disagrees with the tail "
            f"integral test ({tail.converges}); enlarge r_hi"
        )
    return MomentEquivalenceReport(
        tail_integral_finite=tail.converges,
        scale_comparable_to_F=comparable,
        implied_jump_moment_finite=tail.converges,
        observed_ratio_constant=observed,
    )
