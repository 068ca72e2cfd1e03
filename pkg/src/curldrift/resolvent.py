"""Radial-quadrature evaluation of the first-chaos resolvent quantities.

These are the analytic comparators for the Monte Carlo output: the base
inner product against the free resolvent, its level-n truncated variant
with the scalar enhancement surrogate in the denominator, the Laplace
transform of measured drift second moments, and the residual between the
two-dimensional spectral integral and its one-dimensional radial reduction
(whose uniform boundedness in eps underpins the surrogate replacement).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .analytic import AnalyticTable, log_rescale
from .mollifier import MollifierSpec, make_mollifier
from .params import ModelParams

LAPLACE_MIN_LAMBDA_T = 3.0


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-8
    max_subdivisions: int = 200
    substitution: str = "direct"   # or "rho_substitution"

    def __post_init__(self):
        if not 0.0 < self.rel_tol <= 1e-3:
            raise ValueError("rel_tol must lie in (0, 1e-3]")
        if self.substitution not in ("direct", "rho_substitution"):
            raise ValueError(f"unknown substitution {self.substitution!r}")
        if self.max_subdivisions < 10:
            raise ValueError("max_subdivisions must be >= 10")


@dataclass(frozen=True)
class ResolventValue:
    value: float
    eps: float
    lam: float
    n: int            # truncation index, 0 for the base quantity
    est_error: float


def _checked_quad(f, a, b, q: QuadratureSpec, points=None):
    val, err = quad(f, a, b, limit=q.max_subdivisions,
                    epsrel=0.1 * q.rel_tol, epsabs=1e-300, points=points)
    if err > q.rel_tol * max(abs(val), 1e-300):
        raise RuntimeError(
            f"quadrature failure: estimated error {err:.3e} exceeds "
            f"rel_tol * |value| = {q.rel_tol * abs(val):.3e}")
    return val, err


def base_diffusivity(p: ModelParams, q: QuadratureSpec = QuadratureSpec(),
                     m: MollifierSpec | None = None) -> ResolventValue:
    """Chaos-1 inner product against the free resolvent.

    Radial form (angular average of the projector absorbed as 1/2):

        (pi lh^2 / log(1/eps)) * int_0^cutoff V(s) s / (eps^2 lam + nu^2 s^2 / 2) ds

    Tends to 2 pi lh^2 / nu^2 as eps -> 0 at O(1/log(1/eps)) rate.
    """
    if m is None:
        m = make_mollifier("compact_bump", p.eps)
    if p.lambda_hat == 0.0:
        return ResolventValue(0.0, p.eps, p.lam, 0, 0.0)
    pref = math.pi * p.lambda_hat**2 / math.log(1.0 / p.eps)
    eps2lam = p.eps**2 * p.lam
    if q.substitution == "direct":
        def f(s):
            return float(m.v_hat(s)) * s / (eps2lam + 0.5 * p.nu**2 * s * s)
        val, err = _checked_quad(f, 0.0, m.cutoff, q)
    else:
        # rho = eps^2 lam + nu^2 s^2 / 2 tames the near-origin 1/rho shape
        nu2 = p.nu**2

        def f(rho):
            s = math.sqrt(2.0 * (rho - eps2lam) / nu2)
            return float(m.v_hat(s)) / (nu2 * rho)
        val, err = _checked_quad(f, eps2lam, eps2lam + 0.5 * nu2 * m.cutoff**2, q)
    return ResolventValue(pref * val, p.eps, p.lam, 0, pref * err)


def truncated_diffusivity(n: int, p: ModelParams, q: QuadratureSpec,
                          tables: AnalyticTable,
                          m: MollifierSpec | None = None) -> ResolventValue:
    """Level-n truncated inner product with the scalar enhancement surrogate.

        (lh^2 / (2 log(1/eps))) * int_{R^2} V(p) /
            (eps^2 lam + (nu^2/2)|p|^2 (1 + (4/nu^4) G_n(log_rescale(rho_1/eps^2)))) dp

    reduced to a radial integral; converges to truncated_limit(n) as
    eps -> 0.  Requires `tables` to cover level n up to log_rescale(lam).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if m is None:
        m = make_mollifier("compact_bump", p.eps)
    if tables.max_index < n:
        raise ValueError(f"enhancement table covers levels <= {tables.max_index} < n = {n}")
    arg_max = float(log_rescale(p.lam, p))
    if tables.x_grid[-1] < arg_max * (1 - 1e-12):
        raise ValueError(
            f"enhancement table range {tables.x_grid[-1]:g} does not cover "
            f"log_rescale(lam) = {arg_max:g}")
    if p.lambda_hat == 0.0:
        return ResolventValue(0.0, p.eps, p.lam, n, 0.0)
    xg = tables.x_grid
    # C^2 interpolant: piecewise-linear kinks defeat the adaptive error estimate
    g_of = CubicSpline(xg, tables.values[n])
    x_top = xg[-1]
    pref = p.lambda_hat**2 / (2.0 * math.log(1.0 / p.eps)) * 2.0 * math.pi
    eps2lam = p.eps**2 * p.lam
    four_nu4 = 4.0 / p.nu**4
    lr_pref = math.pi * p.lambda_hat**2 / abs(math.log(p.eps**2))

    def f(s):
        rho1 = eps2lam + 0.5 * p.nu**2 * s * s
        # log_rescale evaluated at rho1/eps^2: the eps^2 factors cancel
        arg = min(lr_pref * math.log1p(1.0 / rho1), x_top)
        g = float(g_of(arg))
        return float(m.v_hat(s)) * s / (eps2lam + 0.5 * p.nu**2 * s * s * (1.0 + four_nu4 * g))

    val, err = _checked_quad(f, 0.0, m.cutoff, q)
    return ResolventValue(pref * val, p.eps, p.lam, n, pref * err)


def laplace_comparator(times, values, p: ModelParams) -> float:
    """Numeric Laplace transform of measured E|N_t|^2 at the model's lam.

    Trapezoid over the data window plus a linear-growth tail beyond the
    last sample, integrated in closed form.  Rejected when lam * T < 3
    (the extrapolated tail would dominate the estimate).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.size != v.size or t.size < 2:
        raise ValueError("times and values must be matching 1-d arrays")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly ascending")
    if t[0] < 0:
        raise ValueError("times must be non-negative")
    lam = p.lam
    t_final = float(t[-1])
    if lam * t_final < LAPLACE_MIN_LAMBDA_T:
        raise ValueError(
            f"lam * T_final = {lam * t_final:.3g} < {LAPLACE_MIN_LAMBDA_T}: "
            "tail extrapolation would dominate; extend the data window")
    if t[0] > 0.0:
        t = np.concatenate([[0.0], t])
        v = np.concatenate([[0.0], v])
    window = float(np.trapezoid(np.exp(-lam * t) * v, t))
    slope = v[-1] / t_final if t_final > 0 else 0.0
    tail = slope * math.exp(-lam * t_final) * (t_final / lam + 1.0 / lam**2)
    return window + tail


def _validate_conditions(h, h_plus, arg_max: float):
    sample = np.linspace(0.0, arg_max, 65)
    hv = np.asarray([float(h(x)) for x in sample])
    hp = np.asarray([float(h_plus(x)) for x in sample])
    if np.any(hv < 1.0 - 1e-12):
        raise ValueError("H must satisfy H >= 1 on the relevant range")
    if np.any(hp < -1e-12):
        raise ValueError("H_plus must satisfy H_plus >= 0 on the relevant range")


def replacement_residual(p: ModelParams, x_sum, h, h_plus,
                         q: QuadratureSpec = QuadratureSpec(),
                         m: MollifierSpec | None = None) -> float:
    """|2-d spectral integral - 1-d radial reduction| for the given pair (H, H+).

    x_sum is the (already eps-scaled) mode-sum offset; only its norm enters,
    so the residual is exactly rotation invariant.  The 2-d integrand is

        V(q) sin^2(theta) * (lam_e + Gamma H+(L(Gamma_1/eps^2)))
                          / (lam_e + Gamma H(L(Gamma_1/eps^2)))^2

    with Gamma = (nu^2/2)|x_sum + q|^2, lam_e = eps^2 lam; the sin^2 factor
    and the pi/nu^2 coefficient of the 1-d side are dropped/doubled in the
    centered (x_sum = 0) variant.
    """
    if m is None:
        m = make_mollifier("compact_bump", p.eps)
    lam_e = p.eps**2 * p.lam
    nu2 = p.nu**2
    arg_max = float(log_rescale(p.lam, p))
    _validate_conditions(h, h_plus, arg_max * 1.01 + 1.0)
    lr_pref = math.pi * p.lambda_hat**2 / abs(math.log(p.eps**2))

    def gfun(gamma: float) -> float:
        gamma1 = lam_e + gamma
        arg = lr_pref * math.log1p(1.0 / gamma1)
        return (lam_e + gamma * float(h_plus(arg))) / (lam_e + gamma * float(h(arg))) ** 2

    off = float(np.hypot(*np.asarray(x_sum, dtype=float)))
    if off == 0.0:
        def f2(s):
            return float(m.v_hat(s)) * s * gfun(0.5 * nu2 * s * s)
        i2d, _ = _checked_quad(f2, 0.0, m.cutoff, q)
        i2d *= 2.0 * math.pi
        coeff = 2.0 * math.pi / nu2
        rho_lo = lam_e
    else:
        def f2(s):
            def ang(theta):
                d2 = off * off + s * s + 2.0 * off * s * math.cos(theta)
                return math.sin(theta) ** 2 * gfun(0.5 * nu2 * d2)
            val, _ = quad(ang, 0.0, math.pi, limit=q.max_subdivisions,
                          epsrel=0.1 * q.rel_tol, points=[math.pi])
            return float(m.v_hat(s)) * s * 2.0 * val   # symmetry in theta
        i2d, _ = _checked_quad(f2, 0.0, m.cutoff, q, points=[min(off, m.cutoff)])
        coeff = math.pi / nu2
        rho_lo = lam_e + 0.5 * nu2 * off * off

    def f1(rho):
        arg = lr_pref * math.log1p(1.0 / rho)
        return float(h_plus(arg)) / (rho * (rho + 1.0) * float(h(arg)) ** 2)

    sign = 1.0
    a, b = rho_lo, 1.0
    if a > b:
        a, b, sign = b, a, -1.0
    i1d, _ = _checked_quad(f1, a, b, q)
    return abs(i2d - sign * coeff * i1d)
