"""Closed-form and recursively defined diffusivity functions.

The effective diffusivity of the drift part of the motion is governed by a
family of scalar "enhancement" functions G_1, G_2, ... defined by

    G_1 = 0,    G_{j+1}(x) = integral_0^x dy / (1 + (4/nu^4) G_j(y)),

whose limit G(x) = (nu^4/4) (sqrt(8 x / nu^4 + 1) - 1) fixes the limiting
variance rate of the drift functional.  A companion family of weight
functions tracks how that variance splits across chaos levels; its partial
sums converge to sqrt(8 x / nu^4 + 1).

Tables are built by fixed-step fourth-order quadrature on a shared uniform
grid and are refined (grid doubling) until they reproduce the closed forms
of the first two nontrivial levels to the requested tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ModelParams

_DEFAULT_GRID = 8193          # odd so the grid splits into Simpson pairs
_GRID_CAP = (1 << 20) + 1     # refinement stops (with an error) here
_DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class EffectiveDiffusivity:
    c: float
    c_sq: float
    total_variance_rate: float


@dataclass(frozen=True)
class AnalyticTable:
    """Uniform-grid tabulation of an indexed function family.

    values[j] holds the j-th family member sampled on x_grid.  For the
    enhancement family the row index is the recursion level (row 0 unused,
    rows 1..max_index valid); for chaos-weight families the row index is
    the weight order starting at 0.
    """

    x_grid: np.ndarray
    values: np.ndarray
    max_index: int
    tolerance: float

    def eval(self, index: int, x) -> np.ndarray:
        """Family member `index` at points x (linear interpolation).

        Points outside [0, x_max] are rejected rather than extrapolated.
        """
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > self.x_grid[-1] * (1 + 1e-12)):
            raise ValueError("query outside the tabulated range [0, x_max]")
        return np.interp(x, self.x_grid, self.values[index])


def _require_nu(p: ModelParams):
    if p.nu <= 0.0:
        raise ValueError("this quantity is defined only for nu > 0")


def log_rescale(x, p: ModelParams):
    """Logarithmic spectral rescaling (pi lh^2 / |log eps^2|) log(1 + 1/(eps^2 x)).

    Strictly decreasing and non-negative on x > 0; at fixed x it tends to
    pi * lambda_hat^2 as eps -> 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("log_rescale requires x > 0")
    pref = math.pi * p.lambda_hat**2 / abs(math.log(p.eps**2))
    return pref * np.log1p(1.0 / (p.eps**2 * x))


def enhancement_limit(x, p: ModelParams):
    """Closed-form limit G(x) = (nu^4/4) (sqrt(8 x / nu^4 + 1) - 1) of the recursion."""
    _require_nu(p)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("enhancement_limit requires x >= 0")
    nu4 = p.nu**4
    return nu4 / 4.0 * (np.sqrt(8.0 * x / nu4 + 1.0) - 1.0)


def variance_sum_limit(x, p: ModelParams):
    """Closed-form limit sqrt(8 x / nu^4 + 1) of the chaos-weight partial sums."""
    _require_nu(p)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("variance_sum_limit requires x >= 0")
    return np.sqrt(8.0 * x / p.nu**4 + 1.0)


def effective_diffusivity(p: ModelParams) -> EffectiveDiffusivity:
    """Limiting variance rates: c^2 for the drift part, c^2 + 2 nu^2 in total."""
    c_sq = 4.0 * (math.sqrt(2.0 * math.pi * p.lambda_hat**2 + p.nu**4 / 4.0) - p.nu**2 / 2.0)
    c_sq = max(c_sq, 0.0)  # exact zero at lambda_hat = 0 despite rounding
    return EffectiveDiffusivity(
        c=math.sqrt(c_sq),
        c_sq=c_sq,
        total_variance_rate=c_sq + 2.0 * p.nu**2,
    )


def laplace_limit(p: ModelParams) -> float:
    """Laplace transform limit (4/lam^2)(sqrt(2 pi lh^2 + nu^4/4) - nu^2/2) = c^2/lam^2."""
    return effective_diffusivity(p).c_sq / p.lam**2


def _cumulative_integral(f: np.ndarray, step: float) -> np.ndarray:
    """Fourth-order cumulative integral of samples f on a uniform grid.

    Even nodes: composite Simpson.  Odd nodes: the preceding even value
    plus the 3-point half-panel rule (5, 8, -1)/12.
    """
    n = f.size
    out = np.empty_like(f)
    out[0] = 0.0
    panels = step / 3.0 * (f[0:-2:2] + 4.0 * f[1:-1:2] + f[2::2])
    out[2::2] = np.cumsum(panels)
    out[1::2] = out[0:-2:2] + step / 12.0 * (5.0 * f[0:-2:2] + 8.0 * f[1:-1:2] - f[2::2])
    return out


def _build_enhancement(n_max: int, x_grid: np.ndarray, p: ModelParams) -> np.ndarray:
    step = x_grid[1] - x_grid[0]
    rows = np.zeros((n_max + 1, x_grid.size))
    four_nu4 = 4.0 / p.nu**4
    for j in range(2, n_max + 1):
        integrand = 1.0 / (1.0 + four_nu4 * rows[j - 1])
        rows[j] = _cumulative_integral(integrand, step)
    return rows


def enhancement_table(n_max: int, x_max: float, grid_size: int = _DEFAULT_GRID,
                      p: ModelParams | None = None, tolerance: float = _DEFAULT_TOL) -> AnalyticTable:
    """Tabulate enhancement levels 1..n_max on a uniform grid over [0, x_max].

    The grid is refined by doubling until the tabulated levels 2 and 3
    match their closed forms (x and (nu^4/4) log(1 + 4x/nu^4)) to
    `tolerance`, or the grid cap is reached (which raises).
    """
    if p is None:
        raise TypeError("enhancement_table requires ModelParams")
    _require_nu(p)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if grid_size < 3:
        raise ValueError("grid_size must be >= 3")
    if x_max <= 0.0:
        raise ValueError("x_max must be > 0")
    size = int(grid_size) | 1
    nu4 = p.nu**4
    while True:
        x = np.linspace(0.0, x_max, size)
        rows = _build_enhancement(max(n_max, 3), x, p)
        err2 = np.max(np.abs(rows[2] - x))
        err3 = np.max(np.abs(rows[3] - nu4 / 4.0 * np.log1p(4.0 / nu4 * x)))
        if max(err2, err3) <= tolerance:
            break
        if size >= _GRID_CAP:
            raise RuntimeError(
                f"enhancement_table: grid cap {_GRID_CAP} reached with "
                f"residual {max(err2, err3):.3e} > tolerance {tolerance:.3e}")
        size = min(2 * (size - 1) + 1, _GRID_CAP)
    rows = rows[: n_max + 1]
    _check_enhancement_invariants(x, rows, p)
    return AnalyticTable(x_grid=x, values=rows, max_index=n_max, tolerance=tolerance)


def _check_enhancement_invariants(x: np.ndarray, rows: np.ndarray, p: ModelParams):
    slack = 1e-12 * max(1.0, x[-1])
    for j in range(1, rows.shape[0]):
        g = rows[j]
        if abs(g[0]) > slack:
            raise AssertionError(f"enhancement level {j} violates G_j(0) = 0")
        if np.any(g < -slack) or np.any(g > x + slack):
            raise AssertionError(f"enhancement level {j} violates 0 <= G_j <= x")
    if np.any(rows[1] != 0.0):
        raise AssertionError("enhancement level 1 must vanish identically")


def truncated_limit(n: int, p: ModelParams, grid_size: int = _DEFAULT_GRID) -> float:
    """Level-n truncation limit (2/nu^2) G_{n+1}(pi lambda_hat^2).

    Alternates around the closed-form value (2/nu^2) G(pi lambda_hat^2):
    odd n+1 from below, even n+1 from above.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if p.lambda_hat == 0.0:
        return 0.0
    x_star = math.pi * p.lambda_hat**2
    table = enhancement_table(n + 1, 2.0 * x_star, grid_size, p)
    # x_star is the exact middle node of [0, 2 x_star]; eval is interpolation-free
    return 2.0 / p.nu**2 * float(table.eval(n + 1, x_star))


def chaos_weight_table(n: int, j: int, x_max: float, grid_size: int = _DEFAULT_GRID,
                       p: ModelParams | None = None,
                       g_table: AnalyticTable | None = None) -> AnalyticTable:
    """Tabulate the chaos-weight family attached to level j of an order-n scheme.

    Row 0 is identically 1; row i >= 1 solves

        w_i'(x) = (4/nu^4) w_{i-1}(x) / (1 + (4/nu^4) G_{n-j+i}(x))^2

    with w_i(0) = 0.  Rows 0..j are returned (the diagonal row i = j is the
    one whose partial sums over j converge to the variance-sum limit).  Each
    row i >= 1 is checked against the simplex-volume bound
    (4/nu^4)^i x^i / i!  (the sharper (i-1)-order bound fails for row 1 of
    families whose first denominator level is trivial).
    """
    if p is None:
        raise TypeError("chaos_weight_table requires ModelParams")
    if not 1 <= j <= n:
        raise IndexError(f"level j={j} outside [1, n={n}]")
    if g_table is None:
        g_table = enhancement_table(n, x_max, grid_size, p)
    if g_table.max_index < n or g_table.x_grid[-1] < x_max * (1 - 1e-12):
        raise ValueError("supplied enhancement table does not cover (n, x_max)")
    x = g_table.x_grid
    step = x[1] - x[0]
    four_nu4 = 4.0 / p.nu**4
    rows = np.zeros((j + 1, x.size))
    rows[0] = 1.0
    for i in range(1, j + 1):
        denom = (1.0 + four_nu4 * g_table.values[n - j + i]) ** 2
        rows[i] = _cumulative_integral(four_nu4 * rows[i - 1] / denom, step)
    _check_weight_invariants(x, rows, four_nu4)
    return AnalyticTable(x_grid=x, values=rows, max_index=j, tolerance=g_table.tolerance)


def _check_weight_invariants(x: np.ndarray, rows: np.ndarray, four_nu4: float):
    slack = 1e-10 * max(1.0, x[-1])
    if np.any(rows[0] != 1.0):
        raise AssertionError("chaos-weight row 0 must be identically 1")
    for i in range(1, rows.shape[0]):
        if abs(rows[i][0]) > slack:
            raise AssertionError(f"chaos-weight row {i} violates w_i(0) = 0")
        if np.any(rows[i] < -slack):
            raise AssertionError(f"chaos-weight row {i} must be non-negative")
        bound = four_nu4**i * x**i / math.factorial(i)
        if np.any(rows[i] > bound * (1 + 1e-9) + slack):
            raise AssertionError(f"chaos-weight row {i} violates the simplex-volume bound")


def variance_sum(n: int, x, p: ModelParams, grid_size: int = _DEFAULT_GRID) -> np.ndarray:
    """Order-n partial variance sum S_n(x); converges to variance_sum_limit.

    S_n(0) = 1 for every n (only the order-0 weight survives at the origin).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr < 0.0):
        raise ValueError("variance_sum requires x >= 0")
    x_max = max(float(np.max(x_arr)), 1e-6)
    total = np.ones_like(x_arr)
    if n >= 1:
        g_table = enhancement_table(n, x_max, grid_size, p)
        for j in range(1, n + 1):
            w = chaos_weight_table(n, j, x_max, grid_size, p, g_table=g_table)
            total = total + np.interp(x_arr, w.x_grid, w.values[j])
    return total if np.ndim(x) else float(total[0])


def identity_suite(p: ModelParams, tol: float = 1e-10) -> list[dict]:
    """The three closed-form consistency identities, each checked to `tol`.

    Returns one record per identity with both sides and the deviation.
    """
    eff = effective_diffusivity(p)
    x_star = math.pi * p.lambda_hat**2
    checks = [
        ("lam^2 * laplace_limit = c^2",
         p.lam**2 * laplace_limit(p), eff.c_sq),
        ("c^2 / (2 nu^2) = S(pi lh^2) - 1",
         eff.c_sq / (2.0 * p.nu**2), float(variance_sum_limit(x_star, p)) - 1.0),
        ("(2/nu^2) G(pi lh^2) = c^2 / 4",
         2.0 / p.nu**2 * float(enhancement_limit(x_star, p)), eff.c_sq / 4.0),
    ]
    out = []
    for name, lhs, rhs in checks:
        scale = max(1.0, abs(lhs), abs(rhs))
        dev = abs(lhs - rhs) / scale
        out.append({"name": name, "lhs": lhs, "rhs": rhs,
                    "deviation": dev, "passed": bool(dev <= tol)})
    return out
