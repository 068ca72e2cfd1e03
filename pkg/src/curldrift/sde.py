"""Euler-Maruyama integration under the annealed law.

Each replica owns a fresh environment realization and a fresh Brownian
path (the annealed expectation is a product over environment and noise).
Replicas are independent work units; per-replica statistics land in
preallocated arrays indexed by replica, and reductions run over that
fixed index order, so results do not depend on the number of worker
threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import GridSpec, SpectralField, derive_grid, sample_field
from .kernels import euler_maruyama_path
from .mollifier import MollifierSpec
from .params import ModelParams
from .rng import env_stream_id, noise_stream_id, stream

# max |field| is estimated as this many component standard deviations when
# deriving the drift-limited step size
OMEGA_BOUND_SIGMAS = 6.0
BOX_SAFETY_FACTOR = 10.0   # default box side per unit sqrt(variance rate * T)
BOX_HARD_MINIMUM = 6.0     # overrides below this factor are rejected
EXCURSION_FRACTION = 0.25  # |X| beyond this fraction of L flags the replica
UNRELIABLE_FLAG_FRACTION = 0.01

STATISTICS = ("N_sq", "X_sq", "X1X2", "N1", "var_X1", "var_X2")


@dataclass(frozen=True)
class SimSchedule:
    """Integration horizon, step and checkpoint times.

    Checkpoints are snapped to multiples of dt at construction.  In
    weak_coupling mode the drift prefactor comes from ModelParams; in
    fixed_coupling mode it is fixed_lambda.
    """

    t_final: float
    dt: float
    checkpoints: tuple
    mode: str = "weak_coupling"
    fixed_lambda: float | None = None

    def __post_init__(self):
        if self.mode not in ("weak_coupling", "fixed_coupling"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "fixed_coupling" and self.fixed_lambda is None:
            raise ValueError("fixed_coupling mode requires fixed_lambda")
        if not (self.t_final > 0 and self.dt > 0):
            raise ValueError("t_final and dt must be > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def checkpoint_steps(self) -> np.ndarray:
        return np.array([int(round(t / self.dt)) for t in self.checkpoints],
                        dtype=np.int64)

    def coupling(self, p: ModelParams) -> float:
        if self.mode == "fixed_coupling":
            return float(self.fixed_lambda)
        return p.coupling


@dataclass(frozen=True)
class Trajectory:
    """Checkpointed state of one replica: position, drift and noise parts."""

    times: np.ndarray
    X: np.ndarray
    N: np.ndarray
    B: np.ndarray
    replica_id: int
    env_seed: int
    noise_seed: int
    flags: np.ndarray          # excursion flag per checkpoint
    max_excursion: float


@dataclass(frozen=True)
class MomentEstimate:
    t: float
    statistic: str
    mean: float
    sem: float
    n_samples: int
    flagged_fraction: float


def derive_dt(m: MollifierSpec, nu: float, coupling: float, h: float,
              t_final: float) -> float:
    """Step size satisfying both stability rules.

    dt = min(0.1 eps^2 / nu^2, 0.25 h / (coupling * 6 sigma_omega)): the
    first resolves diffusive crossing of the correlation scale, the second
    keeps the per-step drift displacement below h/4 for fields within six
    standard deviations of their point statistics.
    """
    candidates = [t_final]
    if nu > 0:
        candidates.append(0.1 * m.eps**2 / nu**2)
    if coupling != 0.0:
        bound = abs(coupling) * OMEGA_BOUND_SIGMAS * m.component_std()
        candidates.append(0.25 * h / bound)
    return min(candidates)


def derive_box_length(variance_rate: float, t_final: float,
                      factor: float = BOX_SAFETY_FACTOR) -> float:
    """Default torus side: `factor` times the RMS displacement at t_final."""
    return factor * math.sqrt(max(variance_rate, 1e-30) * t_final)


def make_schedule(t_final: float, dt_raw: float, checkpoint_times,
                  mode: str = "weak_coupling",
                  fixed_lambda: float | None = None) -> SimSchedule:
    """Snap dt so t_final is an integer number of steps, then snap checkpoints."""
    n_steps = max(1, math.ceil(t_final / dt_raw - 1e-12))
    dt = t_final / n_steps
    steps = sorted({min(max(1, int(round(t / dt))), n_steps) for t in checkpoint_times})
    cps = tuple(s * dt for s in steps)
    return SimSchedule(t_final=t_final, dt=dt, checkpoints=cps,
                       mode=mode, fixed_lambda=fixed_lambda)


def simulate_path(field: SpectralField, p: ModelParams, sched: SimSchedule,
                  noise_seed: int, noise_id: int | None = None,
                  replica_id: int = 0) -> Trajectory:
    """Integrate one replica through the given environment.

    In weak_coupling mode the field's mollifier scale must match p.eps.
    The identity X = N + nu*B holds exactly at every checkpoint by
    construction of the integrator.
    """
    if sched.mode == "weak_coupling" and field is not None:
        if abs(field.mollifier.eps - p.eps) > 1e-12 * p.eps:
            raise ValueError("field eps is inconsistent with ModelParams.eps")
    coupling = sched.coupling(p)
    gen = stream(noise_seed, noise_stream_id(0) if noise_id is None else noise_id)
    n_steps = sched.n_steps
    normals = gen.standard_normal((n_steps, 2))
    cp_steps = sched.checkpoint_steps
    ncp = cp_steps.size
    x_out = np.zeros((ncp, 2))
    n_out = np.zeros((ncp, 2))
    b_out = np.zeros((ncp, 2))
    flag_out = np.zeros(ncp, dtype=np.bool_)
    if coupling != 0.0 and field is None:
        raise ValueError("a field realization is required when the coupling is nonzero")
    if field is not None:
        values = field.values
        h = field.spec.h
        box = field.spec.box_length
        limit = EXCURSION_FRACTION * box
        env_seed = field.seed
    else:
        # zero drift: the kernel never touches the field array
        values = np.zeros((2, 2, 2))
        h = 1.0
        box = 1.0
        limit = np.inf
        env_seed = 0
    max_exc = euler_maruyama_path(values, h, box, coupling, p.nu, sched.dt,
                                  normals, cp_steps, limit,
                                  x_out, n_out, b_out, flag_out)
    return Trajectory(times=np.asarray(sched.checkpoints), X=x_out, N=n_out,
                      B=b_out, replica_id=replica_id, env_seed=env_seed,
                      noise_seed=noise_seed, flags=flag_out,
                      max_excursion=float(max_exc))


@dataclass
class AnnealedResult:
    estimates: list
    checkpoints: np.ndarray
    flagged_fraction: np.ndarray    # per checkpoint
    unreliable: np.ndarray          # per checkpoint (> 1% replicas flagged)
    max_excursion_over_box: float
    n_replicas: int
    raw_means: dict                 # statistic -> per-checkpoint mean row
    samples: np.ndarray | None = None   # (replica, checkpoint, 6) raw values


def annealed_moments(p: ModelParams, spec: GridSpec | None, m: MollifierSpec,
                     sched: SimSchedule, n_replicas: int, master_seed: int,
                     threads: int = 1, group: int = 0,
                     keep_samples: bool = False) -> AnnealedResult:
    """Ensemble moments over fresh (environment, noise) pairs.

    Per-checkpoint sample means and standard errors of |N|^2, |X|^2, X1*X2,
    N1 and the component variances of X.  Reduction order is fixed by the
    replica index, so the result is independent of `threads`.
    """
    if n_replicas < 2:
        raise ValueError("n_replicas must be >= 2")
    coupling = sched.coupling(p)
    need_field = coupling != 0.0
    if need_field and spec is None:
        raise ValueError("a GridSpec is required when the coupling is nonzero")
    cp = np.asarray(sched.checkpoints)
    ncp = cp.size
    samples = np.empty((n_replicas, ncp, 6))   # |N|^2, |X|^2, X1X2, N1, X1, X2
    flags = np.empty((n_replicas, ncp), dtype=np.bool_)
    exc = np.empty(n_replicas)

    def run_one(r: int):
        fld = None
        if need_field:
            fld = sample_field(spec, m, master_seed,
                               stream_id=env_stream_id(r, group), workers=1)
        traj = simulate_path(fld, p, sched, master_seed,
                             noise_id=noise_stream_id(r, group), replica_id=r)
        samples[r, :, 0] = np.sum(traj.N**2, axis=1)
        samples[r, :, 1] = np.sum(traj.X**2, axis=1)
        samples[r, :, 2] = traj.X[:, 0] * traj.X[:, 1]
        samples[r, :, 3] = traj.N[:, 0]
        samples[r, :, 4] = traj.X[:, 0]
        samples[r, :, 5] = traj.X[:, 1]
        flags[r] = traj.flags
        exc[r] = traj.max_excursion

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_one, range(n_replicas)))
    else:
        for r in range(n_replicas):
            run_one(r)

    flag_frac = flags.mean(axis=0)
    unreliable = flag_frac > UNRELIABLE_FLAG_FRACTION
    sqrt_n = math.sqrt(n_replicas)
    estimates = []
    raw_means = {}
    for si, name in enumerate(("N_sq", "X_sq", "X1X2", "N1")):
        col = samples[:, :, si]
        mean = col.mean(axis=0)
        sem = col.std(axis=0, ddof=1) / sqrt_n
        raw_means[name] = mean
        for c in range(ncp):
            estimates.append(MomentEstimate(
                t=float(cp[c]), statistic=name, mean=float(mean[c]),
                sem=float(sem[c]), n_samples=n_replicas,
                flagged_fraction=float(flag_frac[c])))
    for si, name in ((4, "var_X1"), (5, "var_X2")):
        col = samples[:, :, si]
        var = col.var(axis=0, ddof=1)
        # SEM of a sample variance under approximate normality
        sem = var * math.sqrt(2.0 / (n_replicas - 1))
        raw_means[name] = var
        for c in range(ncp):
            estimates.append(MomentEstimate(
                t=float(cp[c]), statistic=name, mean=float(var[c]),
                sem=float(sem[c]), n_samples=n_replicas,
                flagged_fraction=float(flag_frac[c])))
    box = spec.box_length if spec is not None else math.inf
    return AnnealedResult(
        estimates=estimates, checkpoints=cp, flagged_fraction=flag_frac,
        unreliable=unreliable, max_excursion_over_box=float(exc.max() / box),
        n_replicas=n_replicas, raw_means=raw_means,
        samples=samples if keep_samples else None)


def plan_weak_coupling_run(p: ModelParams, m: MollifierSpec, t_final: float,
                           box_length: float | None = None,
                           grid_n: int | None = None,
                           box_factor: float = BOX_SAFETY_FACTOR):
    """Derive (GridSpec, dt) for a weak-coupling run from the safety rules."""
    from .analytic import effective_diffusivity

    rate = effective_diffusivity(p).total_variance_rate
    if box_length is None:
        box_length = derive_box_length(rate, t_final, box_factor)
    else:
        hard_floor = derive_box_length(rate, t_final, BOX_HARD_MINIMUM)
        if box_length < hard_floor:
            raise ValueError(
                f"box_length {box_length:g} below the hard safety floor {hard_floor:g}")
    if grid_n is None:
        spec = derive_grid(p.eps, box_length)
    else:
        spec = GridSpec(box_length=box_length, grid_n=grid_n)
        if spec.h > p.eps / 8.0 * (1 + 1e-12):
            raise ValueError("grid override violates h <= eps/8")
    dt = derive_dt(m, p.nu, p.coupling, spec.h, t_final)
    return spec, dt


def weak_coupling_sweep(eps_list, p_base: ModelParams, t_final: float,
                        n_checkpoints: int, n_replicas: int, master_seed: int,
                        threads: int = 1, box_factor: float = BOX_SAFETY_FACTOR,
                        mollifier_kind: str = "compact_bump"):
    """Per-eps table of drift and position variance rates with comparators.

    For each eps the grid and step are re-derived, an annealed ensemble is
    run, and the rows E|N_T|^2/T and E|X_T|^2/T are emitted together with
    the per-checkpoint series needed by the Laplace comparator.
    """
    from .mollifier import make_mollifier

    rows = []
    for i, eps in enumerate(eps_list):
        p = ModelParams(lambda_hat=p_base.lambda_hat, nu=p_base.nu,
                        eps=eps, lam=p_base.lam)
        m = make_mollifier(mollifier_kind, eps)
        spec, dt = plan_weak_coupling_run(p, m, t_final, box_factor=box_factor)
        cps = [t_final * (k + 1) / n_checkpoints for k in range(n_checkpoints)]
        sched = make_schedule(t_final, dt, cps)
        res = annealed_moments(p, spec, m, sched, n_replicas, master_seed,
                               threads=threads, group=i + 1)
        n_sq = res.raw_means["N_sq"]
        x_sq = res.raw_means["X_sq"]
        rows.append({
            "eps": eps, "params": p, "grid": spec, "schedule": sched,
            "result": res,
            "n_rate_final": float(n_sq[-1] / res.checkpoints[-1]),
            "x_rate_final": float(x_sq[-1] / res.checkpoints[-1]),
            "times": res.checkpoints, "n_sq_series": n_sq, "x_sq_series": x_sq,
        })
    return rows


def fit_sqrt_log(t_values: np.ndarray, ratios: np.ndarray,
                 sems: np.ndarray) -> dict:
    """Weighted least-squares fit ratio(t) = a + b sqrt(log t).

    Returns the coefficients, their standard errors and the one-sided 95%
    lower bound on b.
    """
    x = np.sqrt(np.log(t_values))
    w = 1.0 / np.maximum(sems, 1e-300) ** 2
    design = np.stack([np.ones_like(x), x], axis=1)
    wd = design * w[:, None]
    cov = np.linalg.inv(design.T @ wd)
    coef = cov @ (wd.T @ ratios)
    resid = ratios - design @ coef
    dof = max(len(x) - 2, 1)
    chi2 = float(np.sum(w * resid**2))
    se = np.sqrt(np.diag(cov))
    b, se_b = float(coef[1]), float(se[1])
    return {"a": float(coef[0]), "b": b, "se_a": float(se[0]), "se_b": se_b,
            "b_lower95": b - 1.645 * se_b, "chi2_per_dof": chi2 / dof}


def superdiffusivity_scan(p: ModelParams, m: MollifierSpec, spec: GridSpec,
                          fixed_lambda: float, t_list, n_replicas: int,
                          master_seed: int, threads: int = 1) -> dict:
    """Ratio E|Y_t|^2 / t over a time grid under fixed coupling.

    Fits a + b sqrt(log t) to the ratio and reports the fit quality; the
    ratio grows when the drift keeps contributing at every scale.
    """
    t_list = sorted(float(t) for t in t_list)
    t_final = t_list[-1]
    dt = derive_dt(m, p.nu, fixed_lambda, spec.h, t_final)
    sched = make_schedule(t_final, dt, t_list, mode="fixed_coupling",
                          fixed_lambda=fixed_lambda)
    res = annealed_moments(p, spec, m, sched, n_replicas, master_seed,
                           threads=threads, group=0, keep_samples=True)
    t = res.checkpoints
    ratios = res.raw_means["X_sq"] / t
    sems = np.array([e.sem for e in res.estimates
                     if e.statistic == "X_sq"]) / t
    # per-replica consecutive ratio differences give the paired SEMs the
    # monotonicity check needs (per-path ratios are strongly correlated)
    per_rep = res.samples[:, :, 1] / t[None, :]
    diffs = np.diff(per_rep, axis=1)
    diff_sems = diffs.std(axis=0, ddof=1) / math.sqrt(n_replicas)
    fit = fit_sqrt_log(t, ratios, sems)
    return {"times": t, "ratios": ratios, "sems": sems,
            "diff_means": diffs.mean(axis=0), "diff_sems": diff_sems,
            "fit": fit, "result": res, "schedule": sched}
