"""The acceptance-criteria suite.

Each criterion function returns a record with the measured quantities, the
stated tolerance, and a pass flag.  Tolerances are fixed here and are not
calibrated to the implementation: criteria whose stated tolerances are
unattainable under the governing formulas (the finite-scale convergence is
O(1/log(1/eps)) with order-one constants) run red with their measured
values recorded rather than being loosened.  See the README for the
measured-versus-stated discussion.

`quick=True` shrinks replica counts for smoke runs only; the recorded
tolerances do not change, so statistical criteria may fail in quick mode.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .analytic import (effective_diffusivity, enhancement_limit,
                       enhancement_table, identity_suite, laplace_limit,
                       log_rescale, truncated_limit, variance_sum_limit)
from .field import GridSpec, derive_grid, empirical_covariance, theoretical_covariance
from .mollifier import make_mollifier
from .params import ModelParams
from .resolvent import (QuadratureSpec, base_diffusivity, laplace_comparator,
                        replacement_residual, truncated_diffusivity)
from .rng import stream
from .sde import (annealed_moments, make_schedule, simulate_path,
                  superdiffusivity_scan, weak_coupling_sweep)

# Empirical upper bound for the centered unit-(H, H+) replacement residual,
# frozen from the reference run (measured 10.2522 across the eps grid) with
# a 7% margin; criterion 9 treats it as a regression constant.
RESIDUAL_REGRESSION_CONSTANT = 11.0

_SCALES = {
    "full": {"c5_draws": 10_000, "c6_replicas": 10_000, "c7_replicas": 2000,
             "c8_replicas": 384, "c8_tmax": 1000.0, "c8_box": 1024.0},
    "quick": {"c5_draws": 1500, "c6_replicas": 2000, "c7_replicas": 120,
              "c8_replicas": 48, "c8_tmax": 100.0, "c8_box": 320.0},
}


def _record(cid, name, passed, measured, tolerance, t0, details=None) -> dict:
    return {"id": cid, "name": name, "passed": bool(passed),
            "measured": measured, "tolerance": tolerance,
            "runtime_s": round(time.time() - t0, 2),
            "details": details or {}}


def criterion_1(master_seed: int, _inject_wrong_constant: bool = False) -> dict:
    """Closed-form identity suite over 100 random parameter draws at 1e-10."""
    t0 = time.time()
    gen = stream(master_seed, 0xC1)
    worst = 0.0
    for _ in range(100):
        p = ModelParams(lambda_hat=float(gen.uniform(0.05, 3.0)),
                        nu=float(gen.uniform(0.3, 3.0)),
                        eps=float(gen.uniform(0.01, 0.49)),
                        lam=float(gen.uniform(0.1, 10.0)))
        suite = identity_suite(p)
        dev = max(r["deviation"] for r in suite)
        if _inject_wrong_constant:
            dev = max(dev, abs(p.lam**2 * laplace_limit(p) * (1 + 1e-6)
                               - effective_diffusivity(p).c_sq))
        worst = max(worst, dev)
    return _record("C1", "analytic identity suite (100 draws)",
                   worst <= 1e-10, {"worst_deviation": worst}, 1e-10, t0)


def criterion_2(master_seed: int) -> dict:
    """Recursion convergence, bracketing, and the factorial Cauchy bound."""
    t0 = time.time()
    p = ModelParams(lambda_hat=1.0, nu=1.0, eps=0.1, lam=1.0)
    tab = enhancement_table(60, 2.0 * math.pi, 8193, p)
    x = tab.x_grid
    g_cl = enhancement_limit(x, p)
    conv = abs(float(tab.eval(60, math.pi)) - float(enhancement_limit(math.pi, p)))
    # bracketing is exact in exact arithmetic; allow the tabulation error
    brack_slack = tab.tolerance
    slack = 1e-12
    brack_viol = 0.0
    for j in range(1, 61):
        if j % 2 == 1:
            brack_viol = max(brack_viol, float(np.max(tab.values[j] - g_cl)))
        else:
            brack_viol = max(brack_viol, float(np.max(g_cl - tab.values[j])))
    mask = x <= math.pi + 1e-15
    xm = x[mask]
    cauchy_viol = 0.0
    with np.errstate(divide="ignore"):
        logx = np.where(xm > 0, np.log(xm), -np.inf)
    for n in range(2, 61):
        diff = np.abs(tab.values[n][mask] - tab.values[n - 1][mask])
        log_bound = (n - 2) * math.log(4.0) + (n - 1) * logx - math.lgamma(n)
        bound = np.exp(log_bound)
        cauchy_viol = max(cauchy_viol, float(np.max(diff - bound)))
    passed = conv <= 1e-6 and brack_viol <= brack_slack and cauchy_viol <= slack
    return _record("C2", "recursion convergence / bracketing / Cauchy bound",
                   passed,
                   {"conv_G60_vs_closed": conv, "bracketing_violation": brack_viol,
                    "cauchy_violation": cauchy_viol},
                   {"conv": 1e-6, "bracketing": brack_slack, "cauchy": slack}, t0)


def criterion_3(master_seed: int) -> dict:
    """Base diffusivity against its 2 pi limit; equality with level-1 truncation."""
    t0 = time.time()
    q = QuadratureSpec()
    target = 2.0 * math.pi
    devs, eqs = {}, {}
    for eps, tol in ((1e-3, 0.05), (1e-6, 0.025)):
        p = ModelParams(lambda_hat=1.0, nu=1.0, eps=eps, lam=1.0)
        m = make_mollifier("compact_bump", eps)
        b = base_diffusivity(p, q, m)
        tab = enhancement_table(1, 2.0 * float(log_rescale(p.lam, p)), 8193, p)
        t1 = truncated_diffusivity(1, p, q, tab, m)
        devs[f"eps={eps:g}"] = (b.value - target) / target
        eqs[f"eps={eps:g}"] = abs(t1.value - b.value) / abs(b.value)
    passed = (abs(devs["eps=0.001"]) <= 0.05 and abs(devs["eps=1e-06"]) <= 0.025
              and all(v <= 1e-8 for v in eqs.values()))
    return _record("C3", "base diffusivity limit (5% / 2.5%)", passed,
                   {"relative_deviation": devs, "vs_truncated_1": eqs},
                   {"eps=0.001": 0.05, "eps=1e-06": 0.025, "equality": 1e-8}, t0)


def criterion_4(master_seed: int) -> dict:
    """Level-2 truncation against its limit; deviation shrinking along eps."""
    t0 = time.time()
    q = QuadratureSpec()
    target = float(truncated_limit(2, ModelParams(1.0, 1.0, 0.1, 1.0)))
    devs = []
    for eps in (1e-2, 1e-3, 1e-4):
        p = ModelParams(lambda_hat=1.0, nu=1.0, eps=eps, lam=1.0)
        m = make_mollifier("compact_bump", eps)
        tab = enhancement_table(2, 2.0 * float(log_rescale(p.lam, p)), 8193, p)
        t2 = truncated_diffusivity(2, p, q, tab, m)
        devs.append((t2.value - target) / target)
    monotone = abs(devs[0]) > abs(devs[1]) > abs(devs[2])
    passed = abs(devs[2]) <= 0.10 and monotone
    return _record("C4", "level-2 truncated diffusivity (10% at eps=1e-4)",
                   passed,
                   {"relative_deviation": dict(zip(["1e-2", "1e-3", "1e-4"], devs)),
                    "monotone_shrinking": monotone, "limit": target},
                   0.10, t0)


def criterion_5(master_seed: int, threads: int = 1, quick: bool = False) -> dict:
    """Field covariance against the quadrature oracle over many draws."""
    t0 = time.time()
    scale = _SCALES["quick" if quick else "full"]
    eps = 0.2
    m = make_mollifier("compact_bump", eps)
    spec = GridSpec(box_length=25.6, grid_n=1024)
    est = empirical_covariance(scale["c5_draws"], spec, m, [(0.0, 0.0)],
                               master_seed, n_base_points=8, threads=threads)
    theo = theoretical_covariance(m, (0.0, 0.0))
    mean, sem = est["mean"][0], est["sem"][0]
    pulls = np.abs(mean - theo) / np.maximum(sem, 1e-300)
    per_draw = est["per_draw"][:, 0]
    iso_diff = per_draw[:, 0, 0] - per_draw[:, 1, 1]
    iso_pull = abs(iso_diff.mean()) / (iso_diff.std(ddof=1) / math.sqrt(len(iso_diff)))
    passed = (float(pulls.max()) <= 3.0 and est["divergence_max"] <= 1e-12
              and iso_pull <= 3.0)
    return _record("C5", "field covariance oracle (3 SEM) + divergence + isotropy",
                   passed,
                   {"max_pull_sem": float(pulls.max()),
                    "divergence_max": est["divergence_max"],
                    "isotropy_pull_sem": float(iso_pull),
                    "empirical_diag": [float(mean[0, 0]), float(mean[1, 1])],
                    "theoretical_diag": float(theo[0, 0]),
                    "n_draws": scale["c5_draws"]},
                   {"pulls": 3.0, "divergence": 1e-12}, t0)


def criterion_6(master_seed: int, threads: int = 1, quick: bool = False) -> dict:
    """Pure-diffusion exactness and the bookkeeping identity."""
    t0 = time.time()
    scale = _SCALES["quick" if quick else "full"]
    p = ModelParams(lambda_hat=0.0, nu=1.0, eps=0.2, lam=1.0)
    m = make_mollifier("compact_bump", p.eps)
    sched = make_schedule(1.0, 0.1 * p.eps**2 / p.nu**2, [0.5, 1.0])
    res = annealed_moments(p, None, m, sched, scale["c6_replicas"], master_seed,
                           threads=threads)
    x_sq = [e for e in res.estimates if e.statistic == "X_sq" and e.t == 1.0][0]
    cross = [e for e in res.estimates if e.statistic == "X1X2" and e.t == 1.0][0]
    pull_xsq = abs(x_sq.mean - 2.0) / x_sq.sem
    pull_cross = abs(cross.mean) / cross.sem
    # explicit bookkeeping residuals on sampled paths, with and without drift
    resid = 0.0
    pd = ModelParams(lambda_hat=1.0, nu=1.0, eps=0.25, lam=1.0)
    md = make_mollifier("compact_bump", 0.25)
    from .field import sample_field
    gspec = derive_grid(0.25, 4.0)
    fld = sample_field(gspec, md, master_seed)
    dsched = make_schedule(0.5, 1e-3, [0.25, 0.5])
    for r in range(50):
        traj = simulate_path(None, p, sched, master_seed, noise_id=(5 << 60) | r)
        err = np.abs(traj.X - (traj.N + p.nu * traj.B))
        resid = max(resid, float(err.max()) / max(1.0, float(np.abs(traj.X).max())))
        traj = simulate_path(fld, pd, dsched, master_seed, noise_id=(6 << 60) | r)
        err = np.abs(traj.X - (traj.N + pd.nu * traj.B))
        resid = max(resid, float(err.max()) / max(1.0, float(np.abs(traj.X).max())))
    passed = pull_xsq <= 3.0 and pull_cross <= 3.0 and resid <= 1e-12
    return _record("C6", "pure-diffusion exactness + bookkeeping identity", passed,
                   {"E_Xsq_T1": x_sq.mean, "pull_vs_2": pull_xsq,
                    "cross_pull": pull_cross, "bookkeeping_residual": resid,
                    "n_replicas": scale["c6_replicas"]},
                   {"pulls": 3.0, "bookkeeping": 1e-12}, t0)


def criterion_7(master_seed: int, threads: int = 1, quick: bool = False) -> dict:
    """Weak-coupling trend: Laplace comparator vs level-2 truncation, and
    cross-component covariance, over eps in {0.4, 0.2, 0.1}.

    The comparator needs lam * T >= 3, so the ensemble runs to T = 3 with
    the t = 1 rows reported alongside.
    """
    t0 = time.time()
    scale = _SCALES["quick" if quick else "full"]
    p = ModelParams(lambda_hat=1.0, nu=1.0, eps=0.2, lam=1.0)
    q = QuadratureSpec()
    t_final = 3.0
    rows = weak_coupling_sweep([0.4, 0.2, 0.1], p, t_final, 30,
                               scale["c7_replicas"], master_seed,
                               threads=threads, box_factor=9.2)
    per_eps = {}
    comp_ok, cross_ok = True, True
    for row in rows:
        pe = row["params"]
        me = make_mollifier("compact_bump", row["eps"])
        tab = enhancement_table(2, 2.0 * float(log_rescale(pe.lam, pe)), 8193, pe)
        t2 = truncated_diffusivity(2, pe, q, tab, me)
        target = 4.0 / pe.lam**2 * t2.value
        comp = laplace_comparator(row["times"], row["n_sq_series"], pe)
        ratio = comp / target
        comp_ok = comp_ok and abs(comp - target) <= 0.25 * target
        cross = [e for e in row["result"].estimates
                 if e.statistic == "X1X2" and abs(e.t - 1.0) < 1e-9][0]
        cross_pull = abs(cross.mean) / cross.sem
        cross_ok = cross_ok and cross_pull <= 3.0
        tab3 = enhancement_table(3, 2.0 * float(log_rescale(pe.lam, pe)), 8193, pe)
        t3 = truncated_diffusivity(3, pe, q, tab3, me)
        per_eps[f"eps={row['eps']}"] = {
            "comparator": comp, "target_4x_level2": target,
            "ratio": ratio, "diag_4x_level3": 4.0 / pe.lam**2 * t3.value,
            "cross_pull_sem_at_t1": cross_pull,
            "n_rate_T1": float(np.interp(1.0, row["times"],
                                         row["n_sq_series"] / row["times"])),
            "flagged_fraction": float(row["result"].flagged_fraction[-1]),
        }
    passed = comp_ok and cross_ok
    return _record("C7", "weak-coupling trend: comparator within 25% + cross-component",
                   passed, per_eps, {"comparator": 0.25, "cross_pull": 3.0}, t0,
                   details={"n_replicas": scale["c7_replicas"], "t_final": t_final})


def criterion_8(master_seed: int, threads: int = 1, quick: bool = False) -> dict:
    """Fixed-coupling variance-ratio growth and the sqrt-log fit."""
    t0 = time.time()
    scale = _SCALES["quick" if quick else "full"]
    p = ModelParams(lambda_hat=1.0, nu=1.0, eps=0.25, lam=1.0)
    m = make_mollifier("compact_bump", 1.0)
    spec = derive_grid(1.0, scale["c8_box"])
    n_pts = 7 if not quick else 5
    t_list = list(np.geomspace(10.0, scale["c8_tmax"], n_pts))
    scan = superdiffusivity_scan(p, m, spec, 1.0, t_list, scale["c8_replicas"],
                                 master_seed, threads=threads)
    viol = float(np.max(-(scan["diff_means"] + 3.0 * scan["diff_sems"])))
    fit = scan["fit"]
    passed = viol <= 0.0 and fit["b_lower95"] > 0.0
    return _record("C8", "superdiffusivity scan: non-decreasing ratio + b > 0",
                   passed,
                   {"ratios": [float(r) for r in scan["ratios"]],
                    "times": [float(t) for t in scan["times"]],
                    "worst_monotonicity_violation": viol,
                    "fit_b": fit["b"], "fit_b_lower95": fit["b_lower95"],
                    "flagged_fraction_final": float(scan["result"].flagged_fraction[-1])},
                   {"monotone_within": "3 SEM", "b_lower95": "> 0"}, t0,
                   details={"n_replicas": scale["c8_replicas"],
                            "grid_n": spec.grid_n})


def criterion_9(master_seed: int) -> dict:
    """Replacement-residual stability across four decades of eps."""
    t0 = time.time()
    q = QuadratureSpec()
    one = lambda x: 1.0
    vals = {}
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        p = ModelParams(lambda_hat=1.0, nu=1.0, eps=eps, lam=1.0)
        vals[f"eps={eps:g}"] = replacement_residual(p, (0.0, 0.0), one, one, q)
    mx, mn = max(vals.values()), min(vals.values())
    passed = mx / mn < 2.0 and mx <= RESIDUAL_REGRESSION_CONSTANT
    return _record("C9", "replacement residual stability (factor 2 + regression bound)",
                   passed,
                   {"residuals": vals, "max_over_min": mx / mn,
                    "regression_constant": RESIDUAL_REGRESSION_CONSTANT},
                   {"factor": 2.0, "bound": RESIDUAL_REGRESSION_CONSTANT}, t0)


def criterion_10(master_seed: int) -> dict:
    """Byte-identical outputs on rerun and across thread counts."""
    import tempfile
    from pathlib import Path

    from .cli import main as cli_main
    from .reporting import write_json

    t0 = time.time()
    checks = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = {
            "model": {"lambda_hat": 1.0, "nu": 1.0, "eps": 0.25, "lambda": 1.0},
            "schedule": {"t_final": 0.02, "n_checkpoints": 4},
            "grid": {"box_length": 4.0},
            "run": {"n_replicas": 8, "master_seed": master_seed},
        }
        cfg_path = tmp / "cfg.json"
        write_json(cfg_path, cfg)

        def run(cmd, out, threads):
            rc = cli_main([cmd, "--config", str(cfg_path), "--out", str(out),
                           "--threads", str(threads)])
            assert rc == 0, f"{cmd} exited {rc}"

        run("simulate", tmp / "a", 1)
        run("simulate", tmp / "b", 1)
        run("simulate", tmp / "c", 2)
        for fname in ("moments.csv", "comparators.csv"):
            a = (tmp / "a" / fname).read_bytes()
            checks[f"simulate rerun {fname}"] = a == (tmp / "b" / fname).read_bytes()
            checks[f"simulate threads {fname}"] = a == (tmp / "c" / fname).read_bytes()
        run("analytic", tmp / "d", 1)
        run("analytic", tmp / "e", 1)
        for fname in ("analytic.csv", "constants.json"):
            checks[f"analytic rerun {fname}"] = ((tmp / "d" / fname).read_bytes()
                                                 == (tmp / "e" / fname).read_bytes())
        run("sample-field", tmp / "f", 1)
        run("sample-field", tmp / "g", 2)
        checks["sample-field rerun field.bin"] = ((tmp / "f" / "field.bin").read_bytes()
                                                  == (tmp / "g" / "field.bin").read_bytes())
    return _record("C10", "determinism: rerun and thread-count byte-identity",
                   all(checks.values()), checks, "byte identity", t0)


def run_acceptance(master_seed: int = 20260810, threads: int = 1,
                   quick: bool = False,
                   _inject_wrong_constant: bool = False) -> list[dict]:
    """Run all ten criteria; returns their records in order."""
    report = [
        criterion_1(master_seed, _inject_wrong_constant),
        criterion_2(master_seed),
        criterion_3(master_seed),
        criterion_4(master_seed),
        criterion_5(master_seed, threads, quick),
        criterion_6(master_seed, threads, quick),
        criterion_7(master_seed, threads, quick),
        criterion_8(master_seed, threads, quick),
        criterion_9(master_seed),
        criterion_10(master_seed),
    ]
    if quick:
        for r in report:
            r["details"]["quick_mode"] = True
    return report
