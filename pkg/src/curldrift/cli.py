"""Command-line harness.

Commands: analytic, sample-field, simulate, sweep, superdiffusivity,
resolvent, verify.  All state comes from the JSON config plus the global
flags; there are no environment-variable overrides.  Reruns with the same
config and seed produce byte-identical outputs regardless of --threads.

Exit codes: 0 success, 1 criterion or identity failure, 2 config error,
3 estimates carried unreliable flags.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (chaos_weight_table, effective_diffusivity,
                       enhancement_limit, enhancement_table, identity_suite,
                       laplace_limit, log_rescale, truncated_limit,
                       variance_sum_limit)
from .config import ConfigError, config_hash, load_config, model_params, resolve_derived
from .field import GridSpec, derive_grid, sample_field, save_field
from .mollifier import make_mollifier
from .params import ModelParams
from .reporting import standard_meta, write_csv, write_json
from .resolvent import (QuadratureSpec, base_diffusivity, laplace_comparator,
                        replacement_residual, truncated_diffusivity)
from .rng import field_stream_id
from .sde import (annealed_moments, make_schedule, plan_weak_coupling_run,
                  superdiffusivity_scan, weak_coupling_sweep)

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_CONFIG = 2
EXIT_UNRELIABLE = 3


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", type=str, default=None, help="JSON config path")
    sub.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    sub.add_argument("--out", type=str, default=None, help="override run.output_dir")
    sub.add_argument("--threads", type=int, default=None, help="override run.threads")
    sub.add_argument("--dry-run", action="store_true",
                     help="validate config, print derived values, do not compute")


def _prepare(args) -> tuple[dict, Path]:
    overrides = {}
    if args.seed is not None:
        overrides["run.master_seed"] = args.seed
    if args.out is not None:
        overrides["run.output_dir"] = args.out
    if args.threads is not None:
        overrides["run.threads"] = args.threads
    cfg = load_config(args.config, overrides)
    out = Path(cfg["run"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _echo_config(cfg: dict, out: Path, derived: dict | None = None) -> str:
    h = config_hash(cfg)
    resolved = {"config": cfg, "config_hash": h, "version": __version__}
    if derived:
        resolved["derived"] = derived
    write_json(out / "config_resolved.json", resolved)
    return h


def cmd_analytic(args) -> int:
    cfg, out = _prepare(args)
    p = model_params(cfg)
    acfg = cfg["analytic"]
    n_max = acfg["n_max"]
    x_max = acfg["x_max"] or 2.0 * math.pi * max(p.lambda_hat, 1.0) ** 2
    if args.dry_run:
        print(f"analytic: n_max={n_max} x_max={x_max} grid={acfg['grid_size']}")
        return EXIT_OK
    suite = identity_suite(p)
    if not all(r["passed"] for r in suite):
        print("identity suite FAILED:")
        for r in suite:
            print(f"  {r['name']}: lhs={r['lhs']!r} rhs={r['rhs']!r} "
                  f"dev={r['deviation']:.3e} {'ok' if r['passed'] else 'FAIL'}")
        return EXIT_CRITERION
    h = _echo_config(cfg, out, {"x_max": x_max})
    meta = standard_meta(h, cfg["run"]["master_seed"])
    table = enhancement_table(n_max, x_max, acfg["grid_size"], p)
    x = table.x_grid
    s_row = np.ones_like(x)
    for j in range(1, n_max + 1):
        w = chaos_weight_table(n_max, j, x_max, acfg["grid_size"], p, g_table=table)
        s_row = s_row + w.values[j]
    header = (["x"] + [f"G_{j}" for j in range(1, n_max + 1)]
              + ["G_closed", f"S_{n_max}", "S_closed"])
    stride = max(1, (x.size - 1) // 512)
    rows = []
    g_cl = enhancement_limit(x, p)
    s_cl = variance_sum_limit(x, p)
    for k in range(0, x.size, stride):
        rows.append([x[k]] + [table.values[j][k] for j in range(1, n_max + 1)]
                    + [g_cl[k], s_row[k], s_cl[k]])
    write_csv(out / "analytic.csv", meta, header, rows)
    eff = effective_diffusivity(p)
    constants = {
        "c": eff.c, "c_sq": eff.c_sq, "total_variance_rate": eff.total_variance_rate,
        "laplace_limit": laplace_limit(p),
        "truncated_limits": {str(n): truncated_limit(n, p) for n in range(1, n_max + 1)},
        "identity_suite": suite,
    }
    write_json(out / "constants.json", {"meta": meta, "constants": constants})
    print(f"analytic: wrote {out/'analytic.csv'} and {out/'constants.json'}")
    return EXIT_OK


def cmd_sample_field(args) -> int:
    cfg, out = _prepare(args)
    p = model_params(cfg)
    m = make_mollifier(cfg["mollifier"]["kind"], p.eps)
    box = cfg["grid"]["box_length"] or 16.0 * p.eps
    spec = (GridSpec(box, cfg["grid"]["grid_n"]) if cfg["grid"]["grid_n"]
            else derive_grid(p.eps, box))
    if args.dry_run:
        print(f"sample-field: L={spec.box_length} N={spec.grid_n} h={spec.h}")
        return EXIT_OK
    h = _echo_config(cfg, out, {"box_length": spec.box_length, "grid_n": spec.grid_n})
    fld = sample_field(spec, m, cfg["run"]["master_seed"],
                       stream_id=field_stream_id(0))
    save_field(fld, out / "field.bin")
    write_json(out / "field_meta.json", {
        "meta": standard_meta(h, cfg["run"]["master_seed"]),
        "box_length": spec.box_length, "grid_n": spec.grid_n, "eps": m.eps,
        "kind": m.kind, "fourier_divergence_max": fld.fourier_divergence_max,
    })
    print(f"sample-field: wrote {out/'field.bin'}")
    return EXIT_OK


def _moment_rows(eps: float, result, seed: int):
    for e in result.estimates:
        yield [eps, e.t, e.statistic, e.mean, e.sem, e.n_samples,
               e.flagged_fraction, seed]


MOMENTS_HEADER = ["eps", "t", "stat", "mean", "sem", "n_samples",
                  "flagged_fraction", "seed"]


def cmd_simulate(args) -> int:
    cfg, out = _prepare(args)
    p = model_params(cfg)
    m = make_mollifier(cfg["mollifier"]["kind"], p.eps)
    sch = cfg["schedule"]
    derived = resolve_derived(cfg)
    if args.dry_run:
        print(f"simulate: L={derived['box_length']:g} N={derived['grid_n']} "
              f"dt={derived['dt']:g}")
        return EXIT_OK
    h = _echo_config(cfg, out, derived)
    seed = cfg["run"]["master_seed"]
    meta = standard_meta(h, seed)
    spec = GridSpec(derived["box_length"], derived["grid_n"]) if p.lambda_hat > 0 else None
    cps = [sch["t_final"] * (k + 1) / sch["n_checkpoints"]
           for k in range(sch["n_checkpoints"])]
    sched = make_schedule(sch["t_final"], derived["dt"], cps,
                          mode=sch["mode"], fixed_lambda=sch["fixed_lambda"])
    res = annealed_moments(p, spec, m, sched, cfg["run"]["n_replicas"], seed,
                           threads=cfg["run"]["threads"])
    write_csv(out / "moments.csv", meta, MOMENTS_HEADER,
              _moment_rows(p.eps, res, seed))
    comp_rows, comp_note = [], "ok"
    if p.lambda_hat > 0 and sch["mode"] == "weak_coupling":
        q = QuadratureSpec(**cfg["quadrature"])
        tab = enhancement_table(4, 2.0 * float(log_rescale(p.lam, p)), 8193, p)
        try:
            comp = laplace_comparator(res.checkpoints, res.raw_means["N_sq"], p)
        except ValueError as exc:
            comp, comp_note = float("nan"), str(exc)
        for n in (1, 2, 3):
            tv = truncated_diffusivity(n, p, q, tab, m)
            comp_rows.append([p.eps, n, tv.value, tv.est_error,
                              truncated_limit(n, p), comp])
    write_csv(out / "comparators.csv",
              standard_meta(h, seed, {"laplace_comparator_note": comp_note}),
              ["eps", "n", "truncated_diffusivity", "est_error",
               "truncated_limit", "mc_laplace_comparator"], comp_rows)
    unreliable = bool(res.unreliable.any())
    print(f"simulate: wrote {out/'moments.csv'}"
          + (" (UNRELIABLE rows present)" if unreliable else ""))
    return EXIT_UNRELIABLE if unreliable else EXIT_OK


def cmd_sweep(args) -> int:
    cfg, out = _prepare(args)
    p = model_params(cfg)
    sch = cfg["schedule"]
    if args.dry_run:
        for eps in cfg["sweep"]["eps_list"]:
            pe = ModelParams(p.lambda_hat, p.nu, eps, p.lam)
            me = make_mollifier(cfg["mollifier"]["kind"], eps)
            spec, dt = plan_weak_coupling_run(pe, me, sch["t_final"],
                                              box_factor=cfg["grid"]["box_factor"])
            print(f"sweep eps={eps}: L={spec.box_length:g} N={spec.grid_n} dt={dt:g}")
        return EXIT_OK
    h = _echo_config(cfg, out)
    seed = cfg["run"]["master_seed"]
    meta = standard_meta(h, seed)
    rows = weak_coupling_sweep(
        cfg["sweep"]["eps_list"], p, sch["t_final"], sch["n_checkpoints"],
        cfg["run"]["n_replicas"], seed, threads=cfg["run"]["threads"],
        box_factor=cfg["grid"]["box_factor"],
        mollifier_kind=cfg["mollifier"]["kind"])
    mom_rows = []
    comp_rows = []
    q = QuadratureSpec(**cfg["quadrature"])
    unreliable = False
    for row in rows:
        pe = row["params"]
        mom_rows.extend(_moment_rows(row["eps"], row["result"], seed))
        unreliable = unreliable or bool(row["result"].unreliable.any())
        me = make_mollifier(cfg["mollifier"]["kind"], row["eps"])
        tab = enhancement_table(4, 2.0 * float(log_rescale(pe.lam, pe)), 8193, pe)
        try:
            comp = laplace_comparator(row["times"], row["n_sq_series"], pe)
        except ValueError:
            comp = float("nan")
        for n in (1, 2, 3):
            tv = truncated_diffusivity(n, pe, q, tab, me)
            comp_rows.append([row["eps"], n, tv.value, tv.est_error,
                              truncated_limit(n, pe), comp,
                              row["n_rate_final"], row["x_rate_final"]])
    write_csv(out / "moments.csv", meta, MOMENTS_HEADER, mom_rows)
    write_csv(out / "comparators.csv", meta,
              ["eps", "n", "truncated_diffusivity", "est_error", "truncated_limit",
               "mc_laplace_comparator", "n_rate_final", "x_rate_final"], comp_rows)
    print(f"sweep: wrote {out/'moments.csv'} and {out/'comparators.csv'}")
    return EXIT_UNRELIABLE if unreliable else EXIT_OK


def cmd_superdiffusivity(args) -> int:
    cfg, out = _prepare(args)
    p = model_params(cfg)
    scan = cfg["scan"]
    m = make_mollifier(cfg["mollifier"]["kind"], scan["field_eps"])
    box = cfg["grid"]["box_length"] or scan["box_length"]
    spec = (GridSpec(box, cfg["grid"]["grid_n"]) if cfg["grid"]["grid_n"]
            else derive_grid(scan["field_eps"], box))
    if args.dry_run:
        print(f"superdiffusivity: L={spec.box_length:g} N={spec.grid_n} "
              f"t_list={scan['t_list']}")
        return EXIT_OK
    h = _echo_config(cfg, out, {"box_length": spec.box_length, "grid_n": spec.grid_n})
    seed = cfg["run"]["master_seed"]
    res = superdiffusivity_scan(p, m, spec, scan["fixed_lambda"], scan["t_list"],
                                cfg["run"]["n_replicas"], seed,
                                threads=cfg["run"]["threads"])
    flags = res["result"].flagged_fraction
    rows = [[t, r, s, f] for t, r, s, f in
            zip(res["times"], res["ratios"], res["sems"], flags)]
    write_csv(out / "superdiffusivity.csv", standard_meta(h, seed),
              ["t", "ratio", "sem", "flagged_fraction"], rows)
    write_json(out / "scan_fit.json", {"meta": standard_meta(h, seed),
                                       "fit": res["fit"]})
    unreliable = bool(res["result"].unreliable.any())
    print(f"superdiffusivity: b = {res['fit']['b']:.4f} "
          f"(95% lower {res['fit']['b_lower95']:.4f})"
          + (" (UNRELIABLE rows present)" if unreliable else ""))
    return EXIT_UNRELIABLE if unreliable else EXIT_OK


def cmd_resolvent(args) -> int:
    cfg, out = _prepare(args)
    p0 = model_params(cfg)
    rcfg = cfg["resolvent"]
    if args.dry_run:
        print(f"resolvent: n_list={rcfg['n_list']} eps_list={rcfg['eps_list']}")
        return EXIT_OK
    h = _echo_config(cfg, out)
    seed = cfg["run"]["master_seed"]
    meta = standard_meta(h, seed)
    q = QuadratureSpec(**cfg["quadrature"])
    rows = []
    for eps in rcfg["eps_list"]:
        pe = ModelParams(p0.lambda_hat, p0.nu, eps, p0.lam)
        me = make_mollifier(cfg["mollifier"]["kind"], eps)
        tab = enhancement_table(max(rcfg["n_list"]),
                                2.0 * float(log_rescale(pe.lam, pe)), 8193, pe)
        base = base_diffusivity(pe, q, me)
        rows.append([eps, 0, base.value, base.est_error, 2 * math.pi * pe.lambda_hat**2 / pe.nu**2])
        for n in rcfg["n_list"]:
            tv = truncated_diffusivity(n, pe, q, tab, me)
            rows.append([eps, n, tv.value, tv.est_error, truncated_limit(n, pe)])
    write_csv(out / "resolvent.csv", meta,
              ["eps", "n", "value", "est_error", "limit"], rows)
    res_rows = []
    one = lambda x: 1.0
    for eps in rcfg["eps_list"]:
        pe = ModelParams(p0.lambda_hat, p0.nu, eps, p0.lam)
        r = replacement_residual(pe, (0.0, 0.0), one, one, q)
        res_rows.append([eps, 0.0, r])
    write_csv(out / "residuals.csv", meta, ["eps", "x_sum_norm", "residual"], res_rows)
    print(f"resolvent: wrote {out/'resolvent.csv'} and {out/'residuals.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_acceptance

    cfg, out = _prepare(args)
    if args.dry_run:
        print("verify: would run the 10-criterion acceptance suite")
        return EXIT_OK
    h = _echo_config(cfg, out)
    seed = cfg["run"]["master_seed"]
    report = run_acceptance(master_seed=seed, threads=cfg["run"]["threads"],
                            quick=args.quick)
    write_json(out / "verify.json", {
        "schema_version": 1,
        "meta": standard_meta(h, seed),
        "criteria": report,
    })
    ok = True
    for crit in report:
        status = "PASS" if crit["passed"] else "FAIL"
        print(f"[{status}] {crit['id']}: {crit['name']} "
              f"(measured {crit['measured']}, tolerance {crit['tolerance']})")
        ok = ok and crit["passed"]
    print(f"verify: wrote {out/'verify.json'}")
    return EXIT_OK if ok else EXIT_CRITERION


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="curldrift",
        description="Monte Carlo and analytic toolkit for a Brownian tracer "
                    "in the curl of the mollified 2D Gaussian free field")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    handlers = {}
    for name, fn, help_text in [
        ("analytic", cmd_analytic, "tabulate analytic functions and constants"),
        ("sample-field", cmd_sample_field, "draw one field realization to a binary snapshot"),
        ("simulate", cmd_simulate, "annealed Monte Carlo moments at one eps"),
        ("sweep", cmd_sweep, "weak-coupling sweep over an eps list"),
        ("superdiffusivity", cmd_superdiffusivity, "fixed-coupling variance-ratio scan"),
        ("resolvent", cmd_resolvent, "resolvent quadratures and replacement residuals"),
        ("verify", cmd_verify, "run the acceptance criteria suite"),
    ]:
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
        if name == "verify":
            sub.add_argument("--quick", action="store_true",
                             help="reduced-scale statistical criteria (smoke use only; "
                                  "the recorded tolerances stay as specified)")
        handlers[name] = fn
    args = parser.parse_args(argv)
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
