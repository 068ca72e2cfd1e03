"""Run configuration: strict JSON schema, defaults, and derived echoes.

A config is a single JSON document.  Unknown keys anywhere in the tree are
rejected (silent typos in physics parameters are the dominant failure
mode).  Derived defaults (box length, grid size, step size) are computed
from the validated values and echoed into the persisted resolved config so
each run is self-describing.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

from .mollifier import make_mollifier
from .params import ModelParams

DEFAULTS = {
    "model": {"lambda_hat": 1.0, "nu": 1.0, "eps": 0.2, "lambda": 1.0},
    "mollifier": {"kind": "compact_bump"},
    "grid": {"box_length": None, "grid_n": None, "box_factor": 10.0},
    "schedule": {
        "t_final": 1.0,
        "dt": None,
        "n_checkpoints": 20,
        "mode": "weak_coupling",
        "fixed_lambda": None,
    },
    "run": {
        "n_replicas": 64,
        "master_seed": 20260810,
        "output_dir": "out",
        "threads": 1,
    },
    "sweep": {"eps_list": [0.4, 0.2, 0.1]},
    "scan": {
        "t_list": [10.0, 21.544, 46.416, 100.0, 215.44, 464.16, 1000.0],
        "fixed_lambda": 1.0,
        "box_length": 1024.0,
        "field_eps": 1.0,
    },
    "quadrature": {"rel_tol": 1e-8, "max_subdivisions": 200, "substitution": "direct"},
    "analytic": {"n_max": 8, "x_max": None, "grid_size": 8193},
    "resolvent": {"n_list": [1, 2, 3], "eps_list": [0.01, 0.001, 0.0001]},
}


class ConfigError(ValueError):
    pass


def _reject_unknown(user: dict, schema: dict, path: str = ""):
    for key, val in user.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(schema[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config section {path + key!r} must be an object")
            _reject_unknown(val, schema[key], path + key + ".")


def _merge(user: dict, schema: dict) -> dict:
    out = copy.deepcopy(schema)
    for key, val in user.items():
        if isinstance(schema.get(key), dict) and isinstance(val, dict):
            out[key] = _merge(val, schema[key])
        else:
            out[key] = val
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    """Load, validate and complete a config; returns the merged tree."""
    user: dict = {}
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
    _reject_unknown(user, DEFAULTS)
    cfg = _merge(user, DEFAULTS)
    if overrides:
        for dotted, value in overrides.items():
            section, key = dotted.split(".")
            cfg[section][key] = value
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    mdl = cfg["model"]
    try:
        ModelParams(lambda_hat=mdl["lambda_hat"], nu=mdl["nu"],
                    eps=mdl["eps"], lam=mdl["lambda"])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    try:
        make_mollifier(cfg["mollifier"]["kind"], mdl["eps"])
    except ValueError as exc:
        raise ConfigError(f"mollifier: {exc}") from exc
    sch = cfg["schedule"]
    if sch["t_final"] <= 0:
        raise ConfigError("schedule.t_final must be > 0")
    if sch["mode"] not in ("weak_coupling", "fixed_coupling"):
        raise ConfigError(f"unknown schedule.mode {sch['mode']!r}")
    if sch["mode"] == "fixed_coupling" and sch["fixed_lambda"] is None:
        raise ConfigError("fixed_coupling mode requires schedule.fixed_lambda")
    if cfg["run"]["n_replicas"] < 2:
        raise ConfigError("run.n_replicas must be >= 2")
    if cfg["run"]["threads"] < 1:
        raise ConfigError("run.threads must be >= 1")
    if not all(0 < e < 0.5 for e in cfg["sweep"]["eps_list"]):
        raise ConfigError("sweep.eps_list entries must lie in (0, 1/2)")
    gf = cfg["grid"]["box_factor"]
    if gf is not None and gf < 6.0:
        raise ConfigError("grid.box_factor below the hard safety floor of 6")


def model_params(cfg: dict) -> ModelParams:
    mdl = cfg["model"]
    return ModelParams(lambda_hat=mdl["lambda_hat"], nu=mdl["nu"],
                       eps=mdl["eps"], lam=mdl["lambda"])


def config_hash(cfg: dict) -> str:
    """Hash of the physics-relevant config.

    Execution-only keys (threads, output_dir) are excluded so result files
    stay byte-identical across thread counts and output locations.
    """
    clean = copy.deepcopy(cfg)
    clean["run"].pop("threads", None)
    clean["run"].pop("output_dir", None)
    blob = json.dumps(clean, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_derived(cfg: dict) -> dict:
    """Compute the derived run quantities (L, N, dt) for the echo."""
    from .sde import derive_dt, plan_weak_coupling_run

    p = model_params(cfg)
    m = make_mollifier(cfg["mollifier"]["kind"], p.eps)
    sch = cfg["schedule"]
    out: dict = {}
    if sch["mode"] == "weak_coupling" and p.lambda_hat > 0:
        spec, dt = plan_weak_coupling_run(
            p, m, sch["t_final"],
            box_length=cfg["grid"]["box_length"],
            grid_n=cfg["grid"]["grid_n"],
            box_factor=cfg["grid"]["box_factor"])
        out["box_length"] = spec.box_length
        out["grid_n"] = spec.grid_n
        out["h"] = spec.h
        out["dt"] = sch["dt"] if sch["dt"] else dt
    else:
        coupling = sch["fixed_lambda"] or 0.0
        box = cfg["grid"]["box_length"] or cfg["scan"]["box_length"]
        eps_f = cfg["scan"]["field_eps"] if sch["mode"] == "fixed_coupling" else p.eps
        n = cfg["grid"]["grid_n"] or max(2, 1 << math.ceil(math.log2(8 * box / eps_f)))
        out["box_length"] = box
        out["grid_n"] = n
        out["h"] = box / n
        mf = make_mollifier(cfg["mollifier"]["kind"], eps_f)
        out["dt"] = sch["dt"] if sch["dt"] else derive_dt(mf, p.nu, coupling, box / n, sch["t_final"])
    return out
