"""Deterministic output writers.

CSV files carry '#'-prefixed metadata lines (config hash, master seed, tool
version) above an RFC-4180 body with '.' decimals; floats are written with
repr so reruns are byte-identical.  JSON reports are canonicalized the same
way.  Nothing here writes timestamps.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from . import __version__


def standard_meta(cfg_hash: str, master_seed: int, extra: dict | None = None) -> dict:
    meta = {"config_hash": cfg_hash, "master_seed": master_seed,
            "version": __version__}
    if extra:
        meta.update(extra)
    return meta


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_csv(path: str | Path, meta: dict, header: list[str], rows) -> None:
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, indent=2, default=_jsonify) + "\n",
        encoding="utf-8")


def _jsonify(v):
    import numpy as np

    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not JSON serializable: {type(v)}")
