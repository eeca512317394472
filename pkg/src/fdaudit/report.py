"""Report assembly and serialization.

Reports are plain dicts rendered as canonical JSON (sorted keys, fixed
indentation, ``repr``-exact floats), so identical configuration and input
bytes reproduce identical files. A provenance block records everything
needed to rerun the command.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform

import numpy as np
import pandas as pd
import scipy

from fdaudit import __version__
from fdaudit._accel import backend, numba_version


def _clean(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats to JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(_clean(config), sort_keys=True).encode()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    return {
        "fdaudit": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "numba": numba_version(),
        "backend": backend(),
    }


def provenance(config: dict, seed=None, folds=None, learner=None, input_digest=None) -> dict:
    return {
        "config": _clean(config),
        "config_hash": config_hash(config),
        "seed": seed,
        "folds": folds,
        "learner_digest": None if learner is None else learner.digest(),
        "input_sha256": input_digest,
        "versions": versions(),
    }


def build_report(command: str, result: dict, prov: dict) -> dict:
    return {"command": command, "result": _clean(result), "provenance": prov}


def _fmt(x, nd=2):
    return "nan" if x is None else f"{x:.{nd}f}"


def table_row(report: dict) -> str:
    """One-line summary, coefficient (s.e.) N, derived from the report dict."""
    res = report["result"]
    cmd = report["command"]
    if cmd == "simulate":
        verdict = "PASS" if res["passed"] else "FAIL"
        return (f"oracle {res['theorem']}: mean {res['mean']:.4f} target {res['target']:.4f} "
                f"(MC s.e. {res['mc_se']:.4f}, reps {res['n_reps']}) {verdict}")
    if cmd == "weights":
        pw = res["path_weights"]
        line = f"path weights {pw['periods'][0]}->{pw['periods'][1]}: {pw['omega'][0]:.2f} / {pw['omega'][1]:.2f}"
        if res.get("yitzhaki") is not None:
            line += f"; derivative weights min {res['yitzhaki']['min_weight']:.3g}"
        return line
    if cmd == "placebo":
        n, r = res["naive"], res["robust"]
        return (f"placebo naive {_fmt(n['estimate'])} ({_fmt(n['se'])}) | robust {_fmt(r['estimate'])} "
                f"({_fmt(r['se'])}) p={_fmt(r['pvalue'], 3)} N={r['n']}")
    line = f"{cmd}: {_fmt(res['estimate'])} ({_fmt(res['se'])}) N={res['n']}"
    if res.get("hausman"):
        line += f" H={_fmt(res['hausman']['H'])}"
    return line


def flat_rows(report: dict) -> list[dict]:
    """Scalar fields of the result, one row per estimate, for CSV output."""
    res = report["result"]
    if report["command"] == "simulate":
        return [{"rep": i, "estimate": e} for i, e in enumerate(res["estimates"])]
    if report["command"] == "placebo":
        parts = {"naive": res["naive"], "robust": res["robust"]}
    elif report["command"] == "weights":
        pw = res["path_weights"]
        return [{"periods": f"{pw['periods'][0]}-{pw['periods'][1]}", "omega1": pw["omega"][0], "omega2": pw["omega"][1]}]
    else:
        parts = {report["command"]: res}
    rows = []
    for name, r in parts.items():
        row = {"row": name}
        for k in ("estimate", "se", "pvalue", "n", "n_clusters"):
            row[k] = r.get(k)
        if r.get("hausman"):
            row["hausman"] = r["hausman"]["H"]
        rows.append(row)
    return rows


def to_csv(report: dict) -> str:
    rows = flat_rows(report)
    names = []
    for r in rows:
        names += [k for k in r if k not in names]
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
