"""Command-line interface.

Every subcommand builds a canonical JSON report (written with ``--out-json``,
``-`` for stdout) and prints a one-line summary derived from that report.
Options resolve as: built-in defaults, then a ``--config`` JSON file, then
explicit flags.

Exit codes: 0 success, 2 invalid input or configuration, 1 numerical failure,
64 command-line usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from fdaudit.errors import FdAuditError, NumericalError, ValidationError
from fdaudit.estimators import (
    balance_test,
    ddml_beta_d1,
    fd_ols,
    path_weights,
    placebo_test,
    stacked_ddml,
    stacked_fd_ols,
    yitzhaki_weights,
)
from fdaudit.learners.spec import LearnerSpec
from fdaudit.panel import assign_folds, first_differences, load_panel
from fdaudit.report import build_report, canonical_json, file_digest, provenance, table_row, to_csv

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_VALIDATION = 2
EXIT_USAGE = 64

LEARNER_KINDS = {"lasso": "poly-lasso", "mlp": "mlp", "poly-ols": "poly-ols"}

DEFAULTS = {
    "input": None,
    "unit": "unit",
    "period": "period",
    "y": "y",
    "d": "d",
    "z": None,
    "weight": None,
    "cluster": None,
    "format": "long",
    "learner": "lasso",
    "degree": 3,
    "folds": 5,
    "seed": 0,
    "alpha": 0.05,
    "threads": 1,
    "lasso_penalty": "plugin",
    "post_lasso": True,
    "mlp_hidden": 10,
    "mlp_iters": 1000,
    "mlp_rate": 1.0,
    "bootstrap": 399,
    "pair": None,
    "instrument": False,
    "stacked": False,
    "yitzhaki": False,
    "d1_bins": 10,
    "x_grid": 50,
    "oracle": None,
    "reps": 500,
    "n_units": None,
    "dgp_config": None,
    "tolerance": 0.02,
    "vcov": "CR1",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, data=True, learner=False):
    g = p.add_argument_group("input")
    if data:
        g.add_argument("--input", help="long-format CSV/TSV panel")
        for key in ("unit", "period", "y", "d", "z", "weight", "cluster"):
            g.add_argument(f"--{key}", metavar="COLUMN", help=f"column holding {key}")
        g.add_argument("--format", choices=["long", "wide"])
        g.add_argument("--pair", help="FD period pair: end period or 'start,end' (default: last)")
    o = p.add_argument_group("run")
    o.add_argument("--config", help="JSON file with option values (flags override)")
    o.add_argument("--seed", type=int)
    o.add_argument("--alpha", type=float)
    o.add_argument("--threads", type=int, help="cap on worker threads")
    o.add_argument("--vcov", choices=["CR1", "CR0"])
    o.add_argument("--out-json", dest="out_json")
    o.add_argument("--out-csv", dest="out_csv")
    o.add_argument("-v", "--verbose", action="count", default=0)
    if learner:
        lg = p.add_argument_group("learner")
        lg.add_argument("--learner", choices=sorted(LEARNER_KINDS))
        lg.add_argument("--degree", type=int)
        lg.add_argument("--folds", type=int)
        lg.add_argument("--lasso-penalty", dest="lasso_penalty", help="plugin | cv:K | fixed:LAMBDA")
        lg.add_argument("--no-post-lasso", dest="post_lasso", action="store_const", const=False)
        lg.add_argument("--mlp-hidden", dest="mlp_hidden", type=int)
        lg.add_argument("--mlp-iters", dest="mlp_iters", type=int)
        lg.add_argument("--mlp-rate", dest="mlp_rate", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fdaudit", description="Bias audit and cross-fitted correction for FD panel regressions.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("balance", help="regress the treatment change on the baseline treatment")
    _common(p)
    p.add_argument("--instrument", action="store_const", const=True, help="test the instrument instead")

    p = sub.add_parser("estimate", help="naive FD regression (two-period or stacked)")
    _common(p)
    p.add_argument("--instrument", action="store_const", const=True, help="reduced form on the instrument change")
    p.add_argument("--stacked", action="store_const", const=True, help="pool all consecutive FD periods")

    p = sub.add_parser("weights", help="path weights and optional derivative weights")
    _common(p)
    p.add_argument("--yitzhaki", action="store_const", const=True, help="also compute derivative weights")
    p.add_argument("--d1-bins", dest="d1_bins", type=int)
    p.add_argument("--x-grid", dest="x_grid", type=int)

    for name, text in (("ddml", "cross-fitted two-period estimate"), ("stack", "cross-fitted stacked estimate")):
        p = sub.add_parser(name, help=text)
        _common(p, learner=True)
        p.add_argument("--instrument", action="store_const", const=True, help="corrected reduced form")
        p.add_argument("--bootstrap", type=int, metavar="B", help="Hausman bootstrap replications (0: influence-function s.e.)")

    p = sub.add_parser("placebo", help="lagged-outcome placebo test")
    _common(p, learner=True)

    p = sub.add_parser("simulate", help="Monte Carlo oracle run")
    _common(p, data=False, learner=True)
    p.add_argument("--oracle", choices=["ovb", "path-weights", "beta-d1", "placebo"])
    p.add_argument("--reps", type=int)
    p.add_argument("--n-units", dest="n_units", type=int)
    p.add_argument("--dgp-config", dest="dgp_config", help="JSON DGP specification")
    p.add_argument("--tolerance", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            cfg[k] = v
    cfg["command"] = args.command
    return cfg


def learner_from(cfg: dict) -> LearnerSpec:
    return LearnerSpec(
        kind=LEARNER_KINDS.get(cfg["learner"], cfg["learner"]),
        degree=int(cfg["degree"]),
        lasso_penalty=str(cfg["lasso_penalty"]),
        post_lasso=bool(cfg["post_lasso"]),
        mlp_hidden=(int(cfg["mlp_hidden"]),),
        mlp_iters=int(cfg["mlp_iters"]),
        mlp_rate=float(cfg["mlp_rate"]),
        seed=int(cfg["seed"]),
    )


def _pair(cfg):
    p = cfg["pair"]
    if p is None:
        return None
    if isinstance(p, (list, tuple)):
        return tuple(int(x) for x in p)
    text = str(p)
    try:
        if "," in text:
            return tuple(int(x) for x in text.split(","))
        return int(text)
    except ValueError:
        raise ValidationError(f"cannot parse --pair {p!r}") from None


def _load(cfg):
    if not cfg["input"]:
        raise ValidationError("--input is required")
    cmap = {k: cfg[k] for k in ("unit", "period", "y", "d", "z", "weight", "cluster") if cfg[k] is not None}
    if cfg["format"] == "wide":
        cmap["format"] = "wide"
    try:
        panel = load_panel(cfg["input"], cmap)
    except OSError as exc:
        raise ValidationError(f"cannot read input: {exc}") from None
    return panel, file_digest(cfg["input"])


def _hausman_strategy(cfg):
    return ("influence", 0) if int(cfg["bootstrap"]) == 0 else ("bootstrap", int(cfg["bootstrap"]))


def run(cfg: dict) -> dict:
    """Execute a resolved configuration and return the report dict."""
    cmd = cfg["command"]
    seed = int(cfg["seed"])
    threads = max(1, int(cfg["threads"]))

    if cmd == "simulate":
        return _run_simulate(cfg, seed, threads)

    panel, digest = _load(cfg)
    fd = first_differences(panel)
    pair = _pair(cfg)
    learner = None
    folds = None

    if cmd == "balance":
        result = balance_test(fd, pair=pair, alpha=float(cfg["alpha"]), instrument=bool(cfg["instrument"])).to_dict()
    elif cmd == "estimate":
        if cfg["stacked"]:
            fit = stacked_fd_ols(fd, use_instrument=bool(cfg["instrument"]), vcov=cfg["vcov"])
        else:
            fit = fd_ols(fd, use_instrument=bool(cfg["instrument"]), pair=pair, vcov=cfg["vcov"])
        result = fit.summary(1)
        result["pair"] = "stacked" if cfg["stacked"] else list(fd.pairs[fd.pair_index(pair)])
    elif cmd == "weights":
        result = {"path_weights": path_weights(panel, pair=fd.pairs[fd.pair_index(pair)]).to_dict(),
                  "yitzhaki": None}
        if cfg["yitzhaki"]:
            result["yitzhaki"] = yitzhaki_weights(fd, int(cfg["d1_bins"]), int(cfg["x_grid"]), pair=pair).to_dict()
    elif cmd in ("ddml", "stack"):
        learner = learner_from(cfg)
        fa = assign_folds(fd, int(cfg["folds"]), seed)
        folds = {"n_folds": fa.n_folds, "seed": fa.seed}
        strategy, n_boot = _hausman_strategy(cfg)
        inst = bool(cfg["instrument"])
        kw = dict(outcome="dy", treatment="dz" if inst else "dd", hausman=strategy,
                  n_boot=max(n_boot, 1), boot_seed=seed, n_jobs=threads, vcov=cfg["vcov"])
        if cmd == "ddml":
            res = ddml_beta_d1(fd, ("z_lag",) if inst else ("d_lag",), learner, fa, pair=pair, **kw)
        else:
            res = stacked_ddml(fd, learner, fa, **kw)
        result = res.to_dict()
    elif cmd == "placebo":
        learner = learner_from(cfg)
        fa = assign_folds(fd, int(cfg["folds"]), seed)
        folds = {"n_folds": fa.n_folds, "seed": fa.seed}
        result = placebo_test(fd, learner, fa, pair=pair, alpha=float(cfg["alpha"]), n_jobs=threads,
                              vcov=cfg["vcov"]).to_dict()
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown command {cmd}")

    result["panel"] = panel.summary()
    prov = provenance(_public(cfg), seed=seed, folds=folds, learner=learner, input_digest=digest)
    return build_report(cmd, result, prov)


def _public(cfg):
    """Configuration recorded in provenance (output paths do not affect results)."""
    return {k: v for k, v in cfg.items() if k not in ("out_json", "out_csv", "verbose", "config")}


def _run_simulate(cfg, seed, threads):
    from fdaudit.simlab import DEFAULT_DGPS, load_dgp_spec, run_oracle

    if cfg["oracle"] is None:
        raise ValidationError("--oracle is required")
    spec = load_dgp_spec(cfg["dgp_config"]) if cfg["dgp_config"] else DEFAULT_DGPS[cfg["oracle"]]
    if cfg["n_units"] is not None:
        spec = spec.replace(n_units=int(cfg["n_units"]))
    learner = learner_from(cfg) if cfg["oracle"] in ("beta-d1", "placebo") else None
    rep = run_oracle(cfg["oracle"], spec, n_reps=int(cfg["reps"]), tolerance=float(cfg["tolerance"]),
                     seed=seed, learner=learner, n_folds=int(cfg["folds"]), alpha=float(cfg["alpha"]),
                     n_jobs=threads)
    prov = provenance(_public(cfg), seed=seed, folds={"n_folds": int(cfg["folds"])} if learner else None,
                      learner=learner)
    return build_report("simulate", rep.to_dict(), prov)


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        report = run(cfg)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except (NumericalError, FdAuditError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    if args.out_json:
        _write(args.out_json, canonical_json(report))
    if args.out_csv:
        _write(args.out_csv, to_csv(report))
    print(table_row(report))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
