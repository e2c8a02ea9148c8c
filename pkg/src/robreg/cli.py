"""Command-line entry point: robreg {fit, select, influence, simulate}.

Exit status is 0 on success, 1 for usage or input errors and 2 for numerical
failures (the error class name is printed on stderr).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _io
from .data import classical_standardize, read_csv, robust_standardize, unstandardize_model
from .errors import ParseError, RobRegError
from .inference import influence_curve
from .penalty import PenaltySpec
from .selection import adaptive_alpha, default_alpha_grid, select_lambda
from .simulation import SimulationConfig, figure1_configs, run_study
from .solver import FitConfig, fit_huber_pilot, fit_mdpde

log = logging.getLogger("robreg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _alpha_value(text):
    if text == "adaptive":
        return text
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in [0, 1] or 'adaptive', got {text!r}")
    if not 0 <= a <= 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {a}")
    return a


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--seed", type=int, default=None, help="master seed (simulate only)")
    common.add_argument("--threads", type=int, default=None, help="worker processes (simulate only)")
    common.add_argument("--response", help="name of the response column")
    common.add_argument("--csv", help="input CSV with a header row")

    pen = argparse.ArgumentParser(add_help=False)
    pen.add_argument("--penalty", choices=("l1", "scad", "none"), default="l1")
    pen.add_argument("--scad-a", type=float, default=3.7)

    parser = _Parser(prog="robreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common, pen], help="fit one penalized MDPDE")
    p.add_argument("--alpha", type=_alpha_value, default=0.2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="penalty level on the standardized scale")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--init", choices=("auto", "ols", "huber"), default="auto")

    p = sub.add_parser("select", parents=[common, pen], help="choose lambda by RCp / RAIC / Cp / AIC")
    p.add_argument("--criterion", choices=("rcp", "raic", "cp", "aic"), default="rcp")
    p.add_argument("--alpha", type=_alpha_value, default=0.2, help="number in [0, 1] or 'adaptive'")
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--alpha-step", type=float, default=0.0125, help="adaptive alpha grid step")
    p.add_argument("--rcp-variant", choices=("squared", "literal"), default="squared")
    p.add_argument("--raic-variant", choices=("derived", "displayed"), default="derived")
    p.add_argument("--table", help="per-lambda CSV (default: next to --out)")

    p = sub.add_parser("influence", parents=[common, pen], help="influence curve of a fitted model")
    p.add_argument("--alpha", type=_alpha_value, default=0.2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--probe-min", type=float, default=-10.0)
    p.add_argument("--probe-max", type=float, default=10.0)
    p.add_argument("--probe-steps", type=int, default=81)
    p.add_argument("--absolute", action="store_true",
                   help="probes are response values rather than offsets from the fit")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo study")
    p.add_argument("--config", help="JSON file with simulation settings")
    p.add_argument("--figure1", action="store_true", help="run the four-panel preset")
    p.add_argument("--sizes", type=_int_list, default=[50, 100, 200], help="sample sizes for --figure1")
    for name, typ in (("n", int), ("p", int), ("rho", float), ("sparsity", float), ("snr", float),
                      ("tau", float), ("mu-c", float), ("replicates", int), ("test-size", int),
                      ("alpha", float), ("grid-size", int)):
        p.add_argument(f"--{name}", type=typ, default=None)
    p.add_argument("--estimators", help="comma-separated subset of ols,huber,tukey,lasso_cp,lasso_aic,rcp,raic")
    p.add_argument("--table", help="long-format CSV (default: next to --out)")
    p.add_argument("--verbose", action="store_true", help="include per-replicate records in the JSON")
    return parser


# --- helpers ----------------------------------------------------------------

def _emit(args, text, suffix=None):
    if args.out is None:
        sys.stdout.write(text)
        return
    path = Path(args.out)
    if suffix:
        path = path.with_suffix(suffix)
    path.write_text(text)


def _sidecar(args, explicit, suffix):
    if explicit:
        return Path(explicit)
    if args.out:
        out = Path(args.out)
        return out.with_name(out.stem + suffix)
    return None


def _load(args):
    if not args.csv:
        raise UsageError("--csv is required")
    if not args.response:
        raise UsageError("--response is required")
    return read_csv(args.csv, args.response)


def _resolved(args):
    skip = {"out", "csv", "threads"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _model_json(m):
    out = m.to_dict()
    out["sigma_equation"] = m.sigma_equation
    return out


def _standardization_json(st):
    return {"centers": st.centers, "scales": st.scales, "y_center": st.y_center, "y_scale": st.y_scale}


# --- subcommands ------------------------------------------------------------

def cmd_fit(args, argv=None):
    started = _io.now_iso()
    d = _load(args)
    if args.alpha == "adaptive":
        raise UsageError("--alpha adaptive is only available for select")
    ds, st = robust_standardize(d)
    family = "none" if args.lam == 0 else args.penalty
    cfg = FitConfig(alpha=args.alpha, penalty=PenaltySpec(family, args.lam, args.scad_a),
                    max_outer_iters=args.max_iters, tol=args.tol, init=args.init)
    m = unstandardize_model(fit_mdpde(ds, cfg), st)
    doc = _model_json(m)
    doc["names"] = list(d.names)
    doc["standardization"] = _standardization_json(st)
    doc["manifest"] = _io.make_manifest(argv, _resolved(args), None, args.csv, started=started)
    _emit(args, _io.dumps(doc))
    return 0


def cmd_select(args, argv=None):
    started = _io.now_iso()
    d = _load(args)
    crit = args.criterion
    classical = crit in ("cp", "aic")
    ds, st = classical_standardize(d) if classical else robust_standardize(d)
    adaptive = None
    alpha = args.alpha
    kw = dict(penalty=args.penalty if args.penalty != "none" else "l1", scad_a=args.scad_a,
              rcp_variant=args.rcp_variant, raic_variant=args.raic_variant)
    if alpha == "adaptive":
        if classical:
            raise UsageError("--alpha adaptive needs --criterion rcp or raic")
        pilot = fit_huber_pilot(ds)
        alpha, records = adaptive_alpha(ds, pilot, default_alpha_grid(args.alpha_step), crit,
                                        args.grid_size, **kw)
        adaptive = {"alpha_star": alpha, "records": records}
    sel = select_lambda(ds, 0.0 if classical else alpha, crit, args.grid_size, **kw)
    model = unstandardize_model(sel.model, st)
    rows = [(lam, None, None, None, None) if v is None else (lam, v.value, v.df, v.sigma, v.active_count)
            for lam, v in zip(sel.grid, sel.values)]
    doc = {
        "criterion": crit,
        "alpha": sel.alpha,
        "chosen_lambda": sel.chosen_lambda,
        "lambda_scale": "standardized data",
        "model": _model_json(model),
        "names": list(d.names),
        "grid": sel.grid,
        "values": [r[1] for r in rows],
        "failures": [list(f) for f in sel.failures],
    }
    if adaptive:
        doc["adaptive"] = adaptive
    doc["manifest"] = _io.make_manifest(argv, _resolved(args), None, args.csv, started=started)
    _emit(args, _io.dumps(doc))
    table = _sidecar(args, args.table, "_path.csv")
    if table:
        table.write_text(_io.csv_text(("lambda", "criterion", "df", "sigma", "active_count"), rows))
    return 0


def cmd_influence(args, argv=None):
    started = _io.now_iso()
    d = _load(args)
    if args.alpha == "adaptive" or args.alpha <= 0:
        raise UsageError("--alpha must be a number in (0, 1] for influence")
    if args.probe_steps < 1:
        raise UsageError("--probe-steps must be positive")
    ds, st = robust_standardize(d)
    family = "none" if args.lam == 0 else args.penalty
    m = fit_mdpde(ds, FitConfig(alpha=args.alpha, penalty=PenaltySpec(family, args.lam, args.scad_a)))
    probes = np.linspace(args.probe_min, args.probe_max, args.probe_steps)
    ia = influence_curve(m, ds, args.alpha, probes, relative=not args.absolute)
    header = ["probe"] + [f"if_beta{j}" for j in range(d.p + 1)] + ["if_sigma2", "norm"]
    rows = [[v, *ia.if_values[:, k], ia.norms[k]] for k, v in enumerate(ia.points)]
    _emit(args, _io.csv_text(header, rows))
    if args.out:
        meta = {
            "sup_norm": ia.sup_norm,
            "theta_g": "fitted theta (plug-in)",
            "probes": "offsets from the fitted surface" if ia.relative else "response values",
            "scale": "standardized data",
            "model": _model_json(m),
            "manifest": _io.make_manifest(argv, _resolved(args), None, args.csv, started=started),
        }
        _sidecar(args, None, ".json").write_text(_io.dumps(meta))
    return 0


_SIM_FLAGS = {"n": "n", "p": "p", "rho": "rho", "sparsity": "sparsity", "snr": "snr", "tau": "tau",
              "mu_c": "mu_c", "replicates": "replicates", "test_size": "test_size", "alpha": "alpha",
              "grid_size": "n_grid"}


def _sim_config(args):
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: {exc}")
    for flag, key in _SIM_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            base[key] = v
    if args.estimators:
        base["estimators"] = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if args.seed is not None:
        base["seed"] = args.seed
    try:
        return SimulationConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"simulation config: {exc}")


_LONG_HEADER = ("estimator", "n", "replicate", "rpe", "rel_rpe", "sensitivity", "specificity")


def cmd_simulate(args, argv=None):
    started = _io.now_iso()
    cfg = _sim_config(args)
    threads = args.threads or os.cpu_count() or 1
    if args.figure1:
        panels, rows = [], []
        for panel, c in figure1_configs(cfg, args.sizes):
            rep = run_study(c, threads)
            panels.append({"panel": panel, **rep.to_dict(args.verbose)})
            rows += [(panel, *(r[k] for k in _LONG_HEADER)) for r in rep.records]
        doc = {"panels": panels}
        header = ("panel",) + _LONG_HEADER
    else:
        rep = run_study(cfg, threads)
        doc = rep.to_dict(args.verbose)
        rows = [tuple(r[k] for k in _LONG_HEADER) for r in rep.records]
        header = _LONG_HEADER
    doc["manifest"] = _io.make_manifest(argv, cfg.to_dict() | {"figure1": args.figure1, "sizes": args.sizes},
                                        cfg.seed, args.config, threads, started)
    _emit(args, _io.dumps(doc))
    table = _sidecar(args, args.table, ".csv")
    if table:
        table.write_text(_io.csv_text(header, rows))
    return 0


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "influence": cmd_influence, "simulate": cmd_simulate}


def _setup_logging():
    level = os.environ.get("ROBREG_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def main(argv=None):
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, ["robreg", *argv])
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except RobRegError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
