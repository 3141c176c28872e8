"""Command-line interface: ``hrlatent {simulate,fit,experiment,diagnose}``.

Exit codes: 0 success, 1 solver failure, 2 input error, 3 config error.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import fileio
from .errors import (
    ConfigError,
    DivergenceError,
    HRLatentError,
    InfeasibleRefitError,
    IngestionError,
    InsufficientExceedancesError,
    InvalidDimensionError,
    InvalidPrecisionError,
    InvalidVariogramError,
    NoValidModelError,
    NotAttainableError,
    SingularLatentBlockError,
)
from .evaluate import grid_select, identifiability_report, validation_loglik
from .evaluate import write_metric_table
from .experiment import load_spec, run_experiment, simulate_to_dir
from .simulate import GroundTruth, n_for_k
from .solver import (
    LatentDecomposition,
    SolverOptions,
    default_lambda_grid,
    eglatent,
    eglearn_baseline,
    extract_structure,
    refit,
    surrogate_mle,
    surrogate_objective,
)
from .variogram import empirical_variogram

EXIT_OK, EXIT_SOLVER, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3

SOLVER_ERRORS = (DivergenceError, NotAttainableError, InfeasibleRefitError, NoValidModelError)
INPUT_ERRORS = (IngestionError, InsufficientExceedancesError, InvalidVariogramError,
                InvalidPrecisionError, SingularLatentBlockError, InvalidDimensionError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_grid(text):
    """``"0.1,0.05,0.01"`` or ``"auto[:n[:ratio]]"``."""
    if text is None:
        return None
    text = text.strip()
    if text.startswith("auto"):
        parts = text.split(":")
        try:
            grid = {"n_points": int(parts[1]) if len(parts) > 1 else 30,
                    "ratio": float(parts[2]) if len(parts) > 2 else 1e-3}
        except ValueError as exc:
            raise ConfigError(f"bad automatic grid {text!r}") from exc
        return grid
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad lambda grid {text!r}") from exc
    if not vals:
        raise ConfigError("lambda grid is empty")
    return vals


def parse_floats(text):
    if text is None:
        return None
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc
    if not vals:
        raise ConfigError("empty number list")
    return vals


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return d


def add_k_rule(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k-exponent", type=float, default=None,
                   help="k = floor(n ** e) exceedances (default e = 0.7)")
    g.add_argument("--threshold", type=float, default=None,
                   help="k = floor((1 - q) n) exceedances")


def build_parser():
    parser = _Parser(prog="hrlatent", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="sample a synthetic latent model")
    s.add_argument("--config", help="JSON with model and sample sizes")
    s.add_argument("--p", type=int, help="observed variables")
    s.add_argument("--h", type=int, help="latent variables")
    s.add_argument("--graph", choices=["cycle", "erdos_renyi", "barabasi_albert", "star_factor"])
    s.add_argument("--n-train", type=int)
    s.add_argument("--n-val", type=int)
    s.add_argument("--k", type=int, help="target effective size; sets n-train")
    s.add_argument("--k-exponent", type=float, default=None)
    s.add_argument("--sampler", choices=["max_stable", "pareto"], default=None)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output directory")

    f = sub.add_parser("fit", help="fit one model (or a selected path point) to a CSV")
    f.add_argument("data", help="sample CSV")
    f.add_argument("--config", help="JSON with default fit options")
    add_k_rule(f)
    f.add_argument("--lambda", dest="lam", type=float, help="single penalty level")
    f.add_argument("--lambda-grid", help="comma list (descending) or auto[:n[:ratio]]")
    f.add_argument("--gamma", type=float, default=None)
    f.add_argument("--method", choices=["eglatent", "eglearn", "mle"], default=None)
    f.add_argument("--refit", action="store_true", default=None)
    f.add_argument("--val", help="validation CSV used to select along a grid")
    f.add_argument("--select", choices=["validation"], default="validation")
    f.add_argument("--tol", type=float, default=None)
    f.add_argument("--max-iter", type=int, default=None)
    f.add_argument("--seed", type=int, help="accepted for symmetry; fitting is deterministic")
    f.add_argument("--out", required=True, help="output JSON path")

    e = sub.add_parser("experiment", help="run a sweep described by a JSON config")
    e.add_argument("--config", required=True)
    e.add_argument("--seed", type=int)
    add_k_rule(e)
    e.add_argument("--lambda-grid")
    e.add_argument("--gamma", help="comma list of gamma values")
    e.add_argument("--method", action="append", choices=["eglatent", "eglearn"],
                   help="repeat to run several methods")
    e.add_argument("--refit", action=argparse.BooleanOptionalAction, default=None)
    e.add_argument("--select", choices=["validation", "oracle"])
    e.add_argument("--trials", type=int)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out")

    d = sub.add_parser("diagnose", help="identifiability report for (S*, L*)")
    d.add_argument("source", help="ground-truth JSON or decomposition JSON")
    d.add_argument("--mc-samples", type=int, default=200)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", help="report JSON path (default: stdout)")
    return parser


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    cfg = _read_config(args.config)
    model = dict(cfg.get("model", {}))
    for key, val in (("p", args.p), ("h", args.h), ("graph_kind", args.graph)):
        if val is not None:
            model[key] = val
    if "p" not in model:
        raise ConfigError("simulate needs a model size (--p or model.p in the config)")
    exponent = args.k_exponent if args.k_exponent is not None else cfg.get("k_exponent", 0.7)
    n_train = args.n_train or cfg.get("n_train")
    k = args.k or cfg.get("k")
    if n_train is None:
        if k is None:
            raise ConfigError("simulate needs --n-train or --k")
        n_train = n_for_k(int(k), exponent)
    n_val = args.n_val if args.n_val is not None else cfg.get("n_val", 0)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    sampler = args.sampler or cfg.get("sampler", "max_stable")
    try:
        truth, paths = simulate_to_dir(model, int(n_train), int(n_val or 0), seed, args.out,
                                       sampler)
    except TypeError as exc:
        raise ConfigError(f"bad model spec: {exc}") from exc
    fileio.write_json(os.path.join(args.out, "spec.json"),
                      {"model": truth.spec.to_dict(), "n_train": int(n_train),
                       "n_val": int(n_val or 0), "seed": seed, "sampler": sampler,
                       "k_exponent": exponent})
    print(json.dumps({"n_train": int(n_train), "latent_rank": truth.h,
                      "edges": len(truth.conditional_edges), **paths}))
    return EXIT_OK


def _fit_one(method, G, lam, gamma, opts):
    if method == "eglatent":
        return eglatent(G, lam, gamma, opts)
    if method == "eglearn":
        return eglearn_baseline(G, lam, opts)
    theta = surrogate_mle(G)
    return LatentDecomposition(theta, np.zeros_like(theta), 0.0, 0.0), None


def cmd_fit(args):
    cfg = _read_config(args.config)
    method = args.method or cfg.get("method", "eglatent")
    gamma = args.gamma if args.gamma is not None else float(cfg.get("gamma", 4.0))
    do_refit = bool(args.refit if args.refit is not None else cfg.get("refit", False))
    tol = args.tol if args.tol is not None else cfg.get("tol", SolverOptions.tol)
    max_iter = args.max_iter if args.max_iter is not None else cfg.get("max_iter",
                                                                         SolverOptions.max_iter)
    opts = SolverOptions(tol=float(tol), max_iter=int(max_iter))
    threshold = args.threshold if args.threshold is not None else cfg.get("threshold")
    exponent = args.k_exponent if args.k_exponent is not None else cfg.get("k_exponent", 0.7)
    lam = args.lam if args.lam is not None else cfg.get("lambda")
    grid = parse_grid(args.lambda_grid) if args.lambda_grid else cfg.get("lambda_grid")
    if lam is not None and grid is not None:
        raise ConfigError("give either --lambda or --lambda-grid, not both")
    if method != "mle" and lam is None and grid is None:
        raise ConfigError("fit needs --lambda or --lambda-grid (or --method mle)")

    X = fileio.read_samples(args.data)
    ev = empirical_variogram(X, exponent, threshold)
    G = ev.gamma_hat
    result = {"variogram": ev.metadata(), "method": method}

    if method == "mle" or grid is None:
        dec, rep = _fit_one(method, G, 0.0 if lam is None else float(lam), gamma, opts)
        table = None
    else:
        if args.val is None:
            raise ConfigError("selecting along a lambda grid needs --val")
        lams = default_lambda_grid(G, grid["n_points"], grid["ratio"]) if isinstance(grid, dict) \
            else np.asarray(grid, dtype=float)
        if np.any(np.diff(lams) > 0):
            raise ConfigError("lambda grid must be descending")
        ev_val = empirical_variogram(fileio.read_samples(args.val), exponent, threshold)
        fits, table, scores, warm = [], [], [], None
        for lam_i in lams:
            if method == "eglatent":
                d_i, r_i = eglatent(G, lam_i, gamma, opts, warm)
            else:
                d_i, r_i = eglearn_baseline(G, lam_i, opts, warm)
            warm = r_i.state
            theta = d_i.theta
            if do_refit:
                st_i = extract_structure(d_i)
                try:
                    theta = refit(G, st_i.edges, st_i.colspace, opts)[0].theta
                except InfeasibleRefitError:
                    theta = None
            score = -math.inf if theta is None else validation_loglik(theta, ev_val)
            st_i = extract_structure(d_i)
            fits.append((d_i, r_i))
            scores.append(score)
            table.append({"lambda": float(lam_i), "gamma": d_i.gamma, "edges": len(st_i.edges),
                          "rank": st_i.latent_rank, "f_score": "", "val_loglik": score,
                          "converged": r_i.converged})
        best = grid_select(None, scores=scores)
        dec, rep = fits[best]
        result["lambda_grid"] = [float(x) for x in lams]
        result["selected_index"] = best
    st = extract_structure(dec)
    if do_refit and method != "mle":
        ref, ref_rep = refit(G, st.edges, st.colspace, opts)
        result["refit"] = ref.to_dict(ref_rep)
        result["refit_objective"] = surrogate_objective(ref.theta, G)
    result["model"] = dec.to_dict(rep)
    result["structure"] = st.to_dict()
    result["objective"] = surrogate_objective(dec.theta, G)
    fileio.write_json(args.out, _finite(result))
    if table is not None:
        write_metric_table(table, os.path.splitext(args.out)[0] + "_path.csv")
    summary = {"edges": len(st.edges), "latent_rank": st.latent_rank,
               "converged": None if rep is None else rep.converged, "out": args.out}
    print(json.dumps(summary))
    if rep is not None and not rep.converged:
        print("warning: solver hit the iteration cap; best iterate written", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def cmd_experiment(args):
    overrides = {
        "seed": args.seed, "k_exponent": args.k_exponent, "threshold": args.threshold,
        "lambda_grid": parse_grid(args.lambda_grid), "gamma_values": parse_floats(args.gamma),
        "methods": args.method, "refit": args.refit, "selection": args.select,
        "trials": args.trials, "out": args.out,
    }
    spec = load_spec(args.config, overrides)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    rows, summary = run_experiment(spec, workers=args.workers)
    failed = sum(1 for r in rows if not r["converged"])
    print(json.dumps({"rows": len(rows), "failed_points": failed, "out": spec.out}))
    return EXIT_OK


def _load_pair(source):
    d = fileio.read_json(source)
    if "theta_star" in d:
        return GroundTruth.from_dict(d).sparse_and_lowrank()
    if "model" in d and isinstance(d["model"], dict) and "S" in d["model"]:
        d = d["model"]
    if "S" in d and "L" in d:
        dec = LatentDecomposition.from_dict(d)
        return dec.S, dec.L
    raise IngestionError(f"{source}: expected a ground-truth or decomposition JSON")


def cmd_diagnose(args):
    S, L = _load_pair(args.source)
    rep = identifiability_report(S, L, args.mc_samples, args.seed)
    text = json.dumps(rep.to_dict(), indent=2)
    if args.out:
        fileio.write_json(args.out, rep.to_dict())
    print(text)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "experiment": cmd_experiment,
            "diagnose": cmd_diagnose}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HRLatentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
