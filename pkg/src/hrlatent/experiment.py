"""Experiment sweeps: simulate, estimate variograms, solve lambda paths, score.

The unit of work is one lambda chain: a (trial, method, gamma) triple whose
grid points are warm-started in descending lambda order. Chains are
independent and may run in parallel. Every finished grid point is appended
to ``manifest.jsonl`` under a file lock; a rerun into the same output
directory skips chains whose cells are all recorded. The results table is
assembled from the manifest in a fixed order, so it does not depend on the
number of workers or on interruption history.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from filelock import FileLock

from . import fileio
from .errors import ConfigError, HRLatentError, InfeasibleRefitError, NoValidModelError
from .evaluate import f_score, grid_select, validation_loglik
from .rng import generator
from .simulate import SyntheticModelSpec, build_synthetic_model, n_for_k, sample_model
from .solver import (
    SolverOptions,
    default_lambda_grid,
    eglatent,
    eglearn_baseline,
    extract_structure,
    stage1_refit,
)
from .variogram import empirical_variogram

RESULT_COLUMNS = (
    "trial", "method", "gamma", "lambda_index", "lambda", "edges", "rank", "f_score",
    "val_loglik", "converged", "iterations", "selected_validation", "selected_oracle",
)
METHODS = ("eglatent", "eglearn")
MANIFEST = "manifest.jsonl"


@dataclass
class ExperimentSpec:
    model: dict = None
    data: str = None
    n_train: int = None
    n_val: int = None
    k: int = None
    k_exponent: float = 0.7
    threshold: float = None
    lambda_grid: object = field(default_factory=lambda: {"n_points": 30, "ratio": 1e-3})
    gamma_values: list = field(default_factory=lambda: [4.0])
    methods: list = field(default_factory=lambda: ["eglatent", "eglearn"])
    selection: str = "validation"
    trials: int = 1
    folds: int = 5
    refit: bool = True
    sampler: str = "max_stable"
    seed: int = 0
    tol: float = SolverOptions.tol
    max_iter: int = SolverOptions.max_iter
    out: str = "results"

    def validate(self):
        if (self.model is None) == (self.data is None):
            raise ConfigError("exactly one of 'model' and 'data' must be given")
        if self.model is not None:
            try:
                SyntheticModelSpec.from_dict(self.model)
            except (TypeError, HRLatentError) as exc:
                raise ConfigError(f"bad model spec: {exc}") from exc
            if self.n_train is None and self.k is None:
                raise ConfigError("synthetic runs need 'n_train' or a target 'k'")
            if self.n_train is not None and int(self.n_train) < 4:
                raise ConfigError("n_train must be >= 4")
        if isinstance(self.lambda_grid, (list, tuple)):
            if len(self.lambda_grid) == 0:
                raise ConfigError("lambda grid is empty")
            g = [float(x) for x in self.lambda_grid]
            if any(a < b for a, b in zip(g, g[1:])) or min(g) < 0:
                raise ConfigError("lambda grid must be nonnegative and descending")
        elif isinstance(self.lambda_grid, dict):
            if int(self.lambda_grid.get("n_points", 30)) < 1:
                raise ConfigError("lambda grid is empty")
        else:
            raise ConfigError("lambda_grid must be a list or {n_points, ratio}")
        if not self.gamma_values:
            raise ConfigError("gamma grid is empty")
        if any(float(g) < 0 for g in self.gamma_values):
            raise ConfigError("gamma values must be nonnegative")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if self.selection not in ("validation", "oracle"):
            raise ConfigError("selection must be 'validation' or 'oracle'")
        if self.sampler not in ("max_stable", "pareto"):
            raise ConfigError("sampler must be 'max_stable' or 'pareto'")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.data is not None and int(self.folds) < 2:
            raise ConfigError("cross-validation needs at least 2 folds")
        return self

    def resolved_n_train(self):
        if self.n_train is not None:
            return int(self.n_train)
        return n_for_k(int(self.k), self.k_exponent)

    def resolved_n_val(self):
        return int(self.n_val) if self.n_val is not None else self.resolved_n_train()

    def solver_options(self):
        return SolverOptions(tol=float(self.tol), max_iter=int(self.max_iter))

    def to_dict(self):
        d = asdict(self)
        if self.model is not None:
            d["model"] = SyntheticModelSpec.from_dict(self.model).to_dict()
            d["n_train"] = self.resolved_n_train()
            d["n_val"] = self.resolved_n_val()
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_spec(path, overrides=None):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentSpec.from_dict(d).validate()


def derived_seed(seed, *labels):
    """Independent 62-bit seed for a labelled sub-stream."""
    return int(generator(seed, "/".join(str(x) for x in labels)).integers(2**62))


# ------------------------------------------------------------------ trial data

def trial_truth(spec, trial):
    mspec = SyntheticModelSpec.from_dict(spec.model)
    mspec = replace(mspec, seed=derived_seed(spec.seed, "model", trial))
    return build_synthetic_model(mspec)


def trial_variograms(spec, trial):
    """Train and validation variograms for one trial, with the truth when synthetic."""
    if spec.data is not None:
        X = fileio.read_samples(spec.data)
        train, val = chronological_fold(X, trial, int(spec.folds))
        truth = None
    else:
        truth = trial_truth(spec, trial)
        train = sample_model(truth, spec.resolved_n_train(),
                             derived_seed(spec.seed, "train", trial), spec.sampler)
        val = sample_model(truth, spec.resolved_n_val(),
                           derived_seed(spec.seed, "val", trial), spec.sampler)
    ev_tr = empirical_variogram(train, spec.k_exponent, spec.threshold)
    ev_va = empirical_variogram(val, spec.k_exponent, spec.threshold)
    return ev_tr, ev_va, truth


def chronological_folds(n, folds):
    """Row-index blocks of (almost) equal size in time order."""
    edges = np.linspace(0, n, folds + 1).round().astype(int)
    return [np.arange(edges[i], edges[i + 1]) for i in range(folds)]


def chronological_fold(X, fold, folds=5):
    """``(train, validation)`` rows for fold ``fold``: the block is held out."""
    blocks = chronological_folds(X.shape[0], folds)
    held = blocks[fold]
    keep = np.concatenate([b for i, b in enumerate(blocks) if i != fold])
    return X[keep], X[held]


def resolve_grid(spec, G):
    if isinstance(spec.lambda_grid, dict):
        return default_lambda_grid(G, int(spec.lambda_grid.get("n_points", 30)),
                                   float(spec.lambda_grid.get("ratio", 1e-3)),
                                   float(spec.lambda_grid.get("top_factor", 10.0)))
    return np.asarray([float(x) for x in spec.lambda_grid])


# ------------------------------------------------------------------ one chain

def _fit(method, G, lam, gamma, opts, warm):
    if method == "eglatent":
        return eglatent(G, lam, gamma, opts, warm)
    return eglearn_baseline(G, lam, opts, warm)


def run_chain(spec, trial, method, gamma, grid, ev_tr, ev_va, truth):
    """Solve one warm-started lambda chain; failed points are recorded, not raised."""
    opts = spec.solver_options()
    rows = []
    warm = None
    for idx, lam in enumerate(grid):
        row = {"trial": trial, "method": method, "gamma": float(gamma) if method == "eglatent"
               else math.inf, "lambda_index": idx, "lambda": float(lam)}
        try:
            dec, rep = _fit(method, ev_tr.gamma_hat, lam, gamma, opts, warm)
            warm = rep.state
        except HRLatentError as exc:
            warm = None
            row.update({"edges": None, "rank": None, "f_score": None, "val_loglik": -math.inf,
                        "converged": False, "iterations": None, "error": str(exc)})
            rows.append(row)
            continue
        st = extract_structure(dec)
        theta = dec.theta
        if spec.refit:
            try:
                ref, _, _ = stage1_refit(ev_tr.gamma_hat, dec, opts)
                theta = ref.theta
            except InfeasibleRefitError:
                theta = None
        val = -math.inf if theta is None else validation_loglik(theta, ev_va.gamma_hat)
        row.update({
            "edges": len(st.edges), "rank": st.latent_rank,
            "f_score": None if truth is None else f_score(truth.conditional_edges, st.edges),
            "val_loglik": val, "converged": bool(rep.converged), "iterations": rep.iterations,
            "edge_list": [list(e) for e in st.edges],
        })
        rows.append(row)
    return rows


def _chain_key(trial, method, gamma):
    g = "inf" if method != "eglatent" else repr(float(gamma))
    return f"{trial}|{method}|{g}"


def _chain_job(args):
    spec_dict, trial, method, gamma, out = args
    spec = ExperimentSpec.from_dict(spec_dict)
    ev_tr, ev_va, truth = cached_trial(spec, trial, out)
    grid = resolve_grid(spec, ev_tr.gamma_hat)
    rows = run_chain(spec, trial, method, gamma, grid, ev_tr, ev_va, truth)
    append_manifest(out, _chain_key(trial, method, gamma), rows)
    return len(rows)


def cached_trial(spec, trial, out):
    """Trial variograms, computed once per output directory (write-once cache)."""
    from .variogram import EmpiricalVariogram

    path = os.path.join(out, "trials", f"trial_{trial:04d}.npz")
    with FileLock(path + ".lock"):
        if not os.path.exists(path):
            ev_tr, ev_va, truth = trial_variograms(spec, trial)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            tmp = path + ".tmp.npz"
            np.savez(tmp, train=ev_tr.gamma_hat, val=ev_va.gamma_hat,
                     meta=json.dumps({"train": ev_tr.metadata(), "val": ev_va.metadata()}))
            os.replace(tmp, path)
            if truth is not None:
                fileio.write_json(os.path.join(out, "trials", f"truth_{trial:04d}.json"),
                                  truth.to_dict())
            return ev_tr, ev_va, truth
    z = np.load(path)
    meta = json.loads(str(z["meta"]))
    ev_tr = EmpiricalVariogram(z["train"], meta["train"]["k"], meta["train"]["n"])
    ev_va = EmpiricalVariogram(z["val"], meta["val"]["k"], meta["val"]["n"])
    truth = trial_truth(spec, trial) if spec.data is None else None
    return ev_tr, ev_va, truth


# ------------------------------------------------------------------ manifest

def _encode(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _decode(v):
    if v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def append_manifest(out, chain, rows):
    path = os.path.join(out, MANIFEST)
    with FileLock(path + ".lock"):
        with open(path, "a") as fh:
            for row in rows:
                rec = {k: _encode(v) for k, v in row.items()}
                rec["chain"] = chain
                fh.write(json.dumps(rec) + "\n")


def read_manifest(out):
    path = os.path.join(out, MANIFEST)
    if not os.path.exists(path):
        return []
    with FileLock(path + ".lock"):
        with open(path) as fh:
            lines = fh.read().splitlines()
    rows = []
    for line in lines:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            continue  # a torn final line from an interrupted run
        rows.append({k: _decode(v) for k, v in rec.items()})
    return rows


def completed_chains(out, n_points):
    """Chains with every grid point recorded (duplicates from reruns collapse)."""
    seen = {}
    for r in read_manifest(out):
        seen.setdefault(r["chain"], set()).add(r["lambda_index"])
    return {c for c, idx in seen.items() if len(idx) >= n_points}


# ------------------------------------------------------------------ sweep

def chains(spec):
    out = []
    n_units = int(spec.folds) if spec.data is not None else int(spec.trials)
    for trial in range(n_units):
        for method in spec.methods:
            gammas = spec.gamma_values if method == "eglatent" else [math.inf]
            for g in gammas:
                out.append((trial, method, float(g)))
    return out


def grid_length(spec):
    if isinstance(spec.lambda_grid, dict):
        return int(spec.lambda_grid.get("n_points", 30))
    return len(spec.lambda_grid)


def run_experiment(spec, workers=1, progress=None):
    """Run (or resume) a sweep; returns ``(rows, summary)`` and writes all outputs."""
    spec.validate()
    out = spec.out
    os.makedirs(out, exist_ok=True)
    fileio.write_json(os.path.join(out, "spec.json"), spec.to_dict())
    done = completed_chains(out, grid_length(spec))
    todo = [c for c in chains(spec) if _chain_key(*c) not in done]
    sd = asdict(spec)
    jobs = [(sd, t, m, g, out) for t, m, g in todo]
    # trial data first, serially, so parallel chains never race on the cache
    for trial in sorted({t for t, _, _ in todo}):
        cached_trial(spec, trial, out)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as ex:
            for _ in ex.map(_chain_job, jobs):
                if progress:
                    progress()
    else:
        for job in jobs:
            _chain_job(job)
            if progress:
                progress()
    rows = assemble(spec, out)
    summary = summarize(spec, rows)
    if spec.data is not None:
        summary["final_fits"] = final_cv_fits(spec, rows)
    write_results(os.path.join(out, "results.csv"), rows)
    fileio.write_json(os.path.join(out, "summary.json"), summary)
    return rows, summary


def assemble(spec, out):
    """Canonical results table from the manifest, with selection flags."""
    order = {c: i for i, c in enumerate(_chain_key(*c) for c in chains(spec))}
    latest = {}
    for r in read_manifest(out):
        if r["chain"] in order:
            latest[(r["chain"], r["lambda_index"])] = r
    rows = sorted(latest.values(), key=lambda r: (order[r["chain"]], r["lambda_index"]))
    by_chain = {}
    for r in rows:
        by_chain.setdefault(r["chain"], []).append(r)
    for chain_rows in by_chain.values():
        for r in chain_rows:
            r["selected_validation"] = False
            r["selected_oracle"] = False
        val = [r["val_loglik"] if r["val_loglik"] is not None else -math.inf for r in chain_rows]
        try:
            chain_rows[grid_select(None, scores=val)]["selected_validation"] = True
        except NoValidModelError:
            pass
        if chain_rows[0].get("f_score") is not None:
            fs = [-math.inf if r["f_score"] is None else r["f_score"] for r in chain_rows]
            try:
                chain_rows[grid_select(None, scores=fs)]["selected_oracle"] = True
            except NoValidModelError:
                pass
    return rows


def write_results(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, extrasaction="ignore",
                           lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else _csv_val(r.get(k))) for k in RESULT_COLUMNS})


def _csv_val(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _median(xs):
    xs = [x for x in xs if x is not None]
    return float(np.median(xs)) if xs else None


def summarize(spec, rows):
    """Per (method, gamma) medians over trials of the selected models."""
    cells = {}
    for r in rows:
        cells.setdefault((r["method"], r["gamma"]), {}).setdefault(r["trial"], []).append(r)
    true_rank = None
    if spec.model is not None:
        true_rank = int(SyntheticModelSpec.from_dict(spec.model).h)
    out = []
    for (method, gamma), trials in cells.items():
        cell = {"method": method, "gamma": None if not math.isfinite(gamma) else gamma,
                "trials": len(trials)}
        for rule in ("validation", "oracle"):
            picked = [next((r for r in tr if r[f"selected_{rule}"]), None) for tr in trials.values()]
            picked = [p for p in picked if p is not None]
            if not picked:
                continue
            cell[rule] = {
                "median_f_score": _median([p["f_score"] for p in picked]),
                "median_rank": _median([p["rank"] for p in picked]),
                "median_edges": _median([p["edges"] for p in picked]),
                "median_lambda": _median([p["lambda"] for p in picked]),
                "rank_correct_fraction": (None if true_rank is None or method != "eglatent" else
                                          float(np.mean([p["rank"] == true_rank for p in picked]))),
                "n_selected": len(picked),
            }
        cell["failed_points"] = sum(1 for tr in trials.values() for r in tr if not r["converged"])
        out.append(cell)
    return {"cells": out, "lambda_grid": _grid_echo(spec), "selection": spec.selection}


def _grid_echo(spec):
    if isinstance(spec.lambda_grid, dict):
        return {"rule": "10 * max|offdiag(Pi (-G/2) Pi)| down by ratio, log-spaced",
                **spec.lambda_grid}
    return list(spec.lambda_grid)


def final_cv_fits(spec, rows):
    """For CSV input: lambda with the best mean fold log-likelihood, refit on all rows."""
    X = fileio.read_samples(spec.data)
    ev = empirical_variogram(X, spec.k_exponent, spec.threshold)
    opts = spec.solver_options()
    fits = []
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["gamma"]), {}).setdefault(r["lambda_index"], []).append(r)
    for (method, gamma), by_idx in groups.items():
        idx = sorted(by_idx)
        means = [float(np.mean([-math.inf if r["val_loglik"] is None else r["val_loglik"]
                                for r in by_idx[i]])) for i in idx]
        try:
            best = idx[grid_select(None, scores=means)]
        except NoValidModelError:
            fits.append({"method": method, "gamma": gamma, "error": "no valid model"})
            continue
        lam = by_idx[best][0]["lambda"]
        dec, rep = _fit(method, ev.gamma_hat, lam, gamma, opts, None)
        st = extract_structure(dec)
        fits.append({"method": method, "gamma": None if not math.isfinite(gamma) else gamma,
                     "lambda": lam, "mean_cv_loglik": means[idx.index(best)],
                     "edges": [list(e) for e in st.edges], "rank": st.latent_rank,
                     "converged": rep.converged, "k": ev.k})
    return fits


def simulate_to_dir(model, n_train, n_val, seed, out, sampler="max_stable"):
    """Write train/validation sample CSVs and the ground truth for one model."""
    truth = build_synthetic_model(SyntheticModelSpec.from_dict({**model, "seed": seed}))
    os.makedirs(out, exist_ok=True)
    train = sample_model(truth, n_train, derived_seed(seed, "train", 0), sampler)
    fileio.write_samples(os.path.join(out, "train.csv"), train)
    paths = {"train": os.path.join(out, "train.csv")}
    if n_val:
        val = sample_model(truth, n_val, derived_seed(seed, "val", 0), sampler)
        fileio.write_samples(os.path.join(out, "val.csv"), val)
        paths["val"] = os.path.join(out, "val.csv")
    gt = truth.to_dict()
    gt["latent_rank"] = truth.h
    S, L = truth.sparse_and_lowrank()
    gt["S_star"] = fileio.matrix_envelope(S, "sparse")
    gt["L_star"] = fileio.matrix_envelope(L, "lowrank")
    fileio.write_json(os.path.join(out, "ground_truth.json"), gt)
    paths["truth"] = os.path.join(out, "ground_truth.json")
    return truth, paths

