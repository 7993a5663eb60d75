"""Command-line front end: simulate, fit, select, roc, bench.

Every command writes its outputs plus one ``manifest.json`` into
``--output-dir``. The manifest echoes the full configuration and seeds,
names inputs by basename with their SHA-256, and hashes every
deterministic output. Timing-bearing files are listed without a hash so
that reruns produce byte-identical manifests.

Exit codes: 0 success, 2 usage or validation error, 3 infeasible
configuration, 4 solver failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from plgnet import __version__
from plgnet.estimators import (
    DirectConfig,
    FIT_SCHEMA,
    fit,
    load_fit_estimates,
    nlr_lambda_max,
    plg_lambda_max,
)
from plgnet.evaluation import MIN_REPEATS, bench_fit, roc_curve, roc_curve_path, time_ratio, write_bench_csv
from plgnet.model import THETA_SCHEMA, BinaryDataError, DimensionError, SampleMatrix, ThetaMatrix
from plgnet.sampling import GibbsConfig, GraphSpec, sidecar, simulate
from plgnet.selection import NoFeasibleLambdaError, StarsConfig, stars_select
from plgnet.solver import ConvergenceError, SolverConfig, auto_grid

MANIFEST_SCHEMA = "plgnet.manifest/1"
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4


class UsageError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects outputs of one command and writes its manifest."""

    def __init__(self, args, command: str):
        self.dir = Path(args.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.args = args
        self.inputs: list[dict] = []
        self.outputs: list[dict] = []
        self.schemas: dict[str, str] = {}
        self.extra: dict = {}

    def path(self, name: str) -> Path:
        return self.dir / name

    def add_input(self, path) -> None:
        self.inputs.append({"name": os.path.basename(path), "sha256": sha256_file(path)})

    def add_output(self, name: str, deterministic: bool = True, schema: str | None = None) -> None:
        entry = {"path": name, "sha256": sha256_file(self.path(name)) if deterministic else None}
        self.outputs.append(entry)
        if schema:
            self.schemas[name] = schema

    def write_text(self, name: str, text: str, deterministic: bool = True, schema: str | None = None) -> None:
        self.path(name).write_text(text)
        self.add_output(name, deterministic, schema)

    def config(self) -> dict:
        skip = {"output_dir", "func", "command"}
        cfg = {}
        for k, v in sorted(vars(self.args).items()):
            if k in skip:
                continue
            if k in ("input", "truth", "estimate") and v is not None:
                v = os.path.basename(v)
            cfg[k] = v
        return cfg

    def finish(self, status: str = "ok") -> None:
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "tool": "plgnet",
            "version": __version__,
            "command": self.command,
            "status": status,
            "config": self.config(),
            "seed": self.args.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "schemas": self.schemas,
            **self.extra,
        }
        self.path("manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


# -- argument helpers --------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _auto_grid_spec(text: str) -> tuple[int, float]:
    try:
        k, ratio = text.split(",")
        return int(k), float(ratio)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--auto-grid expects k,ratio, got {text!r}")


def _diag_spec(text: str) -> tuple[int, float]:
    """``s=v`` with 1-based vertex s."""
    try:
        s, v = text.split("=")
        s = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--diag expects s=v, got {text!r}")
    if s < 1:
        raise argparse.ArgumentTypeError("--diag vertex is 1-based")
    return s, float(v)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(tol=args.tol, max_outer=args.max_outer, max_inner=args.max_inner,
                        screening=args.screening, kkt_tol=args.kkt_tol)


def _method_config(args, method: str):
    if method == "direct":
        return DirectConfig(tol=args.tol, max_iter=args.max_iter)
    return _solver_config(args)


def _load_samples(args) -> SampleMatrix:
    return SampleMatrix.load_csv(args.input, impute_zero=getattr(args, "impute_zero", False))


def _grid(args, sm: SampleMatrix, method: str) -> np.ndarray:
    if args.lambdas is not None:
        return np.asarray(args.lambdas, dtype=float)
    k, ratio = args.auto_grid
    if k < 1 or not 0 < ratio < 1:
        raise UsageError("--auto-grid needs k >= 1 and 0 < ratio < 1")
    lam_max = nlr_lambda_max(sm) if method == "nlr" else plg_lambda_max(sm)
    return auto_grid(lam_max, k, ratio)


def _add_solver_flags(sp) -> None:
    g = sp.add_argument_group("solver")
    g.add_argument("--tol", type=float, default=1e-7, help="coefficient-change tolerance")
    g.add_argument("--kkt-tol", type=float, default=None, help="KKT certificate tolerance (default 10*tol)")
    g.add_argument("--max-outer", type=int, default=100, help="IRLS iteration budget per lambda")
    g.add_argument("--max-inner", type=int, default=10_000, help="coordinate sweeps per IRLS step")
    g.add_argument("--max-iter", type=int, default=50_000, help="iteration budget of the direct optimizer")
    g.add_argument("--screening", choices=("strong", "none"), default="strong")


def _add_grid_flags(sp, required: bool = True) -> None:
    g = sp.add_mutually_exclusive_group(required=required)
    g.add_argument("--lambda", dest="lambdas", type=_float_list, help="penalty value(s), comma-separated")
    g.add_argument("--auto-grid", type=_auto_grid_spec, help="k,ratio: k log-spaced values from lambda_max down")


def _add_sim_flags(sp, required: bool) -> None:
    sp.add_argument("--p", type=int, required=required, help="number of vertices")
    sp.add_argument("--edge-prob", type=float, default=0.3)
    sp.add_argument("--n", type=int, default=1000, help="number of recorded samples")
    sp.add_argument("--burn-in", type=int, default=1000)
    sp.add_argument("--thinning", type=int, default=1)
    sp.add_argument("--diag", type=_diag_spec, action="append", default=[],
                    help="node potential override s=v (1-based s), repeatable")
    sp.add_argument("--weight-low", type=float, default=-1.0)
    sp.add_argument("--weight-high", type=float, default=1.0)


def _sim_specs(args) -> tuple[GraphSpec, GibbsConfig]:
    for s, _ in args.diag:
        if s > args.p:
            raise UsageError(f"--diag vertex {s} exceeds p={args.p}")
    spec = GraphSpec(p=args.p, edge_prob=args.edge_prob, seed=args.seed, weight_low=args.weight_low,
                     weight_high=args.weight_high, diagonal_override=[(s - 1, v) for s, v in args.diag])
    gcfg = GibbsConfig(n_samples=args.n, burn_in=args.burn_in, thinning=args.thinning, seed=args.seed)
    return spec, gcfg


# -- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec, gcfg = _sim_specs(args)
    run = Run(args, "simulate")
    theta, samples = simulate(spec, gcfg)
    theta.save_json(run.path("theta.json"))
    run.add_output("theta.json", schema=THETA_SCHEMA)
    samples.save_csv(run.path("samples.csv"))
    run.add_output("samples.csv")
    run.write_text("simulation.json", sidecar(spec, gcfg) + "\n", schema="plgnet.simulation/1")
    run.finish()
    return EXIT_OK


def cmd_fit(args) -> int:
    sm = _load_samples(args)
    run = Run(args, "fit")
    run.add_input(args.input)
    grid = _grid(args, sm, args.method)
    cfg = _method_config(args, args.method)
    kwargs = {"symmetrize_rule": args.symmetrize, "threads": args.threads} if args.method == "nlr" else {}
    try:
        rep = fit(args.method, sm, grid, cfg, **kwargs)
    except ConvergenceError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        run.finish(status="solver-failure")
        return EXIT_SOLVER
    run.write_text("coefficients.json", rep.to_json(include_timing=False) + "\n", schema=FIT_SCHEMA)
    run.write_text("fit_report.json", rep.to_json(include_timing=True) + "\n", deterministic=False,
                   schema=FIT_SCHEMA)
    lines = ["lambda,s,t,weight"]
    for lam, est in zip(rep.lambdas, rep.estimates):
        for s, t, v in est.edges(positive_only=args.positive_only):
            lines.append(f"{lam!r},{s + 1},{t + 1},{v!r}")
    run.write_text("edges.csv", "\n".join(lines) + "\n")
    run.extra["solver"] = cfg.to_dict()
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.method == "direct" and not rep.converged.all():
        run.finish(status="solver-failure")
        return EXIT_SOLVER
    run.finish()
    return EXIT_OK


def cmd_select(args) -> int:
    sm = _load_samples(args)
    run = Run(args, "select")
    run.add_input(args.input)
    # the grid is on the PLG scale for either estimator; NLR gets the selection halved
    grid = np.sort(_grid(args, sm, "plg"))[::-1]
    scfg = StarsConfig(lambda_grid=grid, n_subsamples=args.subsamples, subsample_size=args.subsample_size,
                       beta=args.beta, seed=args.seed, estimator=args.estimator.upper())
    run.extra["stars"] = scfg.to_dict()
    try:
        res = stars_select(sm, scfg, _solver_config(args), threads=args.threads)
        status, code = "ok", EXIT_OK
    except NoFeasibleLambdaError as exc:
        print(f"error: {exc}; extend the grid towards larger lambda", file=sys.stderr)
        res, status, code = exc.result, "infeasible", EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        run.finish(status="solver-failure")
        return EXIT_SOLVER
    res.write_csv(run.path("instability.csv"))
    run.add_output("instability.csv")
    sel = None if code else res.selected_lambda
    run.write_text("selection.json", json.dumps({"schema": "plgnet.selection/1", "estimator": res.estimator,
                                                 "selected_lambda": sel,
                                                 "subsample_size": res.subsample_size}, indent=1) + "\n",
                   schema="plgnet.selection/1")
    if sel is not None:
        print(f"selected lambda {sel!r}")
    run.finish(status)
    return code


def _load_estimates(path) -> tuple[list[float] | None, list[ThetaMatrix]]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") == FIT_SCHEMA:
        lams, ests = load_fit_estimates(doc)
        return lams, ests
    return None, [ThetaMatrix.from_json_dict(doc)]


def cmd_roc(args) -> int:
    run = Run(args, "roc")
    truth = ThetaMatrix.load_json(args.truth)
    run.add_input(args.truth)
    run.add_input(args.estimate)
    lams, ests = _load_estimates(args.estimate)
    if any(e.p != truth.p for e in ests):
        raise DimensionError("truth and estimate differ in p")
    points = ["lambda,threshold,fpr,tpr"]
    aucs = ["mode,lambda,auc"]
    if args.mode == "path":
        if lams is None:
            raise UsageError("path mode needs a fit report with several lambdas")
        curves = [(None, roc_curve_path(truth, lams, ests))]
    else:
        keys = lams if lams is not None else [None]
        curves = [(lam, roc_curve(truth, est)) for lam, est in zip(keys, ests)]
    for lam, c in curves:
        tag = "" if lam is None else repr(float(lam))
        for thr, (f, t) in zip(c.thresholds, c.points):
            points.append(f"{tag},{float(thr)!r},{f!r},{t!r}")
        aucs.append(f"{c.mode},{tag},{c.auc!r}")
        print(f"{c.mode} lambda={tag or '-'} auc={c.auc:.6f}")
    run.write_text("roc.csv", "\n".join(points) + "\n")
    run.write_text("auc.csv", "\n".join(aucs) + "\n")
    run.finish()
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.repeats < MIN_REPEATS:
        print(f"warning: --repeats {args.repeats} is below the minimum of {MIN_REPEATS}", file=sys.stderr)
        return EXIT_USAGE
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("plg", "nlr", "direct"):
            raise UsageError(f"unknown method {m!r}")
    run = Run(args, "bench")
    if args.input:
        sm = _load_samples(args)
        run.add_input(args.input)
        edge_prob = None
    else:
        if args.p is None:
            raise UsageError("bench needs --input or --p to simulate data")
        spec, gcfg = _sim_specs(args)
        _, sm = simulate(spec, gcfg)
        edge_prob = args.edge_prob
    records = []
    for m in methods:
        grid = _grid(args, sm, "plg")
        # NLR at lambda/2 solves the same penalized problem scale as PLG at lambda
        lam = grid / 2 if m == "nlr" else grid
        kwargs = {"threads": args.threads} if m == "nlr" else {}
        try:
            records += bench_fit(m, sm, lam, _method_config(args, m), args.repeats,
                                 edge_prob=edge_prob, trial_seed=args.seed, **kwargs)
        except ConvergenceError as exc:
            print(f"error: solver failure in {m}: {exc}", file=sys.stderr)
            run.finish(status="solver-failure")
            return EXIT_SOLVER
    write_bench_csv(records, run.path("bench.csv"))
    run.add_output("bench.csv", deterministic=False)
    run.write_text("iterations.csv", "method,lambda,iterations,converged\n" + "".join(
        f"{r.method},{r.lam!r},{r.iterations},{int(r.converged)}\n" for r in records))
    for m in {r.method for r in records}:
        print(f"{m}: small/large lambda time ratio {time_ratio(records, m):.2f}")
    run.finish()
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plgnet", description=__doc__.split("\n")[0])
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for NLR nodes and StARS subsamples")
    ap.add_argument("--output-dir", default=".", help="directory for outputs and manifest.json")
    ap.add_argument("--version", action="version", version=f"plgnet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="random graph and Gibbs samples")
    _add_sim_flags(sp, required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit PLG, NLR or the direct optimizer")
    sp.add_argument("--input", required=True, help="headerless 0/1 CSV, one sample per row")
    sp.add_argument("--method", choices=("plg", "nlr", "direct"), default="plg")
    _add_grid_flags(sp)
    sp.add_argument("--symmetrize", choices=("mean", "and", "or"), default="mean", help="NLR symmetrization")
    sp.add_argument("--impute-zero", action="store_true", help="read missing or non-binary entries as 0")
    sp.add_argument("--positive-only", action="store_true", help="edge list keeps positive weights only")
    _add_solver_flags(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("select", help="StARS penalty selection")
    sp.add_argument("--input", required=True)
    _add_grid_flags(sp)
    sp.add_argument("--beta", type=float, default=0.05)
    sp.add_argument("--subsamples", type=int, default=20)
    sp.add_argument("--subsample-size", type=int, default=None)
    sp.add_argument("--estimator", choices=("plg", "nlr"), default="plg",
                    help="nlr reports the PLG selection halved")
    sp.add_argument("--impute-zero", action="store_true")
    _add_solver_flags(sp)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("roc", help="ROC points and AUC against a true graph")
    sp.add_argument("--truth", required=True, help="theta JSON of the true graph")
    sp.add_argument("--estimate", required=True, help="theta JSON or fit report JSON")
    sp.add_argument("--mode", choices=("per-lambda", "path"), default="per-lambda")
    sp.set_defaults(func=cmd_roc)

    sp = sub.add_parser("bench", help="per-lambda timing of the estimators")
    sp.add_argument("--input", default=None, help="samples CSV (otherwise simulate from --p ...)")
    _add_sim_flags(sp, required=False)
    sp.add_argument("--methods", default="plg,nlr")
    sp.add_argument("--repeats", type=int, default=MIN_REPEATS)
    _add_grid_flags(sp)
    sp.add_argument("--impute-zero", action="store_true")
    _add_solver_flags(sp)
    sp.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, BinaryDataError, DimensionError, ValueError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
