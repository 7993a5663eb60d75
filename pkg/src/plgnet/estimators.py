"""The three structure learners: PLG, node-wise logistic regression, direct PL.

Penalty scales. PLG and the direct optimizer take the pseudo-likelihood
``lam`` (penalty ``N * lam * sum_{s<t} |theta_st|``). The stacked solver
averages over ``N * p`` rows, so it receives ``lam / p``. NLR takes its own
``lam`` and solves each node regression averaged over ``N`` rows; since every
edge is penalized once in each of its two node regressions, NLR at ``lam / 2``
matches PLG at ``lam``.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from plgnet.model import (
    ObjectiveValue,
    SampleMatrix,
    ThetaMatrix,
    offdiag_penalty,
    pl_value_and_gradient,
    pseudo_likelihood,
)
from plgnet.solver import (
    ConvergenceError,
    DegenerateResponseError,
    SolverConfig,
    check_grid,
    fit_path,
    lambda_max,
)
from plgnet.transform import (
    DenseDesign,
    StackedProblem,
    _logit_clamped,
    build_stacked,
    devectorize,
    n_pairs,
    pair_tables,
    vectorize,
)

FIT_SCHEMA = "plgnet.fit/1"
METHODS = ("PLG", "NLR", "DirectPL")
SYMMETRIZE_RULES = ("mean", "and", "or")


@dataclass
class DirectConfig:
    tol: float = 1e-7
    max_iter: int = 50_000
    backtrack: float = 0.5
    power_iters: int = 100
    accelerate: bool = True

    def to_dict(self) -> dict:
        return dict(tol=self.tol, max_iter=self.max_iter, backtrack=self.backtrack,
                    power_iters=self.power_iters, accelerate=self.accelerate)


@dataclass
class FitReport:
    method: str
    lambdas: np.ndarray
    internal_lambdas: np.ndarray
    estimates: list[ThetaMatrix]
    objective: list[ObjectiveValue]
    wall_time_ns: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    warnings: list[str] = field(default_factory=list)
    kkt_max_violation: np.ndarray | None = None
    asymmetry: np.ndarray | None = None
    setup_time_ns: int = 0

    def edge_counts(self) -> np.ndarray:
        return np.array([est.n_edges() for est in self.estimates])

    def to_json_dict(self, include_timing: bool = True) -> dict:
        fits = []
        for i, lam in enumerate(self.lambdas):
            est = self.estimates[i]
            row = {
                "lambda": float(lam),
                "internal_lambda": float(self.internal_lambdas[i]),
                "diagonal": [float(v) for v in est.diagonal],
                "edges": [[s + 1, t + 1, v] for s, t, v in est.edges()],
                "objective": self.objective[i].to_dict(),
                "converged": bool(self.converged[i]),
                "iterations": int(self.iterations[i]),
            }
            if self.kkt_max_violation is not None:
                row["kkt_max_violation"] = float(self.kkt_max_violation[i])
            if self.asymmetry is not None:
                row["asymmetry"] = float(self.asymmetry[i])
            if include_timing:
                row["wall_time_ns"] = int(self.wall_time_ns[i])
            fits.append(row)
        out = {
            "schema": FIT_SCHEMA,
            "method": self.method,
            "p": self.estimates[0].p if self.estimates else None,
            "lambdas": [float(v) for v in self.lambdas],
            "fits": fits,
            "warnings": list(self.warnings),
        }
        if include_timing:
            out["setup_time_ns"] = int(self.setup_time_ns)
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_json_dict(include_timing), indent=1)


def load_fit_estimates(d: dict) -> tuple[list[float], list[ThetaMatrix]]:
    """Recover (lambdas, estimates) from a FitReport JSON document."""
    p = int(d["p"])
    lams, ests = [], []
    for row in d["fits"]:
        th = np.diag(np.asarray(row["diagonal"], dtype=float))
        for s, t, v in row["edges"]:
            th[s - 1, t - 1] = th[t - 1, s - 1] = v
        lams.append(float(row["lambda"]))
        ests.append(ThetaMatrix(th))
    if any(e.p != p for e in ests):
        raise ValueError("inconsistent p in fit report")
    return lams, ests


def _as_samples(X) -> SampleMatrix:
    sm = X if isinstance(X, SampleMatrix) else SampleMatrix(X)
    if sm.p < 2:
        raise ValueError("need at least two vertices")
    return sm


def _decreasing_order(lambdas) -> tuple[np.ndarray, np.ndarray]:
    """Return the decreasing grid and the permutation mapping it back to caller order."""
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    order = np.argsort(-lam, kind="stable")
    grid = check_grid(lam[order])
    return grid, order


def relative_difference(a, b) -> float:
    """||vec(a) - vec(b)||_2 / ||vec(b)||_2 over the stacked parameter vectors."""
    va, vb = vectorize(a), vectorize(b)
    if va.shape != vb.shape:
        raise ValueError("matrices must have the same p")
    denom = np.linalg.norm(vb)
    if denom == 0:
        raise ZeroDivisionError("reference parameter is all zero")
    return float(np.linalg.norm(va - vb) / denom)


# -- PLG ---------------------------------------------------------------

def plg_lambda_max(X) -> float:
    """Smallest pseudo-likelihood lambda giving an empty graph under PLG."""
    sm = _as_samples(X)
    return sm.p * lambda_max(build_stacked(sm))


def fit_plg(X, lambdas, cfg: SolverConfig | None = None) -> FitReport:
    """Pseudo-likelihood by one stacked L1 logistic regression."""
    sm = _as_samples(X)
    cfg = cfg or SolverConfig()
    grid, order = _decreasing_order(lambdas)
    t0 = time.perf_counter_ns()
    sp = build_stacked(sm)
    setup = time.perf_counter_ns() - t0
    path = fit_path(sp, cfg, lambdas=grid / sm.p)

    estimates = [devectorize(path.coefficients[i], sm.p) for i in range(grid.size)]
    inv = np.argsort(order)
    lam_user = grid[inv]
    ests = [estimates[i] for i in inv]
    return FitReport(
        method="PLG",
        lambdas=lam_user,
        internal_lambdas=lam_user / sm.p,
        estimates=ests,
        objective=[pseudo_likelihood(e, sm, lam) for e, lam in zip(ests, lam_user)],
        wall_time_ns=path.wall_time_ns[inv],
        converged=path.converged[inv],
        iterations=path.n_iterations[inv],
        warnings=list(path.warnings),
        kkt_max_violation=path.kkt_max_violation[inv],
        setup_time_ns=setup,
    )


# -- NLR ---------------------------------------------------------------

def node_problem(X: np.ndarray, s: int) -> StackedProblem:
    """L1 logistic regression of column s on the others plus an unpenalized intercept (last)."""
    p = X.shape[1]
    D = np.column_stack([np.delete(X, s, axis=1), np.ones(X.shape[0])])
    pf = np.concatenate([np.ones(p - 1), [0.0]])
    return StackedProblem(DenseDesign(D, intercept=p - 1), X[:, s].copy(), pf)


def nlr_lambda_max(X) -> float:
    sm = _as_samples(X)
    Xf = sm.as_float()
    out = 0.0
    for s in range(sm.p):
        try:
            out = max(out, lambda_max(node_problem(Xf, s)))
        except DegenerateResponseError:
            continue
    return out


def symmetrize(A: np.ndarray, rule: str = "mean") -> ThetaMatrix:
    """Combine node-wise rows ``A[s, t]`` (regression of s on t) into a symmetric matrix."""
    if rule not in SYMMETRIZE_RULES:
        raise ValueError(f"unknown symmetrization rule {rule!r}")
    a, b = A, A.T
    if rule == "mean":
        out = (a + b) / 2
    elif rule == "and":
        out = np.where((a != 0) & (b != 0), (a + b) / 2, 0.0)
    else:
        cnt = (a != 0).astype(float) + (b != 0)
        out = np.where(cnt > 0, (a + b) / np.maximum(cnt, 1), 0.0)
    np.fill_diagonal(out, np.diag(A))
    return ThetaMatrix(out)


def _fit_node(Xf, s, grid, cfg):
    p = Xf.shape[1]
    others = np.delete(np.arange(p), s)
    rows = np.zeros((grid.size, p))
    notes = []
    try:
        path = fit_path(node_problem(Xf, s), cfg, lambdas=grid, raise_on_failure=False)
    except DegenerateResponseError:
        rows[:, s] = _logit_clamped(Xf[:, s].mean())
        notes.append(f"node {s + 1}: constant column, intercept-only fit")
        zeros = np.zeros(grid.size, dtype=np.int64)
        return rows, zeros, zeros, np.ones(grid.size, dtype=bool), np.zeros(grid.size), notes
    rows[:, others] = path.coefficients[:, :-1]
    rows[:, s] = path.coefficients[:, -1]
    for i in np.flatnonzero(~path.converged):
        notes.append(f"node {s + 1}: no convergence at lambda={grid[i]:.6g} "
                     f"(KKT violation {path.kkt_max_violation[i]:.3g})")
    notes.extend(f"node {s + 1}: {w}" for w in path.warnings if "no KKT certificate" not in w)
    return rows, path.wall_time_ns, path.n_iterations, path.converged, path.kkt_max_violation, notes


def fit_nlr(X, lambdas, cfg: SolverConfig | None = None, symmetrize_rule: str = "mean",
            threads: int = 1) -> FitReport:
    """Node-wise L1 logistic regression, symmetrized by ``symmetrize_rule``.

    Non-converged node fits keep their best iterate and are reported in
    ``warnings`` and ``converged``; the other nodes are unaffected.
    """
    sm = _as_samples(X)
    cfg = cfg or SolverConfig()
    if symmetrize_rule not in SYMMETRIZE_RULES:
        raise ValueError(f"unknown symmetrization rule {symmetrize_rule!r}")
    grid, order = _decreasing_order(lambdas)
    Xf = sm.as_float()
    p = sm.p
    nodes = range(p)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda s: _fit_node(Xf, s, grid, cfg), nodes))
    else:
        results = [_fit_node(Xf, s, grid, cfg) for s in nodes]

    L = grid.size
    A = np.zeros((L, p, p))
    times = np.zeros(L, dtype=np.int64)
    iters = np.zeros(L, dtype=np.int64)
    conv = np.ones(L, dtype=bool)
    kkt = np.zeros(L)
    notes: list[str] = []
    for s, (rows, t_ns, it, cv, kv, nn) in enumerate(results):
        A[:, s, :] = rows
        times += t_ns
        iters += it
        conv &= cv
        kkt = np.maximum(kkt, kv)
        notes.extend(nn)

    estimates = [symmetrize(A[i], symmetrize_rule) for i in range(L)]
    iu = np.triu_indices(p, 1)
    asym = np.array([np.abs(A[i] - A[i].T)[iu].max() if p > 1 else 0.0 for i in range(L)])
    inv = np.argsort(order)
    lam_user = grid[inv]
    ests = [estimates[i] for i in inv]
    return FitReport(
        method="NLR",
        lambdas=lam_user,
        internal_lambdas=lam_user.copy(),
        estimates=ests,
        objective=[pseudo_likelihood(e, sm, 2 * lam) for e, lam in zip(ests, lam_user)],
        wall_time_ns=times[inv],
        converged=conv[inv],
        iterations=iters[inv],
        warnings=notes,
        kkt_max_violation=kkt[inv],
        asymmetry=asym[inv],
    )


# -- direct proximal gradient --------------------------------------------

def _power_iteration_lmax(X: np.ndarray, iters: int) -> float:
    """Largest eigenvalue of the pseudo-likelihood Hessian at theta = 0: (1/4) D^T D of the stacked design."""
    design = build_stacked(X).design
    v = np.ones(design.n_features)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = 0.25 * design.rmatvec(design.matvec(v))
        lam = float(np.linalg.norm(u))
        if lam == 0:
            return 1.0
        v = u / lam
    return lam


def _direct_solve(Xf: np.ndarray, lam: float, v0: np.ndarray, step0: float, cfg: DirectConfig):
    """Minimize -loglik + N lam sum|pairs| over the stacked vector by (accelerated) proximal gradient."""
    N, p = Xf.shape
    m = n_pairs(p)
    ps, pt = pair_tables(p)
    pen_level = N * lam

    def smooth(v):
        th = np.diag(v[m:])
        th[ps, pt] = v[:m]
        th[pt, ps] = v[:m]
        val, G = pl_value_and_gradient(th, Xf)
        return -val, -np.concatenate([G[ps, pt], np.diag(G)])

    def prox(z, step):
        out = z.copy()
        thr = step * pen_level
        out[:m] = np.sign(z[:m]) * np.maximum(np.abs(z[:m]) - thr, 0.0)
        return out

    def penalty(v):
        return pen_level * np.abs(v[:m]).sum()

    x = v0.copy()
    hx, _ = smooth(x)
    Fx = hx + penalty(x)
    y, t_mom, step = x.copy(), 1.0, step0
    mapping = np.inf
    for it in range(1, cfg.max_iter + 1):
        hy, gy = smooth(y)
        while True:
            z = prox(y - step * gy, step)
            d = z - y
            hz, _ = smooth(z)
            if hz <= hy + gy @ d + (d @ d) / (2 * step) + 1e-12 * abs(hy):
                break
            step *= cfg.backtrack
        mapping = float(np.max(np.abs(d))) / step
        Fz = hz + penalty(z)
        if cfg.accelerate and Fz > Fx and t_mom > 1.0:
            # function-value restart: drop momentum and retry from x
            y, t_mom = x.copy(), 1.0
            continue
        if cfg.accelerate:
            t_new = (1 + np.sqrt(1 + 4 * t_mom * t_mom)) / 2
            y = z + ((t_mom - 1) / t_new) * (z - x)
            t_mom = t_new
        else:
            y = z
        x, Fx = z, Fz
        if mapping < cfg.tol:
            return x, it, True, mapping
    return x, cfg.max_iter, False, mapping


def fit_direct_pl(X, lambdas, cfg: DirectConfig | None = None) -> FitReport:
    """Maximize the penalized pseudo-likelihood directly over theta (reference optimizer)."""
    sm = _as_samples(X)
    cfg = cfg or DirectConfig()
    grid, order = _decreasing_order(lambdas)
    Xf = sm.as_float()
    p = sm.p
    t0 = time.perf_counter_ns()
    step0 = 1.0 / _power_iteration_lmax(sm, cfg.power_iters)
    setup = time.perf_counter_ns() - t0

    v = np.zeros(n_pairs(p) + p)
    L = grid.size
    coefs, times = [], np.zeros(L, dtype=np.int64)
    iters = np.zeros(L, dtype=np.int64)
    conv = np.zeros(L, dtype=bool)
    maps = np.zeros(L)
    notes = []
    for i, lam in enumerate(grid):
        t0 = time.perf_counter_ns()
        v, it, ok, mapping = _direct_solve(Xf, lam, v, step0, cfg)
        times[i] = time.perf_counter_ns() - t0
        coefs.append(v.copy())
        iters[i], conv[i], maps[i] = it, ok, mapping
        if not ok:
            notes.append(f"lambda={lam:.6g}: no convergence after {it} iterations "
                         f"(gradient mapping {mapping:.3g})")
    estimates = [devectorize(c, p) for c in coefs]
    inv = np.argsort(order)
    lam_user = grid[inv]
    ests = [estimates[i] for i in inv]
    return FitReport(
        method="DirectPL",
        lambdas=lam_user,
        internal_lambdas=lam_user.copy(),
        estimates=ests,
        objective=[pseudo_likelihood(e, sm, lam) for e, lam in zip(ests, lam_user)],
        wall_time_ns=times[inv],
        converged=conv[inv],
        iterations=iters[inv],
        warnings=notes,
        kkt_max_violation=maps[inv],
        setup_time_ns=setup,
    )


def fit(method: str, X, lambdas, cfg=None, **kwargs) -> FitReport:
    """Dispatch by method name (case-insensitive: plg, nlr, direct/directpl)."""
    key = method.lower()
    if key == "plg":
        return fit_plg(X, lambdas, cfg)
    if key == "nlr":
        return fit_nlr(X, lambdas, cfg, **kwargs)
    if key in ("direct", "directpl"):
        return fit_direct_pl(X, lambdas, cfg)
    raise ValueError(f"unknown method {method!r}")


__all__ = [
    "ConvergenceError",
    "DirectConfig",
    "FitReport",
    "fit",
    "fit_direct_pl",
    "fit_nlr",
    "fit_plg",
    "nlr_lambda_max",
    "plg_lambda_max",
    "relative_difference",
    "symmetrize",
]
