"""Pathwise L1-penalized logistic regression by IRLS and coordinate descent.

Minimizes, for each penalty level ``lam``::

    (1/n) sum_k [log(1 + exp(eta_k)) - y_k eta_k] + lam * sum_j pf_j |beta_j|

where ``eta = D beta`` and ``n`` is the number of design rows. Callers pass
``lam`` already on this per-observation scale.

Each IRLS round forms the weighted least-squares surrogate at the current
fit and solves it by cyclic coordinate descent, first over all eligible
coordinates, then repeatedly over the active ones. Strong rules discard
penalized coordinates up front; a KKT check over every coordinate re-admits
any that were wrongly discarded.
"""
from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from plgnet import _kernels
from plgnet.model import sigmoid, softplus
from plgnet.transform import StackedProblem

log = logging.getLogger(__name__)

PATH_SCHEMA = "plgnet.path/1"
SEPARATION_BOUND = 30.0
MAX_HALVINGS = 10
TOL_FLOOR = 1e-30
NEWTON_EVERY = 3
LAMBDA_MAX_PAD = 1.0 + 1e-10
NEWTON_MAX_TRIES = 5


class ConvergenceError(RuntimeError):
    """The solver ran out of iterations before certifying the KKT conditions.

    ``beta`` is the best iterate found and ``kkt_violation`` its maximum
    KKT violation. Path fits also carry the ``partial`` path.
    """

    def __init__(self, message, beta=None, kkt_violation=np.inf, partial=None):
        super().__init__(message)
        self.beta = beta
        self.kkt_violation = kkt_violation
        self.partial = partial


class DegenerateResponseError(ValueError):
    pass


class SeparationWarning(RuntimeWarning):
    pass


@dataclass
class SolverConfig:
    tol: float = 1e-7
    max_outer: int = 100
    max_inner: int = 10_000
    weight_floor: float = 1e-5
    screening: str = "strong"
    kkt_tol: float | None = None
    lambda_grid: np.ndarray | None = None
    n_lambda: int = 100
    lambda_min_ratio: float = 0.01
    newton_polish: bool = True

    def __post_init__(self):
        if self.tol <= 0 or self.weight_floor <= 0:
            raise ValueError("tol and weight_floor must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.screening not in ("none", "strong"):
            raise ValueError(f"unknown screening rule {self.screening!r}")
        if self.lambda_grid is not None:
            self.lambda_grid = check_grid(self.lambda_grid)
        if not 0 < self.lambda_min_ratio < 1 or self.n_lambda < 1:
            raise ValueError("auto-grid needs n_lambda >= 1 and 0 < ratio < 1")

    @property
    def kkt_tolerance(self) -> float:
        return 10 * self.tol if self.kkt_tol is None else self.kkt_tol

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("tol", "max_outer", "max_inner", "weight_floor", "screening")}
        d["kkt_tol"] = self.kkt_tolerance
        d["n_lambda"] = self.n_lambda
        d["lambda_min_ratio"] = self.lambda_min_ratio
        d["newton_polish"] = self.newton_polish
        d["lambda_grid"] = None if self.lambda_grid is None else [float(v) for v in self.lambda_grid]
        return d


def check_grid(grid) -> np.ndarray:
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.ndim != 1 or g.size == 0:
        raise ValueError("lambda grid must be a non-empty vector")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("lambda grid must be finite and non-negative")
    if np.any(np.diff(g) >= 0):
        raise ValueError("lambda grid must be strictly decreasing")
    return g


def auto_grid(lam_max: float, n_lambda: int = 100, ratio: float = 0.01) -> np.ndarray:
    if n_lambda == 1:
        return np.array([lam_max])
    return lam_max * np.geomspace(1.0, ratio, n_lambda)


def soft_threshold(z: float, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("threshold must be non-negative")
    return _kernels.soft_threshold(float(z), float(gamma))


@dataclass
class LassoResult:
    coef: np.ndarray
    lam: float
    converged: bool
    n_outer: int
    n_sweeps: int
    kkt_violation: float
    objective_trace: list[float]
    n_screened: int = 0
    n_readded: int = 0
    n_halving_failures: int = 0
    n_newton_steps: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


@dataclass
class PathSolution:
    lambdas: np.ndarray
    coefficients: np.ndarray
    n_iterations: np.ndarray
    n_sweeps: np.ndarray
    kkt_max_violation: np.ndarray
    n_screened: np.ndarray
    n_readded: np.ndarray
    converged: np.ndarray
    objective_traces: list[list[float]]
    kkt_tol: float
    warnings: list[str] = field(default_factory=list)
    wall_time_ns: np.ndarray | None = None

    def n_nonzero(self, pf) -> np.ndarray:
        pen = np.asarray(pf) > 0
        return np.count_nonzero(self.coefficients[:, pen], axis=1)

    def to_json_dict(self) -> dict:
        rows = []
        for i, lam in enumerate(self.lambdas):
            c = self.coefficients[i]
            nz = np.flatnonzero(c)
            rows.append(
                {
                    "lambda": float(lam),
                    "coefficients": [[int(j), float(c[j])] for j in nz],
                    "iterations": int(self.n_iterations[i]),
                    "sweeps": int(self.n_sweeps[i]),
                    "kkt_max_violation": float(self.kkt_max_violation[i]),
                    "screened_out": int(self.n_screened[i]),
                    "kkt_readded": int(self.n_readded[i]),
                    "converged": bool(self.converged[i]),
                }
            )
        return {
            "schema": PATH_SCHEMA,
            "n_features": int(self.coefficients.shape[1]),
            "kkt_tol": self.kkt_tol,
            "path": rows,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1)


def _objective(sp: StackedProblem, eta: np.ndarray, beta: np.ndarray, thresh: np.ndarray) -> float:
    return float((softplus(eta) - sp.response * eta).sum() / sp.n_obs + thresh @ np.abs(beta))


def _gradient(sp: StackedProblem, eta: np.ndarray) -> np.ndarray:
    """(1/n) D^T (y - mu): the negative gradient of the smooth loss."""
    return sp.design.rmatvec(sp.response - sigmoid(eta)) / sp.n_obs


def kkt_violations(grad: np.ndarray, beta: np.ndarray, thresh: np.ndarray) -> np.ndarray:
    zero = beta == 0
    out = np.abs(grad - thresh * np.sign(beta))
    out[zero] = np.maximum(np.abs(grad[zero]) - thresh[zero], 0.0)
    return out


def lambda_max(sp: StackedProblem) -> float:
    """Smallest per-observation penalty at which every penalized coefficient is zero.

    Padded by a relative 1e-10 so that the top coordinate, which sits exactly on
    the KKT boundary here, is not pushed off zero by rounding in the solver.
    """
    y = sp.response
    if np.all(y == y[0]):
        raise DegenerateResponseError("response is constant; the null model is degenerate")
    pen = sp.penalty_factors > 0
    if not pen.any():
        return 0.0
    beta0 = sp.design.null_coef(y)
    g = np.abs(_gradient(sp, sp.design.matvec(beta0)))
    return float(np.max(g[pen] / sp.penalty_factors[pen])) * LAMBDA_MAX_PAD


def strong_rule_screen(sp: StackedProblem, beta_prev, lambda_prev: float, lambda_cur: float,
                       grad: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of coordinates kept eligible at ``lambda_cur``.

    A penalized coordinate is discarded when its gradient at ``beta_prev``
    satisfies ``|g_j| < pf_j (2 lambda_cur - lambda_prev)``. Unpenalized and
    currently nonzero coordinates are always kept.
    """
    if lambda_cur > lambda_prev:
        raise ValueError("strong rule needs lambda_cur <= lambda_prev")
    beta_prev = np.asarray(beta_prev, dtype=float)
    if grad is None:
        grad = _gradient(sp, sp.design.matvec(beta_prev))
    pf = sp.penalty_factors
    keep = np.abs(grad) >= pf * (2 * lambda_cur - lambda_prev)
    return keep | (pf == 0) | (beta_prev != 0)


def _newton_polish(design, w, r, beta, thresh, active, n, max_steps: int = 20) -> int:
    """Active-set Newton steps on the weighted quadratic surrogate, applied in place.

    With the signs of ``beta`` on ``active`` held fixed the surrogate is a
    quadratic whose minimizer solves one linear system. A step that would
    flip a penalized coordinate is cut at the first crossing, which drops
    that coordinate to zero and out of the set; then the system is solved
    again. The gradient is updated from the Gram matrix, so only one full
    product with the design is spent. Returns the number of steps taken.
    """
    act = np.array(active, dtype=np.intp)
    act = act[(beta[act] != 0) | (thresh[act] == 0)]
    if act.size == 0:
        return 0
    g_all = design.rmatvec(w * r)[act] / n
    H_all = design.weighted_gram(w, act) / n
    keep = np.ones(act.size, dtype=bool)
    delta_all = np.zeros(act.size)
    taken = 0
    for _ in range(max_steps):
        loc = np.flatnonzero(keep)
        if loc.size == 0:
            break
        b0 = beta[act[loc]] + delta_all[loc]
        sgn = np.sign(b0)
        th = thresh[act[loc]]
        pen = th > 0
        g = g_all[loc] - H_all[loc] @ delta_all
        H = H_all[np.ix_(loc, loc)]
        try:
            step = np.linalg.solve(H, g - th * sgn)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        new = b0 + step
        cross = pen & (np.sign(new) != sgn)
        alpha = 1.0
        hit = -1
        if cross.any():
            frac = np.full(loc.size, np.inf)
            frac[cross] = b0[cross] / (b0[cross] - new[cross])
            hit = int(np.argmin(frac))
            alpha = float(frac[hit])
        step *= alpha
        gain = -g @ step + 0.5 * step @ H @ step + th @ (np.abs(b0 + step) - np.abs(b0))
        if not gain < 0:
            break
        delta_all[loc] += step
        taken += 1
        if hit < 0:
            break
        delta_all[loc[hit]] = -beta[act[loc[hit]]]
        keep[loc[hit]] = False
    if taken:
        full = np.zeros_like(beta)
        full[act] = delta_all
        r -= design.matvec(full)
        beta[act] += delta_all
        beta[act[~keep]] = 0.0
    return taken


def fit_logistic_lasso(sp: StackedProblem, lam: float, warm=None, cfg: SolverConfig | None = None,
                       lambda_prev: float | None = None, beta_prev=None) -> LassoResult:
    """Solve one penalty level.

    ``warm`` seeds the iterate; otherwise unpenalized coordinates start at
    the null model. For strong-rule screening the previous path point
    ``(lambda_prev, beta_prev)`` may be given; it defaults to the warm start
    at ``lam`` itself, or to the null model at :func:`lambda_max`.

    Raises :class:`ConvergenceError` when ``cfg.max_outer`` IRLS rounds do
    not certify the KKT conditions within ``cfg.kkt_tolerance``.
    """
    cfg = cfg or SolverConfig()
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    design, y, pf = sp.design, sp.response, sp.penalty_factors
    n, q = sp.n_obs, sp.n_features
    thresh = lam * pf
    if warm is None:
        beta = design.null_coef(y)
    else:
        beta = np.array(warm, dtype=float)
        if beta.shape != (q,):
            raise ValueError(f"warm start must have length {q}")

    eta = design.matvec(beta)
    grad = _gradient(sp, eta)
    if cfg.screening == "strong":
        if lambda_prev is None:
            if warm is not None:
                lambda_prev, bp, gp = lam, beta, grad
            else:
                lambda_prev = max(lambda_max(sp), lam)
                bp, gp = beta, grad
        else:
            bp = beta if beta_prev is None else np.asarray(beta_prev, dtype=float)
            gp = grad if beta_prev is None else None
        eligible = strong_rule_screen(sp, bp, max(lambda_prev, lam), lam, grad=gp) | (beta != 0)
    else:
        eligible = np.ones(q, dtype=bool)
    n_screened = int(np.count_nonzero(~eligible & (pf > 0)))
    n_readded = 0

    kkt_tol = cfg.kkt_tolerance
    tol_cur = cfg.tol
    f_cur = _objective(sp, eta, beta, thresh)
    trace = [f_cur]
    best = (f_cur, beta.copy(), np.inf)
    n_sweeps = 0
    n_newton = 0
    halving_failures = 0
    notes: list[str] = []
    viol_max = np.inf
    converged = False
    floor = cfg.weight_floor

    n_outer = 0
    while n_outer < cfg.max_outer:
        n_outer += 1
        mu = np.clip(sigmoid(eta), floor, 1.0 - floor)
        w = mu * (1.0 - mu)
        r = (y - mu) / w
        xwx = design.weighted_col_sq_norms(w)
        beta_old = beta.copy()
        elig_idx = np.flatnonzero(eligible).astype(np.intp)

        # inner: full eligible sweep, then active-set sweeps to convergence
        inner = 0
        newton_tries = 0
        while inner < cfg.max_inner:
            crit = design.cd_epoch(w, r, beta, xwx, thresh, elig_idx)
            inner += 1
            if crit < tol_cur:
                break
            active = np.flatnonzero(eligible & ((beta != 0) | (pf == 0))).astype(np.intp)
            stalled = 0
            while inner < cfg.max_inner:
                crit = design.cd_epoch(w, r, beta, xwx, thresh, active)
                inner += 1
                if crit < tol_cur:
                    break
                stalled += 1
                if cfg.newton_polish and stalled % NEWTON_EVERY == 0 and newton_tries < NEWTON_MAX_TRIES:
                    newton_tries += 1
                    n_newton += _newton_polish(design, w, r, beta, thresh, active, n)
        n_sweeps += inner

        step = beta - beta_old
        eta_new = design.matvec(beta)
        f_new = _objective(sp, eta_new, beta, thresh)
        slack = 1e-13 * max(1.0, abs(f_cur))
        halvings = 0
        while f_new > f_cur + slack and halvings < MAX_HALVINGS:
            halvings += 1
            step *= 0.5
            beta = beta_old + step
            eta_new = design.matvec(beta)
            f_new = _objective(sp, eta_new, beta, thresh)
        if f_new > f_cur + slack:
            halving_failures += 1
            beta, eta_new, f_new, step = beta_old, eta, f_cur, np.zeros(q)
        eta, f_cur = eta_new, f_new
        trace.append(f_cur)

        change = float(np.max(xwx / n * step * step)) if q else 0.0
        grad = _gradient(sp, eta)
        viol = kkt_violations(grad, beta, thresh)
        viol_max = float(viol.max()) if q else 0.0
        if f_cur <= best[0]:
            best = (f_cur, beta.copy(), viol_max)

        if change < tol_cur:
            if viol_max <= kkt_tol:
                converged = True
                break
            missed = ~eligible & (np.abs(grad) > thresh)
            if missed.any():
                n_readded += int(missed.sum())
                eligible |= missed
                continue
            if tol_cur > TOL_FLOOR:
                tol_cur *= 0.01

    unpen = pf == 0
    if unpen.any() and np.max(np.abs(beta[unpen])) > SEPARATION_BOUND:
        msg = f"unpenalized coefficient magnitude {np.max(np.abs(beta[unpen])):.3g} exceeds {SEPARATION_BOUND}; possible separation"
        notes.append(msg)
        warnings.warn(msg, SeparationWarning, stacklevel=2)
    if halving_failures:
        notes.append(f"{halving_failures} IRLS round(s) rejected after {MAX_HALVINGS} step halvings")

    if not converged:
        f_best, b_best, v_best = best
        raise ConvergenceError(
            f"no KKT certificate after {n_outer} IRLS rounds at lambda={lam:.6g} "
            f"(max violation {viol_max:.3g}, tolerance {kkt_tol:.3g}; the iterates did not settle"
            f"{', coefficients diverging' if unpen.any() and np.max(np.abs(beta[unpen])) > SEPARATION_BOUND else ''})",
            beta=b_best,
            kkt_violation=v_best,
        )
    return LassoResult(
        coef=beta,
        lam=float(lam),
        converged=True,
        n_outer=n_outer,
        n_sweeps=n_sweeps,
        kkt_violation=viol_max,
        objective_trace=trace,
        n_screened=n_screened,
        n_readded=n_readded,
        n_halving_failures=halving_failures,
        n_newton_steps=n_newton,
        warnings=notes,
    )


def fit_path(sp: StackedProblem, cfg: SolverConfig | None = None, lambdas=None,
             raise_on_failure: bool = True) -> PathSolution:
    """Solve a decreasing grid of penalties with warm starts.

    The grid is ``lambdas`` if given, else ``cfg.lambda_grid``, else an
    automatic geometric grid from :func:`lambda_max`. With
    ``raise_on_failure=False`` a non-converged point keeps its best iterate,
    is flagged in ``converged`` and the path continues; otherwise a
    :class:`ConvergenceError` is raised carrying the partial path.
    """
    cfg = cfg or SolverConfig()
    lam_max = lambda_max(sp)
    if lambdas is not None:
        grid = check_grid(lambdas)
    elif cfg.lambda_grid is not None:
        grid = cfg.lambda_grid
    else:
        grid = auto_grid(lam_max, cfg.n_lambda, cfg.lambda_min_ratio)

    L, q = grid.size, sp.n_features
    coefs = np.zeros((L, q))
    iters = np.zeros(L, dtype=int)
    sweeps = np.zeros(L, dtype=int)
    kkt = np.full(L, np.nan)
    screened = np.zeros(L, dtype=int)
    readded = np.zeros(L, dtype=int)
    conv = np.zeros(L, dtype=bool)
    times = np.zeros(L, dtype=np.int64)
    traces: list[list[float]] = []
    notes: list[str] = []

    beta = sp.design.null_coef(sp.response)
    lam_prev = max(lam_max, grid[0])
    warm = None
    for i, lam in enumerate(grid):
        t0 = time.perf_counter_ns()
        try:
            res = fit_logistic_lasso(sp, lam, warm=warm, cfg=cfg, lambda_prev=lam_prev)
        except ConvergenceError as err:
            times[i] = time.perf_counter_ns() - t0
            notes.append(f"lambda[{i}]={lam:.6g}: {err}")
            if raise_on_failure:
                partial = PathSolution(grid[:i], coefs[:i], iters[:i], sweeps[:i], kkt[:i], screened[:i],
                                       readded[:i], conv[:i], traces, cfg.kkt_tolerance, notes, times[:i])
                err.partial = partial
                raise
            beta = err.beta
            coefs[i] = beta
            iters[i] = cfg.max_outer
            kkt[i] = err.kkt_violation
            traces.append([])
        else:
            times[i] = time.perf_counter_ns() - t0
            beta = res.coef
            coefs[i] = beta
            iters[i] = res.n_outer
            sweeps[i] = res.n_sweeps
            kkt[i] = res.kkt_violation
            screened[i] = res.n_screened
            readded[i] = res.n_readded
            conv[i] = True
            traces.append(res.objective_trace)
            notes.extend(f"lambda[{i}]={lam:.6g}: {w}" for w in res.warnings)
        warm = beta
        lam_prev = lam
    return PathSolution(grid, coefs, iters, sweeps, kkt, screened, readded, conv, traces,
                        cfg.kkt_tolerance, notes, times)
