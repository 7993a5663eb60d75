"""Structure-recovery scoring and the timing harness.

ROC curves rank the p(p-1)/2 vertex pairs by a score and compare against
the true edge set. Two scorings are offered: the magnitude of one estimate
(per-lambda, the default) and the largest penalty at which a pair is
nonzero along a path (path mode). CSV layouts:

* ROC points: ``threshold,fpr,tpr`` (threshold ``inf`` for the first point)
* bench records: one row per (method, lambda), columns as in
  :data:`BENCH_COLUMNS`
"""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from plgnet.estimators import fit, relative_difference
from plgnet.model import SampleMatrix, _theta

BENCH_COLUMNS = (
    "method", "p", "edge_prob", "lambda", "trial_seed", "wall_time_ns",
    "wall_time_min_ns", "wall_time_max_ns", "repeats", "converged", "iterations", "n_warnings",
)
MIN_REPEATS = 3


class DegenerateTruthError(ValueError):
    """The true graph has no edges or no non-edges, so TPR or FPR is undefined."""


@dataclass
class RocCurve:
    points: list[tuple[float, float]]
    thresholds: list[float]
    auc: float
    mode: str = "per-lambda"

    @property
    def fpr(self) -> np.ndarray:
        return np.array([f for f, _ in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([t for _, t in self.points])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["threshold", "fpr", "tpr"])
            for thr, (f, t) in zip(self.thresholds, self.points):
                wr.writerow([repr(float(thr)), repr(float(f)), repr(float(t))])


def roc_from_scores(labels, scores, mode: str = "per-lambda") -> RocCurve:
    """ROC of binary ``labels`` ranked by ``scores`` (higher means more likely an edge).

    Thresholds are +inf followed by every distinct score in decreasing order;
    a pair is called an edge when its score is at least the threshold, so
    tied scores enter together as one step. AUC is the trapezoid area.
    """
    y = np.asarray(labels, dtype=bool).ravel()
    sc = np.asarray(scores, dtype=float).ravel()
    if y.shape != sc.shape:
        raise ValueError("labels and scores differ in length")
    if np.isnan(sc).any():
        raise ValueError("scores contain NaN")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTruthError(f"truth has {n_pos} edges out of {y.size} pairs; ROC undefined")
    order = np.argsort(-sc, kind="stable")
    sc, y = sc[order], y[order]
    # last index of each tie group in the sorted order
    ends = np.r_[np.flatnonzero(np.diff(sc) != 0), sc.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    thresholds = [float("inf")] + [float(v) for v in sc[ends]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(points=list(zip(fpr.tolist(), tpr.tolist())), thresholds=thresholds, auc=auc, mode=mode)


def _edge_labels(truth) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    th = _theta(truth)
    iu = np.triu_indices(th.shape[0], 1)
    return th[iu] != 0, iu


def roc_curve(truth, scores) -> RocCurve:
    """Per-lambda ROC: pair (s, t) scored by |scores[s, t]|."""
    labels, iu = _edge_labels(truth)
    est = _theta(scores)
    if est.shape != _theta(truth).shape:
        raise ValueError("truth and scores must have the same p")
    return roc_from_scores(labels, np.abs(est[iu]), mode="per-lambda")


def path_scores(lambdas, estimates) -> np.ndarray:
    """p x p matrix: largest lambda at which each pair is nonzero (0 if never)."""
    lam = np.asarray(lambdas, dtype=float)
    ests = [_theta(e) for e in estimates]
    if lam.size != len(ests) or not ests:
        raise ValueError("need one estimate per lambda")
    out = np.zeros_like(ests[0])
    for l, e in zip(lam, ests):
        nz = e != 0
        out[nz] = np.maximum(out[nz], l)
    np.fill_diagonal(out, 0.0)
    return out


def roc_curve_path(truth, lambdas, estimates) -> RocCurve:
    """Path ROC: pairs ranked by the penalty at which they enter the path."""
    labels, iu = _edge_labels(truth)
    sc = path_scores(lambdas, estimates)
    if sc.shape != _theta(truth).shape:
        raise ValueError("truth and estimates must have the same p")
    return roc_from_scores(labels, sc[iu], mode="path")


# -- timing ----------------------------------------------------------------

@dataclass
class BenchRecord:
    method: str
    p: int
    edge_prob: float | None
    lam: float
    trial_seed: int | None
    wall_time_ns: int
    wall_time_min_ns: int
    wall_time_max_ns: int
    repeats: int
    converged: bool
    iterations: int
    n_warnings: int = 0

    def __post_init__(self):
        if self.wall_time_ns <= 0:
            raise ValueError("wall time must be positive")

    def as_row(self) -> list:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return [d[c] for c in BENCH_COLUMNS]


def bench_fit(method: str, X, lambdas, cfg=None, repeats: int = MIN_REPEATS, *,
              edge_prob: float | None = None, trial_seed: int | None = None, **fit_kwargs) -> list[BenchRecord]:
    """Time a cold single-lambda fit at each grid value.

    One discarded warm-up call, then ``repeats`` timed calls on the monotonic
    clock; the record holds the median with min and max. For PLG the timed
    call includes building the stacked design.
    """
    if repeats < MIN_REPEATS:
        raise ValueError(f"repeats must be at least {MIN_REPEATS}, got {repeats}")
    sm = X if isinstance(X, SampleMatrix) else SampleMatrix(X)
    records = []
    for lam in np.atleast_1d(np.asarray(lambdas, dtype=float)):
        fit(method, sm, [lam], cfg, **fit_kwargs)
        times, rep = [], None
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            rep = fit(method, sm, [lam], cfg, **fit_kwargs)
            times.append(max(time.perf_counter_ns() - t0, 1))
        records.append(BenchRecord(
            method=rep.method,
            p=sm.p,
            edge_prob=edge_prob,
            lam=float(lam),
            trial_seed=trial_seed,
            wall_time_ns=int(statistics.median(times)),
            wall_time_min_ns=min(times),
            wall_time_max_ns=max(times),
            repeats=repeats,
            converged=bool(rep.converged[0]),
            iterations=int(rep.iterations[0]),
            n_warnings=len(rep.warnings),
        ))
    return records


def time_ratio(records: list[BenchRecord], method: str) -> float:
    """Median time at the smallest lambda over median time at the largest, for one method."""
    rs = [r for r in records if r.method.lower() == method.lower()]
    if not rs:
        raise ValueError(f"no records for {method}")
    lo = min(rs, key=lambda r: r.lam)
    hi = max(rs, key=lambda r: r.lam)
    return lo.wall_time_ns / hi.wall_time_ns


def write_bench_csv(records: list[BenchRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BENCH_COLUMNS)
        for r in records:
            wr.writerow(r.as_row())


__all__ = [
    "BenchRecord",
    "DegenerateTruthError",
    "RocCurve",
    "bench_fit",
    "path_scores",
    "relative_difference",
    "roc_curve",
    "roc_curve_path",
    "roc_from_scores",
    "time_ratio",
    "write_bench_csv",
]
