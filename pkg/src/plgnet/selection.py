"""StARS: stability-based choice of the penalty level.

For each of ``n_subsamples`` subsamples drawn without replacement, the
estimator is refit over the whole grid. Edge (s, t) at penalty lam has
selection frequency phi and instability 2 phi (1 - phi); the total
instability D(lam) averages this over all p(p-1)/2 pairs. D is made
monotone by taking, at each lam, the maximum over all larger penalties,
and the smallest lam whose monotone instability stays within ``beta`` wins.

NLR is not run through StARS on its own: its penalty is the PLG selection
halved, and its curve is the PLG curve on the halved grid.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from plgnet.estimators import fit_plg
from plgnet.model import SampleMatrix
from plgnet.sampling import make_rng
from plgnet.solver import SolverConfig, check_grid


class NoFeasibleLambdaError(RuntimeError):
    """Every grid point is more unstable than the threshold."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class StarsConfig:
    lambda_grid: np.ndarray
    n_subsamples: int = 20
    subsample_size: int | None = None
    beta: float = 0.05
    seed: int = 0
    estimator: str = "PLG"

    def __post_init__(self):
        self.lambda_grid = check_grid(self.lambda_grid)
        if not 0 < self.beta < 0.5:
            raise ValueError("beta must lie in (0, 0.5)")
        if self.n_subsamples < 1:
            raise ValueError("need at least one subsample")
        if self.estimator.upper() not in ("PLG", "NLR"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        self.estimator = self.estimator.upper()

    def size_for(self, N: int) -> int:
        """Subsample size: explicit, else floor(10 sqrt(N)) capped at floor(0.8 N)."""
        b = self.subsample_size
        if b is None:
            b = min(int(math.floor(10 * math.sqrt(N))), int(math.floor(0.8 * N)))
        if not 1 <= b < N:
            raise ValueError(f"subsample size {b} must lie in [1, N) with N={N}")
        return b

    def to_dict(self) -> dict:
        return {
            "lambda_grid": [float(v) for v in self.lambda_grid],
            "n_subsamples": self.n_subsamples,
            "subsample_size": self.subsample_size,
            "beta": self.beta,
            "seed": self.seed,
            "estimator": self.estimator,
        }


@dataclass
class StarsResult:
    selected_lambda: float
    lambdas: np.ndarray
    instability: np.ndarray
    monotone_instability: np.ndarray
    edge_frequency: np.ndarray
    mean_edges: np.ndarray
    subsample_size: int
    estimator: str = "PLG"

    @property
    def selected_index(self) -> int:
        return int(np.flatnonzero(self.lambdas == self.selected_lambda)[0])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lambda", "instability", "monotone_instability", "edge_count"])
            for row in zip(self.lambdas, self.instability, self.monotone_instability, self.mean_edges):
                wr.writerow([repr(float(v)) for v in row])


def half_lambda_translate(lambda_bmn: float) -> float:
    """NLR penalty equivalent to a pseudo-likelihood penalty."""
    if lambda_bmn <= 0:
        raise ValueError("lambda must be positive")
    return lambda_bmn / 2


def subsample_indices(N: int, size: int, count: int, seed: int) -> list[np.ndarray]:
    rng = make_rng(seed, stream=3)
    return [np.sort(rng.choice(N, size=size, replace=False)) for _ in range(count)]


def instability_curve(selections: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """From boolean selections (subsample x lambda x pair) return per-lambda (D, phi)."""
    phi = selections.mean(axis=0)
    xi = 2 * phi * (1 - phi)
    return xi.mean(axis=1), phi


def monotonize(D: np.ndarray) -> np.ndarray:
    """Running maximum from the largest penalty downwards (grid is decreasing)."""
    return np.maximum.accumulate(D)


def stars_select(X, cfg: StarsConfig, solver_cfg: SolverConfig | None = None,
                 threads: int = 1) -> StarsResult:
    """Select the smallest penalty whose monotone instability is at most ``cfg.beta``.

    ``cfg.lambda_grid`` is on the PLG scale. With ``estimator="NLR"`` the
    returned grid and selection are halved. Raises
    :class:`NoFeasibleLambdaError` (carrying the curve) if no penalty qualifies.
    """
    sm = X if isinstance(X, SampleMatrix) else SampleMatrix(X)
    size = cfg.size_for(sm.N)
    idx = subsample_indices(sm.N, size, cfg.n_subsamples, cfg.seed)
    grid = cfg.lambda_grid
    iu = np.triu_indices(sm.p, 1)

    def one(rows):
        rep = fit_plg(sm.subset(rows), grid, solver_cfg)
        return np.array([est.values[iu] != 0 for est in rep.estimates])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            sel = list(ex.map(one, idx))
    else:
        sel = [one(rows) for rows in idx]
    sel = np.array(sel)
    D, phi = instability_curve(sel)
    Dbar = monotonize(D)
    nlr = cfg.estimator == "NLR"
    result = StarsResult(
        selected_lambda=float("nan"),
        lambdas=grid / 2 if nlr else grid,
        instability=D,
        monotone_instability=Dbar,
        edge_frequency=phi,
        mean_edges=sel.sum(axis=2).mean(axis=0),
        subsample_size=size,
        estimator=cfg.estimator,
    )
    ok = np.flatnonzero(Dbar <= cfg.beta)
    if ok.size == 0:
        raise NoFeasibleLambdaError(
            f"monotone instability exceeds beta={cfg.beta} on the whole grid "
            f"(minimum {Dbar.min():.4g})",
            result,
        )
    sel = float(grid[ok[-1]])
    result.selected_lambda = half_lambda_translate(sel) if nlr else sel
    return result
