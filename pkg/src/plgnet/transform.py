"""Recasting the pseudo-likelihood as one L1 logistic regression.

Parameter layout (length m + p, m = p(p-1)/2): upper-triangular entries
stacked column by column (theta_01, theta_02, theta_12, theta_03, ...),
then the diagonal. The stacked design has N*p rows ordered vertex-major:
row s*N + n belongs to vertex s and sample n. Its pair column for (s, t)
holds X[n, t] in block s and X[n, s] in block t; indicator column m + s
holds ones in block s. The response is the column-major flattening of X.

The stacked design is never formed; :class:`StructuredDesign` computes the
products the solver needs straight from X.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from plgnet import _kernels
from plgnet.model import (
    DimensionError,
    ObjectiveValue,
    SampleMatrix,
    ThetaMatrix,
    _samples,
    softplus,
)

COO_MAX_ENTRIES = 5_000_000


def n_pairs(p: int) -> int:
    return p * (p - 1) // 2


def pair_index(s: int, t: int, p: int) -> int:
    """Position of theta_st in the stacked vector (0-based in and out).

    With 1-based labels this is ``min + (max - 2)(max - 1)/2``; shifting
    both sides to 0-based gives ``min + max (max - 1)/2``.
    """
    if s == t:
        raise ValueError("pair_index needs two distinct vertices")
    if not (0 <= s < p and 0 <= t < p):
        raise IndexError(f"vertices ({s}, {t}) out of range for p={p}")
    lo, hi = min(s, t), max(s, t)
    return lo + hi * (hi - 1) // 2


@lru_cache(maxsize=64)
def pair_tables(p: int) -> tuple[np.ndarray, np.ndarray]:
    """(pair_s, pair_t) with pair_s[j] < pair_t[j] for every stacked position j < m."""
    s_idx, t_idx = [], []
    for t in range(1, p):
        for s in range(t):
            s_idx.append(s)
            t_idx.append(t)
    ps = np.array(s_idx, dtype=np.intp)
    pt = np.array(t_idx, dtype=np.intp)
    ps.setflags(write=False)
    pt.setflags(write=False)
    return ps, pt


def vectorize(theta) -> np.ndarray:
    th = theta.values if isinstance(theta, ThetaMatrix) else ThetaMatrix(theta).values
    ps, pt = pair_tables(th.shape[0])
    return np.concatenate([th[ps, pt], np.diag(th)])


def devectorize(tv, p: int | None = None) -> ThetaMatrix:
    tv = np.asarray(tv, dtype=float)
    if p is None:
        p = int(round((np.sqrt(8 * tv.size + 1) - 1) / 2))
    m = n_pairs(p)
    if tv.shape != (m + p,):
        raise DimensionError(f"stacked vector must have length {m + p} for p={p}, got {tv.shape}")
    ps, pt = pair_tables(p)
    th = np.diag(tv[m:])
    th[ps, pt] = tv[:m]
    th[pt, ps] = tv[:m]
    return ThetaMatrix(th)


def _logit_clamped(mean: np.ndarray, floor: float = 1e-5) -> np.ndarray:
    q = np.clip(mean, floor, 1.0 - floor)
    return np.log(q) - np.log1p(-q)


class StructuredDesign:
    """Implicit N*p x (m+p) stacked design backed by the sample matrix."""

    def __init__(self, X):
        Xf = np.ascontiguousarray(_samples(X))
        self.X = Xf
        self.X.setflags(write=False)
        self.xt = np.ascontiguousarray(Xf.T)
        self.xt.setflags(write=False)
        self.N, self.p = Xf.shape
        self.m = n_pairs(self.p)
        self.pair_s, self.pair_t = pair_tables(self.p)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N * self.p, self.m + self.p)

    @property
    def n_obs(self) -> int:
        return self.N * self.p

    @property
    def n_features(self) -> int:
        return self.m + self.p

    def _pair_matrix(self, coef: np.ndarray) -> np.ndarray:
        B = np.zeros((self.p, self.p))
        B[self.pair_s, self.pair_t] = coef[: self.m]
        B[self.pair_t, self.pair_s] = coef[: self.m]
        return B

    def matvec(self, coef) -> np.ndarray:
        coef = np.asarray(coef, dtype=float)
        eta = self.X @ self._pair_matrix(coef) + coef[self.m :]
        return eta.T.ravel()

    def rmatvec(self, v) -> np.ndarray:
        V = np.asarray(v, dtype=float).reshape(self.p, self.N).T
        G = self.X.T @ V
        pairs = G[self.pair_t, self.pair_s] + G[self.pair_s, self.pair_t]
        return np.concatenate([pairs, V.sum(axis=0)])

    def weighted_col_sq_norms(self, w) -> np.ndarray:
        W = np.asarray(w, dtype=float).reshape(self.p, self.N).T
        C = (self.X * self.X).T @ W
        pairs = C[self.pair_t, self.pair_s] + C[self.pair_s, self.pair_t]
        return np.concatenate([pairs, W.sum(axis=0)])

    def col_sq_norms(self) -> np.ndarray:
        return self.weighted_col_sq_norms(np.ones(self.n_obs))

    def weighted_gram(self, w, idx) -> np.ndarray:
        """(D_A^T diag(w) D_A) for the columns ``idx``, built block by block."""
        idx = np.asarray(idx, dtype=np.intp)
        W = np.asarray(w, dtype=float).reshape(self.p, self.N)
        per_block: list[list[tuple[int, np.ndarray | None]]] = [[] for _ in range(self.p)]
        for loc, j in enumerate(idx):
            if j < self.m:
                s, t = self.pair_s[j], self.pair_t[j]
                per_block[s].append((loc, self.xt[t]))
                per_block[t].append((loc, self.xt[s]))
            else:
                per_block[j - self.m].append((loc, None))
        H = np.zeros((idx.size, idx.size))
        ones = np.ones(self.N)
        for b, cols in enumerate(per_block):
            if not cols:
                continue
            loc = np.array([c[0] for c in cols])
            V = np.column_stack([ones if v is None else v for _, v in cols])
            H[np.ix_(loc, loc)] += V.T @ (W[b][:, None] * V)
        return H

    def column_dot(self, j: int, v) -> float:
        v = np.asarray(v, dtype=float)
        N = self.N
        if j < self.m:
            s, t = self.pair_s[j], self.pair_t[j]
            return float(self.xt[t] @ v[s * N : (s + 1) * N] + self.xt[s] @ v[t * N : (t + 1) * N])
        s = j - self.m
        return float(v[s * N : (s + 1) * N].sum())

    def cd_epoch(self, w, r, beta, xwx, thresh, coords) -> float:
        return _kernels.cd_epoch_pairwise(
            self.xt, w, r, beta, xwx, thresh, coords, self.pair_s, self.pair_t, float(self.n_obs)
        )

    def null_coef(self, y) -> np.ndarray:
        """Per-block intercept-only optimum: indicator coordinates at the clamped column logits."""
        beta = np.zeros(self.n_features)
        beta[self.m :] = _logit_clamped(np.asarray(y, dtype=float).reshape(self.p, self.N).mean(axis=1))
        return beta

    def iter_coo(self):
        """Yield (row, col, value) triplets of the nonzeros, 0-based, row-major."""
        for s in range(self.p):
            for n in range(self.N):
                i = s * self.N + n
                for t in range(self.p):
                    if t != s and self.X[n, t] != 0:
                        yield i, pair_index(s, t, self.p), self.X[n, t]
                yield i, self.m + s, 1.0

    def materialize(self, max_cells: int = 10**6) -> np.ndarray:
        """Dense copy for testing and debugging only."""
        rows, cols = self.shape
        if rows * cols > max_cells:
            raise DimensionError(f"refusing to materialize {rows}x{cols} design (limit {max_cells} cells)")
        D = np.zeros(self.shape)
        for i, j, v in self.iter_coo():
            D[i, j] = v
        return D


class DenseDesign:
    """Explicit design matrix with the same product interface as :class:`StructuredDesign`."""

    def __init__(self, D, intercept: int | None = None):
        D = np.asarray(D, dtype=float)
        if D.ndim != 2:
            raise DimensionError("design must be 2-D")
        self.D = D
        self.dt = np.ascontiguousarray(D.T)
        self.intercept = intercept

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    @property
    def n_obs(self) -> int:
        return self.D.shape[0]

    @property
    def n_features(self) -> int:
        return self.D.shape[1]

    def matvec(self, coef) -> np.ndarray:
        return self.D @ np.asarray(coef, dtype=float)

    def rmatvec(self, v) -> np.ndarray:
        return self.dt @ np.asarray(v, dtype=float)

    def weighted_col_sq_norms(self, w) -> np.ndarray:
        return (self.dt * self.dt) @ np.asarray(w, dtype=float)

    def col_sq_norms(self) -> np.ndarray:
        return (self.dt * self.dt).sum(axis=1)

    def weighted_gram(self, w, idx) -> np.ndarray:
        V = self.dt[np.asarray(idx, dtype=np.intp)]
        return (V * np.asarray(w, dtype=float)) @ V.T

    def cd_epoch(self, w, r, beta, xwx, thresh, coords) -> float:
        return _kernels.cd_epoch_dense(self.dt, w, r, beta, xwx, thresh, coords, float(self.n_obs))

    def null_coef(self, y) -> np.ndarray:
        beta = np.zeros(self.n_features)
        if self.intercept is not None:
            beta[self.intercept] = _logit_clamped(np.mean(y))
        return beta

    def materialize(self, max_cells: int | None = None) -> np.ndarray:
        return self.D.copy()


@dataclass(frozen=True)
class StackedProblem:
    """A penalized logistic regression: design, 0/1 response and per-coefficient penalty factors."""

    design: StructuredDesign | DenseDesign
    response: np.ndarray
    penalty_factors: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float)
        pf = np.asarray(self.penalty_factors, dtype=float)
        if y.shape != (self.design.n_obs,):
            raise DimensionError(f"response length {y.shape} does not match design rows {self.design.n_obs}")
        if pf.shape != (self.design.n_features,) or np.any(pf < 0):
            raise DimensionError("penalty factors must be non-negative, one per design column")
        y.setflags(write=False)
        pf.setflags(write=False)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "penalty_factors", pf)

    @property
    def n_obs(self) -> int:
        return self.design.n_obs

    @property
    def n_features(self) -> int:
        return self.design.n_features


def build_stacked(X) -> StackedProblem:
    """Stacked problem for the pseudo-likelihood of X: pair coefficients penalized, diagonal free."""
    sm = X if isinstance(X, SampleMatrix) else SampleMatrix(X)
    if sm.p < 2:
        raise DimensionError("need at least two vertices")
    design = StructuredDesign(sm)
    pf = np.concatenate([np.ones(design.m), np.zeros(design.p)])
    return StackedProblem(design, design.xt.ravel().copy(), pf)


def converted_objective(sp: StackedProblem, tv, lam: float, N: int) -> ObjectiveValue:
    """Logistic log-likelihood of the stacked problem minus ``N * lam * sum_j pf_j |coef_j|``."""
    tv = np.asarray(tv, dtype=float)
    if tv.shape != (sp.n_features,):
        raise DimensionError(f"coefficient vector must have length {sp.n_features}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    eta = sp.design.matvec(tv)
    loglik = float(sp.response @ eta - softplus(eta).sum())
    return ObjectiveValue(loglik, N * lam * float(sp.penalty_factors @ np.abs(tv)))


def export_coo(design: StructuredDesign, path, max_entries: int = COO_MAX_ENTRIES) -> int:
    """Write the stacked design as 1-based ``row col value`` lines; returns the nonzero count."""
    bound = design.N * design.p * design.p
    if bound > max_entries:
        raise DimensionError(f"design may hold up to {bound} nonzeros, above the export ceiling {max_entries}")
    count = 0
    with open(path, "w") as fh:
        for i, j, v in design.iter_coo():
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
            count += 1
    return count
