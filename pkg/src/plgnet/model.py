"""Parameter and sample containers and exact objective evaluation.

The model is a binary pairwise Markov network over ``{0, 1}^p``::

    P(x) = exp(sum_s theta_ss x_s + sum_{s<t} theta_st x_s x_t - Psi(theta))

Everything here follows the maximization convention: larger objective
values are better. Vertex indices are 0-based throughout the Python API.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

MAX_ENUM_P = 25
THETA_SCHEMA = "plgnet.theta/1"


class DimensionError(ValueError):
    """Raised when an exact computation would need too many states, or shapes disagree."""


class BinaryDataError(ValueError):
    """Raised when a sample matrix holds entries other than 0 and 1.

    ``row`` and ``col`` give the 0-based location of the first offending entry.
    """

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


@dataclass(frozen=True)
class ThetaMatrix:
    """Symmetric p x p parameter matrix (diagonal: node potentials, off-diagonal: edge weights)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise DimensionError(f"theta must be a non-empty square matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("theta has non-finite entries")
        if not np.array_equal(v, v.T):
            raise ValueError("theta must be exactly symmetric")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, p: int) -> "ThetaMatrix":
        return cls(np.zeros((p, p)))

    @classmethod
    def from_upper(cls, upper: np.ndarray) -> "ThetaMatrix":
        """Build from a matrix whose upper triangle (with diagonal) is authoritative."""
        u = np.triu(np.asarray(upper, dtype=float))
        return cls(u + np.triu(u, 1).T)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.values).copy()

    def edges(self, positive_only: bool = False) -> list[tuple[int, int, float]]:
        """Nonzero off-diagonal entries as (s, t, value) with s < t."""
        s_idx, t_idx = np.triu_indices(self.p, 1)
        vals = self.values[s_idx, t_idx]
        keep = vals > 0 if positive_only else vals != 0
        return [(int(s), int(t), float(v)) for s, t, v in zip(s_idx[keep], t_idx[keep], vals[keep])]

    def n_edges(self) -> int:
        return int(np.count_nonzero(self.values[np.triu_indices(self.p, 1)]))

    # -- serialization -------------------------------------------------
    def to_json_dict(self) -> dict:
        s_idx, t_idx = np.triu_indices(self.p)
        vals = self.values[s_idx, t_idx]
        nz = vals != 0
        entries = [[int(s) + 1, int(t) + 1, float(v)] for s, t, v in zip(s_idx[nz], t_idx[nz], vals[nz])]
        return {"schema": THETA_SCHEMA, "p": self.p, "entries": entries}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ThetaMatrix":
        p = int(d["p"])
        v = np.zeros((p, p))
        for s, t, val in d["entries"]:
            s, t = int(s) - 1, int(t) - 1
            if not (0 <= s < p and 0 <= t < p):
                raise DimensionError(f"entry ({s + 1}, {t + 1}) outside 1..{p}")
            v[s, t] = v[t, s] = float(val)
        return cls(v)

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1) + "\n")

    @classmethod
    def load_json(cls, path) -> "ThetaMatrix":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def save_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def load_csv(cls, path) -> "ThetaMatrix":
        return cls(np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float)))


@dataclass(frozen=True)
class SampleMatrix:
    """N x p matrix of binary observations."""

    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise DimensionError(f"samples must be a non-empty 2-D array, got shape {raw.shape}")
        bad = (raw != 0) & (raw != 1)
        if bad.any():
            r, c = map(int, np.argwhere(bad)[0])
            raise BinaryDataError(f"non-binary entry {raw[r, c]!r} at row {r + 1}, column {c + 1}", r, c)
        v = raw.astype(np.uint8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def as_float(self) -> np.ndarray:
        return self.values.astype(float)

    def subset(self, rows) -> "SampleMatrix":
        return SampleMatrix(self.values[np.asarray(rows)])

    def save_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%d")

    @classmethod
    def load_csv(cls, path, impute_zero: bool = False) -> "SampleMatrix":
        """Read a headerless 0/1 CSV.

        With ``impute_zero`` every entry that is empty or not parseable as
        0/1 becomes 0 instead of raising.
        """
        rows = []
        with open(path, newline="") as fh:
            for i, rec in enumerate(csv.reader(fh)):
                if not rec or all(not f.strip() for f in rec):
                    continue
                row = []
                for j, field in enumerate(rec):
                    f = field.strip()
                    if f in ("0", "1"):
                        row.append(int(f))
                    elif impute_zero:
                        row.append(0)
                    else:
                        raise BinaryDataError(
                            f"non-binary entry {field!r} at row {i + 1}, column {j + 1}", i, j
                        )
                rows.append(row)
        if not rows:
            raise DimensionError(f"{path}: no data rows")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise DimensionError(f"{path}: ragged rows (widths {sorted(widths)})")
        return cls(np.array(rows, dtype=np.uint8))


@dataclass(frozen=True)
class ObjectiveValue:
    """Objective split into its smooth part and its L1 penalty; ``total = loglik_part - penalty_part``."""

    loglik_part: float
    penalty_part: float

    @property
    def total(self) -> float:
        return self.loglik_part - self.penalty_part

    def to_dict(self) -> dict:
        return {"loglik_part": self.loglik_part, "penalty_part": self.penalty_part, "total": self.total}


def _theta(theta) -> np.ndarray:
    if isinstance(theta, ThetaMatrix):
        return theta.values
    return ThetaMatrix(theta).values


def _samples(X) -> np.ndarray:
    if isinstance(X, SampleMatrix):
        return X.as_float()
    return SampleMatrix(X).as_float()


def softplus(z):
    """log(1 + exp(z)) via max-shift; exact to rounding for any finite z."""
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    return expit(z)


def offdiag_penalty(theta: np.ndarray) -> float:
    """sum_{s<t} |theta_st|."""
    return float(np.abs(theta[np.triu_indices(theta.shape[0], 1)]).sum())


def all_states(p: int) -> np.ndarray:
    """Every vector of {0,1}^p as rows (2^p x p), first vertex as the least significant bit."""
    if p > MAX_ENUM_P:
        raise DimensionError(f"enumeration limited to p <= {MAX_ENUM_P}, got {p}")
    codes = np.arange(2**p, dtype=np.int64)
    return ((codes[:, None] >> np.arange(p)) & 1).astype(float)


def _energies(theta: np.ndarray, states: np.ndarray) -> np.ndarray:
    off = theta - np.diag(np.diag(theta))
    return states @ np.diag(theta) + 0.5 * np.einsum("ij,ij->i", states @ off, states)


def log_partition(theta) -> float:
    """Log of the normalizing constant, by enumeration of all 2^p states (p <= 25)."""
    th = _theta(theta)
    p = th.shape[0]
    if p > MAX_ENUM_P:
        raise DimensionError(f"log_partition enumerates 2^p states; p={p} exceeds {MAX_ENUM_P}")
    chunk_bits = min(p, 16)
    low = all_states(chunk_bits)
    total = -np.inf
    for hi in range(2 ** (p - chunk_bits)):
        high_bits = ((hi >> np.arange(p - chunk_bits)) & 1).astype(float)
        states = np.hstack([low, np.broadcast_to(high_bits, (low.shape[0], p - chunk_bits))])
        e = _energies(th, states)
        top = e.max()
        total = np.logaddexp(total, top + np.log(np.exp(e - top).sum()))
    return float(total)


def joint_pmf(theta, x) -> float:
    th = _theta(theta)
    x = np.asarray(x, dtype=float)
    if x.shape != (th.shape[0],):
        raise DimensionError(f"state must have length {th.shape[0]}")
    return float(np.exp(_energies(th, x[None, :])[0] - log_partition(th)))


def linear_predictors(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """eta[n, s] = theta_ss + sum_{t != s} X[n, t] theta_st."""
    diag = np.diag(theta)
    return X @ (theta - np.diag(diag)) + diag


def psi_s(theta, x, s: int) -> float:
    """Per-vertex conditional log-normalizer log(1 + exp(eta_s))."""
    th = _theta(theta)
    x = np.asarray(x, dtype=float)
    p = th.shape[0]
    if not 0 <= s < p:
        raise IndexError(f"vertex {s} out of range for p={p}")
    eta = th[s, s] + np.dot(np.delete(x, s), np.delete(th[s], s))
    return float(softplus(eta))


def pseudo_likelihood(theta, X, lam: float) -> ObjectiveValue:
    """L1-penalized log pseudo-likelihood; the diagonal is never penalized."""
    th = _theta(theta)
    Xf = _samples(X)
    if Xf.shape[1] != th.shape[0]:
        raise DimensionError(f"theta is {th.shape[0]}x{th.shape[0]} but samples have p={Xf.shape[1]}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    eta = linear_predictors(th, Xf)
    loglik = float(np.sum(Xf * eta) - np.sum(softplus(eta)))
    return ObjectiveValue(loglik, Xf.shape[0] * lam * offdiag_penalty(th))


def pseudo_likelihood_gradient(theta, X) -> np.ndarray:
    """Gradient of the smooth pseudo-likelihood part, one entry per symmetric parameter.

    Off-diagonal entry (s, t) collects both conditionals that contain theta_st.
    """
    th = _theta(theta)
    Xf = _samples(X)
    if Xf.shape[1] != th.shape[0]:
        raise DimensionError("dimension mismatch between theta and samples")
    return pl_value_and_gradient(th, Xf)[1]


def pl_value_and_gradient(th: np.ndarray, Xf: np.ndarray) -> tuple[float, np.ndarray]:
    """Unpenalized pseudo-likelihood and its gradient from one pass; no validation."""
    eta = linear_predictors(th, Xf)
    value = float(np.sum(Xf * eta) - np.sum(softplus(eta)))
    resid = Xf - sigmoid(eta)
    cross = Xf.T @ resid
    grad = cross + cross.T
    np.fill_diagonal(grad, resid.sum(axis=0))
    return value, grad


def penalized_log_likelihood(theta, X, lam: float) -> ObjectiveValue:
    """Exact L1-penalized log-likelihood (p <= 25).

    The penalty ``(N lam / 2) sum_{s != t} |theta_st|`` equals
    ``N lam sum_{s<t} |theta_st|`` for symmetric theta; the latter is used.
    """
    th = _theta(theta)
    Xf = _samples(X)
    N, p = Xf.shape
    if p != th.shape[0]:
        raise DimensionError("dimension mismatch between theta and samples")
    gram = Xf.T @ Xf
    linear = float(np.sum(np.triu(th * gram)))
    return ObjectiveValue(linear - N * log_partition(th), N * lam * offdiag_penalty(th))
