"""Random ground-truth networks and systematic-scan Gibbs sampling.

Randomness comes from a Philox counter-based generator, so every seed
gives an independent, platform-stable stream.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from plgnet import _kernels
from plgnet.model import SampleMatrix, ThetaMatrix, _theta, sigmoid
from plgnet.transform import n_pairs, pair_tables

GIBBS_CHUNK = 1 << 16


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``seed``; ``stream`` selects an independent substream."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(stream)]))


@dataclass
class GraphSpec:
    p: int
    edge_prob: float
    seed: int = 0
    weight_low: float = -1.0
    weight_high: float = 1.0
    diagonal_override: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")
        if not 0 < self.edge_prob < 1:
            raise ValueError("edge_prob must lie in (0, 1)")
        for s, _ in self.diagonal_override:
            if not 0 <= s < self.p:
                raise ValueError(f"diagonal override vertex {s} out of range")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["diagonal_override"] = [[int(s), float(v)] for s, v in self.diagonal_override]
        return d


@dataclass
class GibbsConfig:
    n_samples: int = 1000
    burn_in: int = 1000
    thinning: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1 or self.thinning < 1 or self.burn_in < 0:
            raise ValueError("need n_samples >= 1, thinning >= 1, burn_in >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def generate_graph(spec: GraphSpec) -> ThetaMatrix:
    """Each pair is an edge with probability ``edge_prob``, weight uniform on [low, high]."""
    rng = make_rng(spec.seed, stream=1)
    m = n_pairs(spec.p)
    present = rng.random(m) < spec.edge_prob
    weights = rng.uniform(spec.weight_low, spec.weight_high, m)
    ps, pt = pair_tables(spec.p)
    th = np.zeros((spec.p, spec.p))
    th[ps, pt] = np.where(present, weights, 0.0)
    th[pt, ps] = th[ps, pt]
    for s, v in spec.diagonal_override:
        th[s, s] = v
    return ThetaMatrix(th)


def conditional_prob(theta, x, s: int) -> float:
    """P(x_s = 1 | x_{-s})."""
    th = _theta(theta)
    x = np.asarray(x, dtype=float)
    if not 0 <= s < th.shape[0]:
        raise IndexError(f"vertex {s} out of range")
    eta = th[s, s] + np.dot(np.delete(th[s], s), np.delete(x, s))
    return float(sigmoid(eta))


def gibbs_sample(theta, cfg: GibbsConfig) -> SampleMatrix:
    """Systematic-scan Gibbs chain: uniform random start, ``burn_in`` discarded sweeps,
    then one recorded state every ``thinning`` sweeps."""
    th = np.ascontiguousarray(_theta(theta), dtype=float)
    p = th.shape[0]
    rng = make_rng(cfg.seed, stream=2)
    x = (rng.random(p) < 0.5).astype(np.uint8)
    total = cfg.burn_in + cfg.n_samples * cfg.thinning
    out = np.empty((cfg.n_samples, p), dtype=np.uint8)
    filled = 0
    done = 0
    while done < total:
        k = min(GIBBS_CHUNK, total - done)
        u = rng.random((k, p))
        states = np.empty((k, p), dtype=np.uint8)
        _kernels.gibbs_sweeps(th, x, u, states)
        # sweep index (1-based, global) g is recorded when g > burn_in and (g - burn_in) % thinning == 0
        g = np.arange(done + 1, done + k + 1)
        keep = (g > cfg.burn_in) & ((g - cfg.burn_in) % cfg.thinning == 0)
        rec = states[keep]
        out[filled : filled + rec.shape[0]] = rec
        filled += rec.shape[0]
        done += k
    return SampleMatrix(out)


def simulate(spec: GraphSpec, cfg: GibbsConfig) -> tuple[ThetaMatrix, SampleMatrix]:
    theta = generate_graph(spec)
    return theta, gibbs_sample(theta, cfg)


def sidecar(spec: GraphSpec, cfg: GibbsConfig) -> str:
    return json.dumps({"schema": "plgnet.simulation/1", "graph": spec.to_dict(), "gibbs": cfg.to_dict()},
                      indent=1)
