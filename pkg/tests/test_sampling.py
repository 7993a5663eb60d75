import itertools
import json
import math

import numpy as np
import pytest
from scipy import stats

from plgnet.model import all_states, joint_pmf
from plgnet.sampling import (
    GibbsConfig,
    GraphSpec,
    conditional_prob,
    generate_graph,
    gibbs_sample,
    make_rng,
    sidecar,
    simulate,
)

from conftest import random_theta


def test_graph_edge_count_mean():
    counts = [generate_graph(GraphSpec(15, 0.3, seed=s)).n_edges() for s in range(1000)]
    se = math.sqrt(105 * 0.3 * 0.7 / 1000)
    assert abs(np.mean(counts) - 31.5) < 3 * se


def test_graph_weights_and_determinism():
    a = generate_graph(GraphSpec(10, 0.5, seed=3))
    b = generate_graph(GraphSpec(10, 0.5, seed=3))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, generate_graph(GraphSpec(10, 0.5, seed=4)).values)
    w = np.array([v for _, _, v in a.edges()])
    assert np.all((w >= -1) & (w <= 1))
    assert np.all(a.diagonal == 0)


def test_diagonal_override():
    th = generate_graph(GraphSpec(10, 0.3, seed=1, diagonal_override=[(0, 5.0)]))
    assert th.values[0, 0] == 5.0


def test_spec_validation():
    with pytest.raises(ValueError):
        GraphSpec(5, 0.0)
    with pytest.raises(ValueError):
        GraphSpec(5, 1.0)
    with pytest.raises(ValueError):
        GraphSpec(5, 0.3, diagonal_override=[(5, 1.0)])
    with pytest.raises(ValueError):
        GibbsConfig(thinning=0)


def test_conditional_prob_examples():
    assert conditional_prob(np.zeros((3, 3)), [1, 0, 1], 2) == 0.5
    th = np.zeros((3, 3))
    th[0, 0] = 5.0
    assert conditional_prob(th, [0, 1, 1], 0) == pytest.approx(0.99331, abs=1e-5)


def test_conditional_matches_enumeration(rng):
    for _ in range(20):
        p = int(rng.integers(2, 7))
        th = random_theta(rng, p, 1.5)
        x = rng.integers(0, 2, p)
        s = int(rng.integers(p))
        x1, x0 = x.copy(), x.copy()
        x1[s], x0[s] = 1, 0
        a, b = joint_pmf(th, x1), joint_pmf(th, x0)
        assert conditional_prob(th, x, s) == pytest.approx(a / (a + b), abs=1e-12)


def test_rng_streams_are_independent():
    a = make_rng(7, 1).random(5)
    b = make_rng(7, 2).random(5)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, make_rng(7, 1).random(5))


def test_gibbs_independent_columns():
    X = gibbs_sample(np.zeros((5, 5)), GibbsConfig(1000, 1000, 1, seed=2))
    sigma = 0.5 / math.sqrt(1000)
    assert np.all(np.abs(X.values.mean(axis=0) - 0.5) < 4 * sigma)


def test_gibbs_dominant_vertex():
    th = np.zeros((4, 4))
    th[0, 0] = 5.0
    th[1, 2] = th[2, 1] = 0.5
    X = gibbs_sample(th, GibbsConfig(1000, 1000, 1, seed=3))
    q = 1 / (1 + math.exp(-5))
    assert abs(X.values[:, 0].mean() - q) < 4 * math.sqrt(q * (1 - q) / 1000)
    assert X.values[:, 0].mean() > 0.9


def _empirical(X, p):
    idx = X.values @ (1 << np.arange(p))
    counts = np.bincount(idx, minlength=2 ** p)
    states = [np.array([(k >> s) & 1 for s in range(p)]) for k in range(2 ** p)]
    return counts, states


def test_gibbs_chi_square_p3():
    th = np.array([[0.3, 0.8, -0.5], [0.8, -0.4, 0.6], [-0.5, 0.6, 0.2]])
    X = gibbs_sample(th, GibbsConfig(100_000, 1000, 10, seed=11))
    counts, states = _empirical(X, 3)
    probs = np.array([joint_pmf(th, s) for s in states])
    res = stats.chisquare(counts, probs * counts.sum())
    assert res.pvalue > 0.001


def test_gibbs_total_variation():
    rng = np.random.default_rng(21)
    for p in (2, 3, 4):
        th = random_theta(rng, p, 1.0)
        X = gibbs_sample(th, GibbsConfig(100_000, 1000, 2, seed=p))
        counts, states = _empirical(X, p)
        probs = np.array([joint_pmf(th, s) for s in states])
        tv = 0.5 * np.abs(counts / counts.sum() - probs).sum()
        assert tv < 0.02


def test_burn_in_and_thinning_positions():
    th = random_theta(np.random.default_rng(5), 4)
    full = gibbs_sample(th, GibbsConfig(50, 0, 1, seed=9)).values
    thin = gibbs_sample(th, GibbsConfig(20, 10, 2, seed=9)).values
    # sweep g (1-based) is kept when g > burn_in and (g - burn_in) % thinning == 0
    kept = [10 + 2 * (i + 1) - 1 for i in range(20)]
    assert np.array_equal(thin, full[kept])


def test_gibbs_deterministic_and_chunked():
    th = random_theta(np.random.default_rng(1), 3)
    a = gibbs_sample(th, GibbsConfig(70_000, 0, 1, seed=4)).values
    b = gibbs_sample(th, GibbsConfig(70_000, 0, 1, seed=4)).values
    assert np.array_equal(a, b)
    assert a.shape == (70_000, 3)


def test_simulate_and_sidecar():
    spec = GraphSpec(5, 0.3, seed=2, diagonal_override=[(1, 2.0)])
    cfg = GibbsConfig(100, 50, 1, seed=2)
    theta, X = simulate(spec, cfg)
    assert X.values.shape == (100, 5)
    d = json.loads(sidecar(spec, cfg))
    assert d["schema"] == "plgnet.simulation/1"
    assert d["graph"]["diagonal_override"] == [[1, 2.0]]
    assert d["gibbs"]["burn_in"] == 50
