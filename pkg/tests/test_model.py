import itertools
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from plgnet.model import (
    BinaryDataError,
    DimensionError,
    ObjectiveValue,
    SampleMatrix,
    ThetaMatrix,
    all_states,
    joint_pmf,
    log_partition,
    penalized_log_likelihood,
    psi_s,
    pseudo_likelihood,
    pseudo_likelihood_gradient,
)

from conftest import random_samples, random_theta


# -- types -------------------------------------------------------------------

def test_theta_rejects_asymmetric_and_nonfinite():
    with pytest.raises(ValueError):
        ThetaMatrix(np.array([[0.0, 1.0], [0.5, 0.0]]))
    with pytest.raises(ValueError):
        ThetaMatrix(np.array([[np.nan]]))
    with pytest.raises(DimensionError):
        ThetaMatrix(np.zeros((2, 3)))


def test_theta_is_read_only():
    th = ThetaMatrix.zeros(3)
    with pytest.raises(ValueError):
        th.values[0, 0] = 1.0


def test_theta_json_roundtrip_lists_upper_nonzeros_one_based(tmp_path):
    th = ThetaMatrix(np.array([[0.5, 0.0, -1.0], [0.0, 0.0, 0.25], [-1.0, 0.25, 0.0]]))
    d = th.to_json_dict()
    assert d["p"] == 3
    assert d["entries"] == [[1, 1, 0.5], [1, 3, -1.0], [2, 3, 0.25]]
    th.save_json(tmp_path / "t.json")
    assert np.array_equal(ThetaMatrix.load_json(tmp_path / "t.json").values, th.values)
    th.save_csv(tmp_path / "t.csv")
    assert np.array_equal(ThetaMatrix.load_csv(tmp_path / "t.csv").values, th.values)


def test_theta_json_rejects_out_of_range(tmp_path):
    with pytest.raises(DimensionError):
        ThetaMatrix.from_json_dict({"p": 2, "entries": [[1, 3, 1.0]]})


def test_edges_positive_only():
    th = ThetaMatrix(np.array([[0, 1.0, -2.0], [1.0, 0, 0], [-2.0, 0, 0]]))
    assert th.edges() == [(0, 1, 1.0), (0, 2, -2.0)]
    assert th.edges(positive_only=True) == [(0, 1, 1.0)]
    assert th.n_edges() == 2


def test_samples_reject_non_binary_with_coordinates():
    with pytest.raises(BinaryDataError) as exc:
        SampleMatrix(np.array([[0, 1], [1, 2]]))
    assert (exc.value.row, exc.value.col) == (1, 1)
    assert "row 2, column 2" in str(exc.value)


def test_samples_csv(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("0,1,1\n1,0,0\n\n")
    sm = SampleMatrix.load_csv(f)
    assert (sm.N, sm.p) == (2, 3)
    sm.save_csv(tmp_path / "y.csv")
    assert (tmp_path / "y.csv").read_text() == "0,1,1\n1,0,0\n"
    f.write_text("0,1\n1,NA\n")
    with pytest.raises(BinaryDataError):
        SampleMatrix.load_csv(f)
    assert SampleMatrix.load_csv(f, impute_zero=True).values.tolist() == [[0, 1], [1, 0]]
    f.write_text("")
    with pytest.raises(DimensionError):
        SampleMatrix.load_csv(f)
    f.write_text("0,1\n1\n")
    with pytest.raises(DimensionError):
        SampleMatrix.load_csv(f)


def test_objective_value_total():
    ov = ObjectiveValue(-3.0, 0.5)
    assert ov.total == -3.5
    assert ov.to_dict()["total"] == -3.5


# -- log partition and pmf ---------------------------------------------------

def test_log_partition_examples():
    assert log_partition(np.zeros((1, 1))) == pytest.approx(math.log(2), abs=1e-15)
    assert log_partition(np.zeros((2, 2))) == pytest.approx(math.log(4), abs=1e-15)
    th = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert log_partition(th) == pytest.approx(math.log(3 + math.e), abs=1e-14)
    assert log_partition(th) == pytest.approx(1.743668, abs=1e-6)


def test_log_partition_guard():
    with pytest.raises(DimensionError):
        log_partition(np.zeros((26, 26)))


def test_log_partition_matches_mpmath_enumeration(rng):
    mpmath.mp.dps = 40
    for p in (3, 5, 7):
        th = random_theta(rng, p, scale=3.0)
        total = mpmath.mpf(0)
        for x in itertools.product((0, 1), repeat=p):
            e = mpmath.mpf(0)
            for s in range(p):
                for t in range(s, p):
                    e += mpmath.mpf(th[s, t]) * x[s] * x[t]
            total += mpmath.exp(e)
        assert log_partition(th) == pytest.approx(float(mpmath.log(total)), rel=1e-13)


def test_log_partition_large_potentials_no_overflow():
    th = np.diag([700.0, 650.0, -700.0])
    assert np.isfinite(log_partition(th))
    assert log_partition(th) == pytest.approx(1350.0, rel=1e-12)


def test_joint_pmf_examples(rng):
    assert joint_pmf(np.zeros((1, 1)), [0]) == pytest.approx(0.5)
    assert joint_pmf(np.zeros((2, 2)), [1, 1]) == pytest.approx(0.25)
    th = random_theta(rng, 3)
    assert sum(joint_pmf(th, x) for x in all_states(3)) == pytest.approx(1.0, abs=1e-12)


@given(p=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
def test_pmf_normalizes(p, seed):
    th = random_theta(np.random.default_rng(seed), p, scale=2.0)
    states = all_states(p)
    total = sum(joint_pmf(th, x) for x in states) if p <= 6 else None
    if total is None:
        # vectorised check for the larger cases
        lz = log_partition(th)
        e = np.einsum("ns,st,nt->n", states, np.triu(th), states)
        total = np.exp(e - lz).sum()
    assert abs(total - 1.0) < 1e-10


# -- psi_s ---------------------------------------------------------------------

def test_psi_examples():
    assert psi_s(np.zeros((3, 3)), [1, 0, 1], 1) == pytest.approx(math.log(2))
    th = np.zeros((3, 3))
    th[0, 0] = 5.0
    assert psi_s(th, [0, 1, 1], 0) == pytest.approx(5.00672, abs=1e-5)


def test_psi_matches_extended_precision(rng):
    mpmath.mp.dps = 50
    for _ in range(50):
        p = int(rng.integers(2, 8))
        th = random_theta(rng, p, scale=float(rng.choice([1.0, 50.0, 400.0])))
        x = rng.integers(0, 2, p)
        s = int(rng.integers(p))
        eta = mpmath.mpf(th[s, s]) + sum(mpmath.mpf(th[s, t]) * int(x[t]) for t in range(p) if t != s)
        ref = float(mpmath.log1p(mpmath.exp(eta)))
        # rounding in the double-precision eta is amplified by |eta| in the deep negative tail
        rel = 1e-15 + 4e-16 * abs(float(eta))
        assert psi_s(th, x, s) == pytest.approx(ref, rel=rel, abs=1e-300)


def test_psi_index_bounds():
    with pytest.raises(IndexError):
        psi_s(np.zeros((2, 2)), [0, 1], 2)


@given(seed=st.integers(0, 2**32 - 1), bump=st.floats(0.01, 3.0))
def test_psi_monotone(seed, bump):
    rng = np.random.default_rng(seed)
    p = 4
    th = random_theta(rng, p)
    x = rng.integers(0, 2, p)
    x[1] = 1
    base = psi_s(th, x, 0)
    up = th.copy()
    up[0, 0] += bump
    assert psi_s(up, x, 0) > base
    up = th.copy()
    up[0, 1] += bump
    up[1, 0] += bump
    assert psi_s(up, x, 0) > base


# -- pseudo-likelihood ---------------------------------------------------------

def _pl_loops(th, X, lam):
    N, p = X.shape
    ll = 0.0
    for n in range(N):
        for s in range(p):
            eta = th[s, s] + sum(X[n, t] * th[s, t] for t in range(p) if t != s)
            ll += X[n, s] * eta - math.log1p(math.exp(eta))
    pen = N * lam * sum(abs(th[s, t]) for s in range(p) for t in range(s + 1, p))
    return ll, pen


def test_pseudo_likelihood_zero_theta():
    X = np.array([[0, 1, 1], [1, 1, 0]])
    ov = pseudo_likelihood(np.zeros((3, 3)), X, 0.7)
    assert ov.total == pytest.approx(-2 * 3 * math.log(2), rel=1e-15)
    assert ov.penalty_part == 0.0


def test_pseudo_likelihood_matches_loops(rng):
    for _ in range(20):
        p = int(rng.integers(2, 6))
        N = int(rng.integers(1, 20))
        th = random_theta(rng, p)
        X = random_samples(rng, N, p)
        lam = float(rng.uniform(0, 1))
        ll, pen = _pl_loops(th, X, lam)
        ov = pseudo_likelihood(th, X, lam)
        assert ov.loglik_part == pytest.approx(ll, rel=1e-12)
        assert ov.penalty_part == pytest.approx(pen, rel=1e-12)


def test_penalty_linearity(rng):
    th = random_theta(rng, 4)
    X = random_samples(rng, 9, 4)
    a, b = pseudo_likelihood(th, X, 0.0), pseudo_likelihood(th, X, 0.3)
    iu = np.triu_indices(4, 1)
    assert a.total - b.total == pytest.approx(9 * 0.3 * np.abs(th[iu]).sum(), rel=1e-12)


def test_pseudo_likelihood_dimension_mismatch():
    with pytest.raises(DimensionError):
        pseudo_likelihood(np.zeros((3, 3)), np.zeros((2, 2), dtype=int), 0.0)


@given(seed=st.integers(0, 2**32 - 1))
def test_pseudo_likelihood_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 7))
    th = random_theta(rng, p)
    X = random_samples(rng, 15, p)
    perm = rng.permutation(p)
    a = pseudo_likelihood(th, X, 0.2).total
    b = pseudo_likelihood(th[np.ix_(perm, perm)], X[:, perm], 0.2).total
    assert b == pytest.approx(a, rel=1e-12)


def test_gradient_zero_theta_zero_data():
    g = pseudo_likelihood_gradient(np.zeros((3, 3)), np.zeros((7, 3), dtype=int))
    assert np.allclose(np.diag(g), -3.5)
    assert np.all(g[~np.eye(3, dtype=bool)] == 0)


def _fd_gradient(th, X, h=1e-5):
    p = th.shape[0]
    G = np.zeros((p, p))
    for s in range(p):
        for t in range(s, p):
            E = np.zeros((p, p))
            E[s, t] = E[t, s] = h
            G[s, t] = G[t, s] = (pseudo_likelihood(th + E, X, 0).total - pseudo_likelihood(th - E, X, 0).total) / (2 * h)
    return G


def test_gradient_matches_finite_differences(rng):
    for _ in range(10):
        p = int(rng.integers(2, 7))
        th = random_theta(rng, p)
        X = random_samples(rng, 30, p)
        G = pseudo_likelihood_gradient(th, X)
        F = _fd_gradient(th, X)
        assert np.abs(G - F).max() / np.abs(F).max() < 1e-6


def test_gradient_symmetric(rng):
    G = pseudo_likelihood_gradient(random_theta(rng, 5), random_samples(rng, 20, 5))
    assert np.array_equal(G, G.T)


# -- full likelihood -----------------------------------------------------------

def test_penalized_log_likelihood_examples():
    X = np.zeros((4, 3), dtype=int)
    assert penalized_log_likelihood(np.zeros((3, 3)), X, 1.0).total == pytest.approx(-4 * 3 * math.log(2))
    th = np.array([[0.0, 1.0], [1.0, 0.0]])
    lam = 0.3
    ov = penalized_log_likelihood(th, np.array([[1, 1]]), lam)
    assert ov.total == pytest.approx(1 - math.log(3 + math.e) - lam, rel=1e-14)


def test_penalized_log_likelihood_matches_pmf(rng):
    th = random_theta(rng, 3)
    X = random_samples(rng, 12, 3)
    lam = 0.1
    ref = sum(math.log(joint_pmf(th, x)) for x in X) - 12 * lam * np.abs(th[np.triu_indices(3, 1)]).sum()
    assert penalized_log_likelihood(th, X, lam).total == pytest.approx(ref, rel=1e-12)


def test_penalized_log_likelihood_guard():
    with pytest.raises(DimensionError):
        penalized_log_likelihood(np.zeros((26, 26)), np.zeros((1, 26), dtype=int), 0.0)
