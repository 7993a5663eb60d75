import numpy as np
import pytest
from hypothesis import given, strategies as st

from plgnet.sampling import GibbsConfig, GraphSpec, simulate
from plgnet.selection import (
    NoFeasibleLambdaError,
    StarsConfig,
    half_lambda_translate,
    instability_curve,
    monotonize,
    stars_select,
    subsample_indices,
)


def test_half_lambda_translate():
    assert half_lambda_translate(0.01566) == pytest.approx(0.00783, rel=1e-15)
    assert half_lambda_translate(0.0144) == pytest.approx(0.0072, rel=1e-15)
    x = np.random.default_rng(0).random()
    assert half_lambda_translate(x) == x / 2
    with pytest.raises(ValueError):
        half_lambda_translate(0.0)


def test_identical_selections_are_stable():
    sel = np.zeros((5, 3, 6), dtype=bool)
    sel[:, 1:, :2] = True
    D, phi = instability_curve(sel)
    assert np.all(D == 0)


def test_half_selected_edge_is_maximally_unstable():
    sel = np.zeros((4, 1, 3), dtype=bool)
    sel[:2, 0, 0] = True
    _, phi = instability_curve(sel)
    assert 2 * phi[0, 0] * (1 - phi[0, 0]) == 0.5


@given(seed=st.integers(0, 2**31), B=st.integers(1, 12), L=st.integers(1, 8), m=st.integers(1, 20))
def test_instability_bounds_and_monotone(seed, B, L, m):
    sel = np.random.default_rng(seed).random((B, L, m)) < 0.5
    D, _ = instability_curve(sel)
    assert np.all((D >= 0) & (D <= 0.5))
    Db = monotonize(D)
    assert np.all(np.diff(Db) >= 0)  # grid is decreasing, so D-bar grows along it
    assert np.all(Db >= D)


def test_subsample_size_default_and_cap():
    cfg = StarsConfig(lambda_grid=[0.1, 0.01])
    assert cfg.size_for(1000) == 316
    assert cfg.size_for(50) == 40  # floor(10 sqrt 50) = 70 exceeds N, capped at 0.8 N
    with pytest.raises(ValueError):
        StarsConfig(lambda_grid=[0.1], subsample_size=10).size_for(10)
    with pytest.raises(ValueError):
        StarsConfig(lambda_grid=[0.1], beta=0.5)


def test_subsamples_without_replacement_and_deterministic():
    a = subsample_indices(100, 30, 5, seed=3)
    b = subsample_indices(100, 30, 5, seed=3)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
        assert len(np.unique(x)) == 30


def test_stars_end_to_end_and_nlr_translation():
    _, X = simulate(GraphSpec(6, 0.3, seed=1), GibbsConfig(400, 500, 1, seed=1))
    grid = np.geomspace(0.3, 0.01, 8)
    cfg = StarsConfig(lambda_grid=grid, n_subsamples=6, seed=2)
    res = stars_select(X, cfg)
    assert res.selected_lambda in grid
    assert np.all(np.diff(res.monotone_instability) >= 0)
    assert res.monotone_instability[res.selected_index] <= 0.05
    again = stars_select(X, cfg)
    assert again.selected_lambda == res.selected_lambda
    nlr = stars_select(X, StarsConfig(lambda_grid=grid, n_subsamples=6, seed=2, estimator="nlr"))
    assert nlr.selected_lambda == res.selected_lambda / 2
    assert np.array_equal(nlr.lambdas, grid / 2)


def test_stars_infeasible_grid(tmp_path):
    _, X = simulate(GraphSpec(6, 0.5, seed=3), GibbsConfig(400, 500, 1, seed=3))
    cfg = StarsConfig(lambda_grid=[0.004, 0.002], n_subsamples=6, beta=0.01)
    with pytest.raises(NoFeasibleLambdaError) as exc:
        stars_select(X, cfg)
    res = exc.value.result
    assert res is not None and np.all(res.monotone_instability > 0.01)
    res.write_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "lambda,instability,monotone_instability,edge_count"
