import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build, lorentzian_setup
from gapfilter.grid import FreqGrid, make_grids
from gapfilter.model import (
    ConstantBand,
    Lorentzian,
    ObservationGeometry,
    ProcessModel,
    WeightFunction,
    evaluate_density,
)
from gapfilter.oracle import (
    brute_force_projection,
    compare_with_oracle,
    covariance_from_density,
    empirical_mse,
    monte_carlo_check,
    simulate_paths,
)
from gapfilter.solver import solve_filter


def test_white_lattice_covariance():
    freq = FreqGrid(1.0, 41)
    r = covariance_from_density(np.full(41, 3.0), freq, 10)
    assert r[0] == pytest.approx(3.0)
    np.testing.assert_allclose(r[1:], 0.0, atol=1e-13)
    np.testing.assert_array_equal(covariance_from_density(np.zeros(41), freq, 5), 0.0)


def test_lorentzian_covariance_approaches_exponential():
    step = 0.002
    freq = FreqGrid(step, 20001)
    f = evaluate_density(Lorentzian(1.0, 1.0), freq)
    lags = np.array([0, 250, 500, 1000])
    r = covariance_from_density(f, freq, 1000)[lags]
    np.testing.assert_allclose(r, np.exp(-lags * step), rtol=1e-3)


def test_single_node_scalar_conditioning():
    P, Q = 2.0, 0.5
    geo = ObservationGeometry()
    time, freq = make_grids(1.0, 4.0, geo)
    w = WeightFunction(1.0, np.array([1.0]), geo)
    model = ProcessModel(ConstantBand(P), ConstantBand(Q), geo, w)
    orc = brute_force_projection(model, time, freq, window=0.0)
    np.testing.assert_allclose(orc.times, [0.0])
    assert orc.weights[0] == pytest.approx(P / (P + Q))
    assert orc.mse == pytest.approx(P * Q / (P + Q))


def test_noiseless_projection_reads_off_the_functional():
    model, time, freq = lorentzian_setup(noise=0.0)
    orc = brute_force_projection(model, time, freq)
    assert orc.mse <= 1e-10 * orc.variance
    a = model.weight.values
    expected = np.zeros(orc.times.size)
    for s, val in enumerate(a):
        expected[np.isclose(orc.times, -s * time.step)] = time.step * val
    np.testing.assert_allclose(orc.weights, expected, atol=1e-8)


def test_projection_is_locally_optimal(rng):
    model, time, freq = lorentzian_setup(step=0.5, horizon=5.0)
    orc = brute_force_projection(model, time, freq)
    f = evaluate_density(model.signal, freq)
    g = evaluate_density(model.noise, freq)
    idx = np.rint(orc.times / time.step).astype(int)
    span = int(np.ptp(idx)) + len(model.weight.values) + 1
    r_obs = covariance_from_density(f + g, freq, span)
    r_sig = covariance_from_density(f, freq, span)
    gram = r_obs[np.abs(idx[:, None] - idx[None, :])]
    a_idx = np.arange(len(model.weight.values))
    cross = r_sig[np.abs(idx[:, None] + a_idx[None, :])] @ (time.step * model.weight.values)

    def mse(w):
        return orc.variance - 2 * w @ cross + w @ gram @ w

    assert mse(orc.weights) == pytest.approx(orc.mse, rel=1e-8)
    for _ in range(10):
        d = rng.standard_normal(orc.weights.size)
        d *= 1e-3 / np.linalg.norm(d)
        assert mse(orc.weights + d) > orc.mse


def test_zero_model_paths_and_error():
    geo = ObservationGeometry(((1.0, 1.0),))
    time, freq = make_grids(0.5, 4.0, geo)
    w = WeightFunction.box(0.0, 1.0, 0.5, 4.0, geo)
    model = ProcessModel(ConstantBand(0.0), ConstantBand(0.0), geo, w)
    batch = simulate_paths(model, time, freq, 50, seed=3)
    np.testing.assert_array_equal(batch.observations, 0.0)
    np.testing.assert_array_equal(batch.target, 0.0)
    sol = solve_filter(ProcessModel(ConstantBand(1.0), ConstantBand(1.0), geo, w), time, freq)
    assert empirical_mse(sol, batch) == (0.0, 0.0)


def test_path_statistics_match_covariance():
    model, time, freq = lorentzian_setup(step=0.5, horizon=5.0)
    n = 100_000
    batch = simulate_paths(model, time, freq, n, seed=99)
    f = evaluate_density(model.signal, freq)
    r = covariance_from_density(f, freq, 1)
    j0 = int(np.nonzero(np.isclose(batch.times, 0.0))[0][0])
    j1 = int(np.nonzero(np.isclose(batch.times, -time.step))[0][0])
    x0, x1 = batch.signal[:, j0], batch.signal[:, j1]
    for sample, target in [(x0**2, r[0]), (x0 * x1, r[1])]:
        se = sample.std(ddof=1) / np.sqrt(n)
        assert abs(sample.mean() - target) <= 3 * se


def test_simulation_is_reproducible():
    model, time, freq = lorentzian_setup(step=0.5, horizon=5.0)
    a = simulate_paths(model, time, freq, 2500, seed=5)
    b = simulate_paths(model, time, freq, 2500, seed=5)
    c = simulate_paths(model, time, freq, 2500, seed=6)
    assert np.array_equal(a.observations, b.observations)
    assert np.array_equal(a.target, b.target)
    assert not np.array_equal(a.observations, c.observations)
    with pytest.raises(ValueError):
        simulate_paths(model, time, freq, 0, seed=5)


def test_noiseless_empirical_error_is_round_off():
    model, time, freq = lorentzian_setup(noise=0.0)
    sol = solve_filter(model, time, freq)
    batch = simulate_paths(model, time, freq, 2000, seed=8)
    mean, se = empirical_mse(sol, batch)
    assert mean <= 1e-12 * sol.variance
    assert monte_carlo_check(sol, batch).passed


@pytest.mark.parametrize("name", ["lorentzian_hole", "constant"])
def test_monte_carlo_agrees(name):
    sc, model, time, freq = build(name)
    sol = solve_filter(model, time, freq)
    rep = monte_carlo_check(sol, simulate_paths(model, time, freq, 10_000, sc.seed))
    assert rep.passed
    assert abs(rep.empirical - rep.mse) <= 3 * rep.standard_error


@given(noise=st.floats(0.05, 2.0), width=st.floats(0.2, 3.0))
@settings(max_examples=15, deadline=None)
def test_oracle_equivalence_property(noise, width):
    geo = ObservationGeometry(((1.0, 0.5),))
    time, freq = make_grids(0.5, 5.0, geo)
    w = WeightFunction.triangle(0.0, 2.0, 0.5, 5.0, geo)
    model = ProcessModel(Lorentzian(1.0, width), ConstantBand(noise), geo, w)
    cmp = compare_with_oracle(solve_filter(model, time, freq),
                              brute_force_projection(model, time, freq))
    assert cmp.passed, cmp


def test_comparison_rejects_mismatched_nodes():
    model, time, freq = lorentzian_setup()
    sol = solve_filter(model, time, freq)
    short = brute_force_projection(model, time, freq, window=5.0)
    with pytest.raises(ValueError):
        compare_with_oracle(sol, short)
