import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapfilter.grid import (
    FreqGrid,
    GridError,
    forward_transform,
    inverse_transform,
    kernel_from_ratio,
    kernel_table,
    lattice_index,
    make_grids,
)
from gapfilter.model import ObservationGeometry


def test_no_gap_grid_nodes_and_band():
    time, freq = make_grids(1.0, 10.0, ObservationGeometry())
    np.testing.assert_array_equal(time.nodes, np.arange(11.0))
    assert freq.band == pytest.approx(np.pi)
    assert not time.missing.any()


def test_half_step_grid_with_hole():
    time, freq = make_grids(0.5, 5.0, ObservationGeometry(((2.0, 1.0),)))
    expected = np.concatenate([[-3.0, -2.5, -2.0], np.arange(0.0, 5.01, 0.5)])
    np.testing.assert_allclose(time.nodes, expected)
    assert freq.band == pytest.approx(2 * np.pi)
    np.testing.assert_array_equal(time.missing, expected < 0)


def test_off_lattice_interval_rejected():
    with pytest.raises(GridError, match="not multiples"):
        make_grids(1.0, 10.0, ObservationGeometry(((1.3, 1.2),)))


@pytest.mark.parametrize("step,horizon", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_nonpositive_step_or_horizon(step, horizon):
    with pytest.raises(GridError):
        make_grids(step, horizon, ObservationGeometry())


def test_horizon_must_clear_the_gap():
    with pytest.raises(GridError, match="must exceed"):
        make_grids(1.0, 3.0, ObservationGeometry(((2.0, 1.0),)))


def test_short_observation_window_rejected():
    with pytest.raises(GridError, match="too short"):
        make_grids(1.0, 10.0, ObservationGeometry(((2.0, 1.0),)), obs_window=5.0)


def test_lattice_index_rejects_fractional():
    np.testing.assert_array_equal(lattice_index([0.0, 0.75, -1.5], 0.25), [0, 3, -6])
    with pytest.raises(GridError):
        lattice_index(0.3, 0.25)


@given(
    step=st.sampled_from([0.1, 0.25, 0.5, 1.0]),
    n_h=st.integers(3, 30),
    m=st.integers(1, 4),
    n=st.integers(0, 4),
)
@settings(max_examples=40, deadline=None)
def test_grid_invariants(step, n_h, m, n):
    geo = ObservationGeometry(((m * step, n * step),))
    if m + n >= n_h:
        return
    time, freq = make_grids(step, n_h * step, geo)
    # increasing nodes, all on the lattice, hole and [0, L] fully covered
    assert np.all(np.diff(time.index) > 0)
    hole = set(range(-(m + n), -m + 1))
    assert hole | set(range(n_h + 1)) == set(time.index.tolist())
    assert np.all(time.weights == step)
    # conjugate band, symmetric odd grid, resolution of the longest lag
    assert freq.size % 2 == 1
    assert freq.band == pytest.approx(np.pi / step)
    np.testing.assert_allclose(freq.nodes, -freq.nodes[::-1], atol=1e-12)
    assert freq.spacing <= np.pi / (n_h * step + geo.extent) + 1e-12


def test_freq_grid_needs_odd_size():
    with pytest.raises(GridError):
        FreqGrid(1.0, 10)


def test_forward_transform_of_zero():
    freq = FreqGrid(1.0, 21)
    X = forward_transform(np.zeros(5), np.arange(5.0), freq)
    np.testing.assert_array_equal(X, 0)


def test_forward_transform_unit_mass():
    freq = FreqGrid(1.0, 21)
    X = forward_transform([1.0], [1.0], freq, sign=+1)
    np.testing.assert_allclose(X, np.exp(1j * freq.nodes), atol=1e-14)


def test_forward_transform_box_limit():
    step = 1e-3
    freq = FreqGrid(step, 40001)
    t = np.arange(0, 1000) * step  # cells covering [0, 1)
    X = forward_transform(np.ones_like(t), t, freq, sign=-1)
    lam = freq.nodes
    sel = (np.abs(lam) > 0) & (np.abs(lam) < 20)
    exact = (1 - np.exp(-1j * lam[sel])) / (1j * lam[sel])
    # left-point rule on cells of width step: O(step) error
    np.testing.assert_allclose(X[sel], exact, atol=2 * step)
    assert X[freq.half] == pytest.approx(1.0)


@given(
    n=st.integers(1, 20),
    seed=st.integers(0, 2**32 - 1),
    step=st.sampled_from([0.2, 0.5, 1.0]),
)
@settings(max_examples=50, deadline=None)
def test_round_trip_parseval_and_conjugate_symmetry(n, seed, step):
    rng = np.random.default_rng(seed)
    freq = FreqGrid(step, 2 * n + 5)
    idx = np.sort(rng.choice(np.arange(-n, n + 3), size=n, replace=False))
    t = idx * step
    x = rng.standard_normal(n)
    X = forward_transform(x, t, freq)
    back = inverse_transform(X, t, freq)
    np.testing.assert_allclose(back.real, x, rtol=1e-10, atol=1e-12)
    assert np.max(np.abs(back.imag)) < 1e-10 * max(1.0, np.max(np.abs(x)))
    # Parseval
    assert freq.integrate(np.abs(X) ** 2) == pytest.approx(step * np.sum(x**2), rel=1e-8)
    # real input is conjugate symmetric
    np.testing.assert_allclose(X[::-1], np.conj(X), atol=1e-12)


def test_kernel_examples():
    freq = FreqGrid(1.0, 101)
    ones = np.ones(freq.size)
    assert kernel_from_ratio(ones, 0.0, freq) == pytest.approx(1.0)
    assert kernel_from_ratio(ones, 1.0, freq) == pytest.approx(0.0, abs=1e-14)
    bump = 1 + np.cos(freq.nodes)
    assert kernel_from_ratio(bump, 1.0, freq) == pytest.approx(0.5)


@given(seed=st.integers(0, 2**32 - 1), size=st.sampled_from([5, 11, 31, 63]))
@settings(max_examples=30, deadline=None)
def test_kernel_table_symmetric_and_matches_direct_sum(seed, size):
    rng = np.random.default_rng(seed)
    freq = FreqGrid(0.5, size)
    half = rng.uniform(0.1, 2.0, freq.half + 1)
    rho = np.concatenate([half[:0:-1], half])
    table = kernel_table(rho, freq)
    lags = np.arange(size)
    np.testing.assert_array_equal(table, table[(-lags) % size])
    for n in (0, 1, size // 2):
        assert table[n] == pytest.approx(kernel_from_ratio(rho, n * freq.step, freq), abs=1e-13)


def test_refined_grid_keeps_step():
    freq = FreqGrid(0.5, 11)
    fine = freq.refined(3)
    assert fine.size % 2 == 1
    assert fine.step == freq.step
    assert fine.spacing < freq.spacing
