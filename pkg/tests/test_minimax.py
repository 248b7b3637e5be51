import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build
from gapfilter.grid import make_grids
from gapfilter.minimax import (
    Contamination,
    L1Ball,
    L2Ball,
    MinimaxError,
    best_response,
    bilinear_mse,
    class_distance,
    cross_error_densities,
    membership_residual,
    perturbed_result,
    sample_class_member,
    solve_least_favorable,
    solve_least_favorable_one_sided,
    verify_saddle_point,
)
from gapfilter.model import (
    ConstantBand,
    Lorentzian,
    ModelError,
    ObservationGeometry,
    WeightFunction,
    evaluate_density,
)
from gapfilter.solver import solve_filter, solve_filter_arrays

F1, G1 = Lorentzian(1.0, 1.0), ConstantBand(0.5)


@pytest.fixture(scope="module")
def small():
    geo = ObservationGeometry(((1.0, 1.0),))
    time, freq = make_grids(0.25, 5.0, geo)
    return time, freq, WeightFunction.box(0.0, 1.0, 0.25, 5.0, geo)


def _pair(kind):
    return {
        "l1_l2": (L1Ball(F1, 0.1), L2Ball(G1, 0.05)),
        "l2_l2": (L2Ball(F1, 0.05), L2Ball(G1, 0.05)),
        "cont_l1": (Contamination(F1, 0.1, 1.2), L1Ball(G1, 0.1)),
    }[kind]


@pytest.fixture(scope="module")
def solved(small):
    time, freq, w = small
    return {k: solve_least_favorable(*_pair(k), time, freq, w) for k in ("l1_l2", "l2_l2", "cont_l1")}


def test_class_parameter_checks():
    with pytest.raises(ModelError):
        L1Ball(F1, -0.1)
    with pytest.raises(ModelError):
        L2Ball(F1, -1.0)
    with pytest.raises(ModelError):
        Contamination(F1, 1.0, 1.0)
    with pytest.raises(ModelError):
        Contamination(F1, 0.1, 0.0)


def test_empty_contamination_class_rejected(small):
    time, freq, w = small
    with pytest.raises(MinimaxError, match="empty"):
        solve_least_favorable(Contamination(F1, 0.1, 0.5), L1Ball(G1, 0.1), time, freq, w)


def test_unknown_equation_set(small):
    time, freq, w = small
    with pytest.raises(MinimaxError):
        solve_least_favorable(*_pair("l1_l2"), time, freq, w, equations="other")
    with pytest.raises(MinimaxError):
        solve_least_favorable(*_pair("l1_l2"), time, freq, w, damping=0.0)


def test_cross_error_densities_noiseless(small):
    time, freq, w = small
    f = evaluate_density(F1, freq)
    sol = solve_filter_arrays(f, np.zeros_like(f), time, freq, w.on(time))
    hf, hg = cross_error_densities(sol)
    np.testing.assert_allclose(hf, 0.0, atol=1e-12)
    np.testing.assert_allclose(hg, np.abs(sol.A) ** 2, rtol=1e-8, atol=1e-12)
    zero = solve_filter_arrays(f, f, time, freq, np.zeros(len(time)))
    for h in cross_error_densities(zero):
        np.testing.assert_array_equal(h, 0.0)


@pytest.mark.parametrize("kind", ["l1_l2", "l2_l2", "cont_l1"])
def test_bilinear_form_reproduces_error(solved, kind):
    res = solved[kind]
    hf, hg = cross_error_densities(res.solution)
    assert bilinear_mse(hf, hg, res.f0, res.g0, res.freq) == pytest.approx(res.mse, rel=1e-10)


@pytest.mark.parametrize("kind", ["l1_l2", "l2_l2", "cont_l1"])
def test_fixed_point_properties(solved, kind):
    res = solved[kind]
    cf, cg = _pair(kind)
    freq = res.freq
    assert res.converged and res.iterations <= 500
    assert res.history[-1] < 1e-8
    r = res.residuals
    assert r["stationarity_f"] <= 1e-6 and r["stationarity_g"] <= 1e-6
    assert r["constraint_f"] <= 1e-8 and r["constraint_g"] <= 1e-8
    assert r["membership_f"] <= 1e-10 and r["membership_g"] <= 1e-10
    assert r["support_leakage"] <= 1e-6
    assert res.mse >= res.center_mse
    assert all(a >= 0 for a in res.alphas) and all(g >= 0 for g in res.gains)
    # sign conditions of the max-form equations
    if isinstance(cf, Contamination):
        base = (1 - cf.eps) * evaluate_density(cf.base, freq)
        assert np.all(res.phi <= 1e-6)
        lifted = res.f0 > base * (1 + 1e-9) + 1e-12
        np.testing.assert_allclose(res.phi[lifted], 0.0, atol=1e-6)
    if res.psi is not None:
        assert np.all(np.abs(res.psi) <= 1 + 1e-6)


def test_degenerate_classes_give_ordinary_filter(small):
    time, freq, w = small
    res = solve_least_favorable(L1Ball(F1, 0.0), L2Ball(G1, 0.0), time, freq, w)
    assert res.status == "singleton" and res.converged
    np.testing.assert_array_equal(res.f0, evaluate_density(F1, freq))
    np.testing.assert_array_equal(res.g0, evaluate_density(G1, freq))
    geo = w.geometry
    from gapfilter.model import ProcessModel
    ordinary = solve_filter(ProcessModel(F1, G1, geo, w), time, freq)
    assert abs(res.mse - ordinary.mse) <= 1e-12
    np.testing.assert_allclose(res.h0, ordinary.h, atol=1e-12)
    rep = verify_saddle_point(res, L1Ball(F1, 0.0), L2Ball(G1, 0.0), m=10)
    assert rep.passed and rep.max_violation == 0.0


def test_contamination_without_room_returns_center(small):
    time, freq, w = small
    power = float(freq.integrate(evaluate_density(F1, freq)))
    res = solve_least_favorable(Contamination(F1, 0.0, power * 1.1), L1Ball(G1, 0.0),
                                time, freq, w)
    np.testing.assert_array_equal(res.f0, evaluate_density(F1, freq))


def test_one_sided_zero_radius_is_frozen(small):
    time, freq, w = small
    res = solve_least_favorable_one_sided(G1, L1Ball(F1, 0.0), "f", time, freq, w)
    np.testing.assert_array_equal(res.f0, evaluate_density(F1, freq))
    np.testing.assert_array_equal(res.g0, evaluate_density(G1, freq))
    with pytest.raises(MinimaxError):
        solve_least_favorable_one_sided(G1, L1Ball(F1, 0.1), "x", time, freq, w)


def test_one_sided_contamination_on_constant_scenario():
    sc, model, time, freq = build("constant")
    cls = Contamination(model.signal, 0.2, 1.5 * float(freq.integrate(
        evaluate_density(model.signal, freq))))
    res = solve_least_favorable_one_sided(model.noise, cls, "f", time, freq, model.weight)
    assert res.converged
    assert res.residuals["stationarity_f"] <= 1e-6
    assert res.residuals["constraint_f"] <= 1e-8
    np.testing.assert_array_equal(res.g0, evaluate_density(model.noise, freq))
    assert verify_saddle_point(res, cls, None, m=40).passed


@pytest.mark.parametrize("name", ["minimax_signal_contamination", "minimax_noise_l1"])
def test_one_sided_bundled(name):
    sc, model, time, freq = build(name)
    cf, cg = sc.classes()
    if cf is not None:
        res = solve_least_favorable_one_sided(model.noise, cf, "f", time, freq, model.weight)
    else:
        res = solve_least_favorable_one_sided(model.signal, cg, "g", time, freq, model.weight)
    assert res.converged and res.mse >= res.center_mse
    assert verify_saddle_point(res, cf, cg, m=50).passed


def test_mixed_equations_are_available(small):
    time, freq, w = small
    res = solve_least_favorable(*_pair("cont_l1"), time, freq, w, equations="mixed")
    assert res.equations == "mixed" and res.converged
    # contamination multiplier is reported as the gain, the L1 multiplier as its reciprocal
    assert res.alphas[0] == pytest.approx(res.gains[0])
    assert res.alphas[1] == pytest.approx(1.0 / res.gains[1])


def test_stalled_iteration_is_reported(small):
    time, freq, w = small
    res = solve_least_favorable(*_pair("l1_l2"), time, freq, w, max_iter=3)
    assert not res.converged and res.status == "max_iter" and res.iterations == 3
    assert res.residuals["last_update"] > 1e-8


@pytest.mark.parametrize("kind", ["l1_l2", "l2_l2", "cont_l1"])
def test_saddle_audit_and_negative_control(solved, small, kind):
    time, freq, w = small
    cf, cg = _pair(kind)
    res = solved[kind]
    rep = verify_saddle_point(res, cf, cg, m=100, seed=3)
    assert rep.passed, rep
    assert rep.tolerance == pytest.approx(1e-6 * (1 + res.mse), rel=1e-6)
    bad = verify_saddle_point(perturbed_result(res, cf, time, w), cf, cg, m=100, seed=3)
    assert not bad.passed


classes = st.one_of(
    st.builds(L1Ball, st.just(F1), st.floats(0.0, 0.5)),
    st.builds(L2Ball, st.just(F1), st.floats(0.0, 0.5)),
    st.builds(Contamination, st.just(F1), st.floats(0.0, 0.9), st.floats(1.0, 3.0)),
)


@given(cls=classes, seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_sampled_members_belong_to_class(small, cls, seed):
    _, freq, _ = small
    x = sample_class_member(cls, freq, np.random.default_rng(seed))
    assert membership_residual(cls, x, freq) <= 1e-10
    np.testing.assert_allclose(x, x[::-1], atol=1e-14)
    if cls.eps == 0:
        np.testing.assert_array_equal(x, evaluate_density(F1, freq))


@given(cls=classes, seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_best_response_dominates_samples(small, cls, seed):
    _, freq, _ = small
    rng = np.random.default_rng(seed)
    weights = np.abs(rng.standard_normal(freq.size))
    weights = 0.5 * (weights + weights[::-1])
    best = best_response(cls, weights, freq)
    assert membership_residual(cls, best, freq) <= 1e-10
    top = float(freq.integrate(weights * best))
    for _ in range(5):
        x = sample_class_member(cls, freq, rng)
        assert float(freq.integrate(weights * x)) <= top + 1e-10


def test_samples_differ_between_seeds(small):
    _, freq, _ = small
    cls = L2Ball(F1, 0.1)
    a = sample_class_member(cls, freq, np.random.default_rng(1))
    b = sample_class_member(cls, freq, np.random.default_rng(2))
    assert not np.array_equal(a, b)


def test_class_distance_values(small):
    _, freq, _ = small
    x1 = evaluate_density(F1, freq)
    assert class_distance(L1Ball(F1, 1.0), x1 + 0.5, freq) == pytest.approx(0.5 / 0.25)
    assert class_distance(L2Ball(F1, 1.0), x1 + 0.5, freq) == pytest.approx(0.25 / 0.25)
    assert membership_residual(L1Ball(F1, 1.0), x1 + 0.5, freq) == pytest.approx(1.0)
