import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import lambertw

from localavg.errors import DomainError
from localavg.objectives import random_consistent_quadratic
from localavg.simulator import LocalUpdatePolicy, local_descent
from localavg.tradeoff import (CostModel, DecayModel, fit_decay_model, lambert_w_minus, linear_stationarity,
                               n_star_bound, partial_sum_bounds, partial_sum_h, round_t_star,
                               sublinear_residual, t_star_linear, t_star_linear_asymptotic,
                               t_star_linear_numeric, t_star_sublinear, t_star_sublinear_asymptotic,
                               t_star_sublinear_numeric, total_cost_bound)

# frozen from a bisection on w e^w = x and from dense-grid minimization, computed independently
W_AT_MINUS_TENTH = -3.577152063957297
T_STAR_LINEAR_09_001 = 25.1748
T_STAR_LINEAR_05_01 = 3.3589
T_STAR_QUARTIC = 12.9765


def brute_force_min(shape, hi, points=400_001):
    T = np.linspace(1e-6, hi, points)
    return float(T[np.argmin(shape(T))])


def test_decay_model_basics():
    g = DecayModel.geometric(0.5)
    p = DecayModel.power_law(2.0, 1.5)
    assert g.h(0) == 1.0 and p.h(0) == 1.0
    t = np.arange(50)
    assert np.all(np.diff(g.h(t)) < 0) and np.all(np.diff(p.h(t)) < 0)
    with pytest.raises(DomainError):
        DecayModel.geometric(1.0)
    with pytest.raises(DomainError):
        DecayModel.power_law(2.0, 1.0)
    with pytest.raises(DomainError):
        DecayModel.power_law(0.0, 1.5)


@pytest.mark.parametrize("model, T, expected", [
    (DecayModel.geometric(0.5), 3, 1.75),
    (DecayModel.geometric(0.9), 1, 1.0),
    (DecayModel.geometric(0.1), 1, 1.0),
    (DecayModel.power_law(2.0, 1.5), 2, 1 + 3 ** -1.5),
])
def test_partial_sums(model, T, expected):
    assert partial_sum_h(model, T) == pytest.approx(expected, rel=1e-12)


def test_partial_sum_rejects_bad_t():
    with pytest.raises(DomainError):
        partial_sum_h(DecayModel.geometric(0.5), 0)
    with pytest.raises(DomainError):
        partial_sum_h(DecayModel.geometric(0.5), 2.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 10), st.floats(1.01, 4), st.integers(1, 500))
def test_integral_bracket(a, beta, T):
    model = DecayModel.power_law(a, beta)
    lo, hi = partial_sum_bounds(model, T)
    s = partial_sum_h(model, T)
    assert lo <= s * (1 + 1e-12) and s <= hi * (1 + 1e-12)


def test_n_star_examples():
    cost = CostModel(1.0, 0.0, alpha=0.1, epsilon=0.01)
    assert n_star_bound(cost, DecayModel.geometric(0.5), 1) == pytest.approx(1000.0)
    assert n_star_bound(cost, DecayModel.power_law(1.0, 2.0), 1) == pytest.approx(1000.0)
    assert n_star_bound(cost, DecayModel.geometric(0.5), 3) == pytest.approx(1000 / 1.75)


@pytest.mark.parametrize("model", [DecayModel.geometric(0.9), DecayModel.power_law(2.0, 1.5)])
def test_n_star_non_increasing_in_t(model):
    cost = CostModel(1.0, 0.01)
    vals = [n_star_bound(cost, model, T) for T in range(1, 300)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_total_cost_examples():
    free = CostModel.from_ratio(0.0)
    g = DecayModel.geometric(0.5)
    vals = [total_cost_bound(free, g, T) for T in range(1, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert total_cost_bound(CostModel.from_ratio(0.3), g, 1) == pytest.approx(1.3)
    cost = CostModel.from_ratio(0.01, nodes=2, d0_sq=4.0, alpha=0.5, epsilon=0.1)
    expected = 2 * 4 * 20 * 1.1 / ((1 - 0.9 ** 10) / 0.1)
    assert total_cost_bound(cost, DecayModel.geometric(0.9), 10) == pytest.approx(expected)
    assert expected == pytest.approx(27.02, abs=0.01)


def test_cost_model_validation():
    with pytest.raises(DomainError):
        CostModel(0.0, 1.0)
    with pytest.raises(DomainError):
        CostModel(1.0, -1.0)


@pytest.mark.parametrize("x, w", [(-1 / math.e, -1.0), (-2 * math.exp(-2), -2.0), (-0.1, W_AT_MINUS_TENTH)])
def test_lambert_w_examples(x, w):
    assert lambert_w_minus(x) == pytest.approx(w, abs=1e-9)


def test_lambert_w_agrees_with_scipy():
    for x in -np.geomspace(1e-300, 1 / math.e, 300)[:-1]:
        assert lambert_w_minus(x) == pytest.approx(lambertw(x, -1).real, rel=1e-10)


@pytest.mark.parametrize("x", [0.0, 0.1, -0.5, float("nan")])
def test_lambert_w_domain(x):
    with pytest.raises(DomainError):
        lambert_w_minus(x)


def test_t_star_linear_spot_values():
    assert t_star_linear(0.9, 0.01) == pytest.approx(T_STAR_LINEAR_09_001, abs=1e-3)
    assert t_star_linear(0.5, 0.1) == pytest.approx(T_STAR_LINEAR_05_01, abs=1e-3)
    assert abs(t_star_linear(0.9, 0.01) - t_star_linear_numeric(0.9, 0.01)) < 0.5
    assert linear_stationarity(0.9, 0.01, t_star_linear(0.9, 0.01)) < 1e-10


@pytest.mark.parametrize("beta", [0.5, 0.9, 0.99])
@pytest.mark.parametrize("r", [0.001, 0.01, 0.1])
def test_t_star_linear_matches_brute_force(beta, r):
    shape = lambda T: (1 + r * T) / (1 - beta ** T)
    ref = brute_force_min(shape, 20 * t_star_linear_asymptotic(beta, r) + 50)
    assert abs(t_star_linear(beta, r) - ref) <= 0.5


@pytest.mark.parametrize("beta", [0.5, 0.9, 0.99])
def test_t_star_linear_non_increasing_in_r(beta):
    ts = [t_star_linear(beta, r) for r in (0.001, 0.01, 0.1)]
    assert ts[0] >= ts[1] >= ts[2]


def test_t_star_linear_underflow_falls_back_to_numeric():
    # beta**(1/r) underflows; the closed form would lose all precision
    t = t_star_linear(0.5, 1e-4)
    assert t == pytest.approx(t_star_linear_numeric(0.5, 1e-4), rel=1e-6)
    assert linear_stationarity(0.5, 1e-4, t) < 1e-8


def test_t_star_linear_domain():
    with pytest.raises(DomainError):
        t_star_linear(1.0, 0.01)
    with pytest.raises(DomainError):
        t_star_linear(0.9, 0.0)


def test_linear_asymptotic_tracks_exact_value_loosely():
    exact = t_star_linear(0.9, 0.01)
    assert t_star_linear_asymptotic(0.9, 0.01) == pytest.approx(23.2, abs=0.1)
    assert t_star_linear_asymptotic(0.9, 0.01) < exact


def test_t_star_sublinear_quartic_case():
    T = t_star_sublinear(2.0, 1.5, 0.01)
    assert T == pytest.approx(T_STAR_QUARTIC, abs=1e-3)
    assert sublinear_residual(2.0, 1.5, 0.01, T) < 1e-10
    asym = t_star_sublinear_asymptotic(2.0, 1.5, 0.01)
    assert asym == pytest.approx((100 ** (2 / 3) - 1) / 2)
    assert T > asym


@pytest.mark.parametrize("a", [1.0, 2.0])
@pytest.mark.parametrize("beta", [1.25, 1.5, 2.0])
@pytest.mark.parametrize("r", [0.001, 0.01])
def test_t_star_sublinear_matches_brute_force(a, beta, r):
    T = t_star_sublinear(a, beta, r)
    assert sublinear_residual(a, beta, r, T) < 1e-10
    shape = lambda t: (1 + r * t) / (1 - (1 + a * t) ** (1 - beta))
    ref = brute_force_min(shape, 20 * T + 50)
    assert abs(T - ref) <= 1.0
    assert abs(T - t_star_sublinear_numeric(a, beta, r)) <= 1.0


def test_round_t_star_picks_cheaper_neighbour():
    cost = CostModel.from_ratio(0.01)
    model = DecayModel.geometric(0.9)
    k = round_t_star(t_star_linear(0.9, 0.01), cost, model)
    assert k in (25, 26)
    assert total_cost_bound(cost, model, k) <= min(total_cost_bound(cost, model, j) for j in (25, 26))
    assert round_t_star(0.3, cost, model) == 1


def test_fit_exact_geometric_series():
    fit = fit_decay_model(0.8 ** np.arange(40))
    assert fit.kind == "geometric"
    assert fit.model.beta == pytest.approx(0.8, abs=1e-6)


def test_fit_exact_power_law_series():
    t = np.arange(200)
    fit = fit_decay_model((1 + 2 * t) ** -1.5)
    assert fit.kind == "power_law"
    assert fit.model.a == pytest.approx(2.0, rel=0.05)
    assert fit.model.beta == pytest.approx(1.5, rel=0.05)


def test_quadratic_local_trajectory_classified_geometric(rng):
    prob = random_consistent_quadratic(1, 10, rng, rows=[6])
    f = prob.oracles[0]
    # long enough to get past the multi-eigenvalue transient
    res = local_descent(f, rng.standard_normal(10), LocalUpdatePolicy.fixed(1000, 1.0 / f.smoothness()))
    fit = fit_decay_model(res.grad_sq)
    assert fit.kind == "geometric"
    assert fit.geometric_residual < fit.power_residual


def test_fit_input_checks():
    with pytest.raises(ValueError):
        fit_decay_model([1.0] * 5)
    with pytest.raises(ValueError):
        fit_decay_model(np.r_[np.ones(10), 0.0])
    assert fit_decay_model(np.linspace(1, 2, 30)).model is None


def test_fit_drops_round_off_floor():
    y = np.r_[0.5 ** np.arange(100), np.full(50, 1e-40)]
    fit = fit_decay_model(y)
    assert fit.n_points == 87 and fit.kind == "geometric"
