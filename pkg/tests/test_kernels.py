import math

import numpy as np
import pytest
from scipy import special

from utils.errors import DeltaNotInSpaceError, DivergentIntegralError, DomainError
from utils.kernels import (
    NormParams,
    Regime,
    Space,
    b0_cal,
    b0_cal_scaled,
    b0_scr,
    b0_scr_log_coefficient,
    delta_norm,
    heat_kernel,
    heat_kernel_sum,
    i_eps,
    i_eps_sandwich,
    i_eps_unify_bound,
    phi_norm,
    sphere_area,
    unit_ball_volume,
)


def params(alpha, p, d, eps=0.0):
    return NormParams(alpha=alpha, p=p, dim=d, eps=eps)


@pytest.mark.parametrize("d,n_axis", [(1, 801), (2, 201), (3, 61)])
def test_heat_kernel_integrates_to_one(d, n_axis):
    axis = np.linspace(-10.0, 10.0, n_axis)
    h = axis[1] - axis[0]
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    assert heat_kernel(nodes, 0.5, d).sum() * h ** d == pytest.approx(1.0, abs=1e-8)


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(DomainError):
        heat_kernel(0.0, 0.0, 1)


def test_heat_kernel_sum_matches_direct_sum():
    rng = np.random.default_rng(0)
    nodes = rng.normal(size=(700, 2)) * 2.0
    centers = rng.normal(size=(300, 2))
    weights = rng.random(300)
    weights /= weights.sum()
    direct = np.array([np.sum(weights * heat_kernel(x - centers, 0.05, 2)) for x in nodes])
    np.testing.assert_allclose(heat_kernel_sum(nodes, centers, 0.05, weights), direct, rtol=1e-10, atol=1e-14)


def test_geometry_constants():
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert sphere_area(3) == pytest.approx(4.0 * math.pi)
    assert sphere_area(1) == pytest.approx(2.0)


@pytest.mark.parametrize("alpha,p,d,expected", [
    (1.0, 2.0, 1, Regime.SUPERCRITICAL),
    (0.5, 2.0, 1, Regime.CRITICAL),
    (2.0 / 3.0, 3.0, 1, Regime.CRITICAL),
    (1.0, 2.0, 2, Regime.CRITICAL),
    (0.4, 2.0, 1, Regime.SUBCRITICAL),
    (2.5, 2.0, 2, Regime.SUPERCRITICAL),
])
def test_regime_classification(alpha, p, d, expected):
    assert params(alpha, p, d).regime() is expected


def test_integer_alpha_selects_scr():
    assert params(2.0, 3.0, 1).resolve_space() is Space.SCR
    assert params(1.5, 3.0, 1).resolve_space() is Space.CAL


def test_params_validation():
    with pytest.raises(ValueError):
        params(1.0, 1.0, 1)
    with pytest.raises(ValueError):
        params(0.0, 2.0, 1)
    with pytest.raises(ValueError):
        params(1.0, 2.0, 1, eps=-0.1)


def test_i_eps_at_origin():
    assert i_eps(0.0, params(1.0, 2.0, 1, eps=1.0)) == pytest.approx(math.log(2.0), rel=1e-8)


def test_i_eps_exact_case_alpha_one_d_two():
    r, eps = 1.3, 0.01
    a = eps * r * r / (2.0 * (1.0 + eps))
    b = r * r / 2.0
    expected = 2.0 / r ** 2 * (math.exp(-a) - math.exp(-b))
    assert i_eps(r, params(1.0, 2.0, 2, eps=eps)) == pytest.approx(expected, rel=1e-7)


def test_i_eps_diverges_at_zero_eps_when_alpha_reaches_d():
    with pytest.raises(DivergentIntegralError):
        i_eps(0.5, params(1.0, 2.0, 1, eps=0.0))


@pytest.mark.parametrize("alpha,d,eps", [(0.5, 1, 0.01), (1.0, 1, 0.1), (2.0, 1, 1e-3), (1.0, 2, 1e-4)])
def test_unify_bound_dominates(alpha, d, eps):
    prm = params(alpha, 2.0, d, eps)
    bound = i_eps_unify_bound(prm)
    for r in (0.0, 0.3, 1.0, 4.0):
        assert i_eps(r, prm) <= bound * (1.0 + 1e-8)


def test_unify_bound_equal_alpha_and_d():
    prm = params(1.0, 2.0, 1, eps=1e-3)
    assert i_eps_unify_bound(prm) == pytest.approx(1.0 + math.log(1e3))


@pytest.mark.parametrize("alpha,d", [(0.5, 1), (1.0, 2), (1.5, 1), (2.5, 2)])
@pytest.mark.parametrize("eps", [1.0, 0.1, 1e-2, 1e-3, 1e-4])
def test_i_eps_sandwich(alpha, d, eps):
    prm = params(alpha, 2.0, d, eps)
    for r in (0.1, 0.5, 1.0, 3.0, 10.0):
        value = i_eps(r, prm)
        lower, upper = i_eps_sandwich(r, prm)
        assert lower <= value * (1.0 + 1e-6)
        assert value <= upper * (1.0 + 1e-6)


@pytest.mark.parametrize("alpha,p,d", [(1.0, 2.0, 1), (1.5, 2.0, 1), (2.5, 2.0, 2)])
def test_supercritical_limit(alpha, p, d):
    limit = 2.0 / (alpha * p - d * (p - 1.0))
    assert b0_cal_scaled(params(alpha, p, d, eps=1e-6)) == pytest.approx(limit, rel=1e-2)
    assert b0_cal_scaled(params(alpha, p, d, eps=0.0)) == pytest.approx(limit)


def test_supercritical_example_value():
    assert b0_cal_scaled(params(1.0, 2.0, 1, eps=1e-6)) == pytest.approx(2.0 * (math.sqrt(1 + 1e-6) - 1e-3), rel=1e-7)


@pytest.mark.parametrize("alpha,p,d", [(1.0, 2.0, 2), (2.0 / 3.0, 3.0, 1)])
def test_critical_log_rate(alpha, p, d):
    eps = 1e-6
    ratio = b0_cal(params(alpha, p, d, eps)) / abs(math.log(eps))
    assert 0.95 <= ratio <= 1.05


def test_subcritical_b0_is_a_beta_function():
    # ∫_0^∞ s^{c-1}(1+s)^{-e} ds = B(c, e - c)
    prm = params(0.4, 2.0, 1, eps=0.0)
    assert b0_cal(prm) == pytest.approx(special.beta(0.4, 0.1), rel=1e-6)


def test_b0_at_zero_eps_diverges_outside_subcritical():
    with pytest.raises(DivergentIntegralError):
        b0_cal(params(1.0, 2.0, 1, eps=0.0))
    with pytest.raises(DivergentIntegralError):
        b0_scr(params(1.0, 2.0, 1, eps=0.0))


@pytest.mark.parametrize("alpha,d,eps", [(1.0, 1, 0.1), (0.5, 2, 0.01), (1.5, 1, 1.0)])
def test_scr_b0_equals_cal_b0_at_p_two(alpha, d, eps):
    prm = params(alpha, 2.0, d, eps)
    assert b0_scr(prm) == pytest.approx((2.0 * math.pi) ** (d / 2.0) * b0_cal(prm), rel=1e-5)


@pytest.mark.parametrize("alpha,d,eps", [(1.0, 1, 0.1), (0.5, 2, 0.01), (2.0, 1, 1e-3)])
def test_closed_forms_coincide_at_p_two(alpha, d, eps):
    prm = params(alpha, 2.0, d, eps)
    assert phi_norm(prm, Space.SCR) == pytest.approx(phi_norm(prm, Space.CAL), rel=1e-5)


def test_delta_norm_in_h_minus_one():
    prm = params(1.0, 2.0, 1)
    assert delta_norm(prm, Space.CAL) == pytest.approx(0.6316188, rel=1e-6)
    assert delta_norm(prm, Space.SCR) == pytest.approx(0.6316188, rel=1e-5)


def test_delta_scr_norm_beyond_p_two():
    # ‖δ₀‖ en 𝒮𝒲 con α > d usa la rama de gamma incompleta con parámetro negativo
    prm = params(2.0, 3.0, 1)
    value = delta_norm(prm, Space.SCR)
    assert math.isfinite(value) and value > 0
    assert phi_norm(prm.with_eps(1e-4), Space.SCR) == pytest.approx(value, rel=2e-2)


def test_delta_not_in_space_when_subcritical():
    with pytest.raises(DeltaNotInSpaceError, match="delta not in space"):
        delta_norm(params(0.4, 2.0, 1))


def test_phi_norm_nonincreasing_in_eps():
    values = [phi_norm(params(0.5, 2.0, 2, eps)) for eps in (1e-4, 1e-3, 1e-2, 1e-1, 1.0)]
    assert all(b <= a * (1.0 + 1e-9) for a, b in zip(values, values[1:]))


def test_phi_norm_scaling_in_supercritical_regime():
    prm = params(1.5, 2.0, 1)
    assert phi_norm(prm.with_eps(1e-8)) == pytest.approx(delta_norm(prm), rel=1e-3)


def test_critical_scr_log_coefficient():
    prm = params(1.0, 2.0, 2, eps=1e-6)
    coef = b0_scr_log_coefficient(prm)
    assert coef == pytest.approx(2.0 * math.pi)
    assert b0_scr(prm) / abs(math.log(1e-6)) / coef == pytest.approx(1.0, abs=0.05)
    with pytest.raises(DomainError):
        b0_scr_log_coefficient(params(1.0, 2.0, 1))


def test_heat_kernel_reference_values():
    assert heat_kernel(0.0, 1.0 / (4.0 * math.pi), 1) == pytest.approx(1.0)
    assert heat_kernel(0.0, 1.0, 1) == pytest.approx(0.2820948, rel=1e-6)
    assert heat_kernel(np.array([[2.0, 0.0]]), 1.0, 2)[0] == pytest.approx(math.exp(-1.0) / (4.0 * math.pi), rel=1e-10)


@pytest.mark.parametrize("alpha,p,d", [(1.0, 2.0, 1), (2.0, 3.0, 2)])
def test_delta_norm_when_alpha_equals_dimension(alpha, p, d):
    # AUTO elige 𝒮𝒲 (α entero); la cola en r grande no debe desbordar
    prm = params(alpha, p, d)
    value = delta_norm(prm)
    assert math.isfinite(value) and value > 0
    assert value == pytest.approx(delta_norm(prm, Space.SCR))
    assert phi_norm(prm.with_eps(1e-6), Space.SCR) == pytest.approx(value, rel=2e-2)


def test_delta_norm_auto_in_h_minus_one():
    assert delta_norm(params(1.0, 2.0, 1)) == pytest.approx(0.6316188, rel=1e-5)


def test_sandwich_upper_bound_far_in_the_tail():
    # ε = 1, r = 10: la ventana gamma vive en [25, 50], lejos de la moda
    prm = params(1.0, 2.0, 2, eps=1.0)
    exact = 2.0 / 100.0 * (math.exp(-25.0) - math.exp(-50.0))
    lower, upper = i_eps_sandwich(10.0, prm)
    assert i_eps(10.0, prm) == pytest.approx(exact, rel=1e-7)
    assert upper == pytest.approx(exact, rel=1e-10)
    assert lower <= exact
