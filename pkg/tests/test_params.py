import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benard_tss.errors import (BadTemperatureOrder, EpsilonTooLarge, GammaTooSmall,
                               NonPositiveField)
from benard_tss.params import (Parameters, background_temperature, derived_constants,
                               epsilon_sq_upper_bound, gamma_lower_bound,
                               propose_gamma_epsilon, validate_parameters)


def unit_params(**kw):
    d = dict(nu=1.0, kappa=1.0, g=1.0, alpha=1.0, T0=1.0, T1=0.0, h=1.0, L1=1.0, L2=1.0,
             gamma=8.0, epsilon=0.1)
    d.update(kw)
    return Parameters(**d)


def test_unit_example_is_valid():
    vp = validate_parameters(unit_params(), 1.0)
    assert vp.lambda0 == 1.0
    assert gamma_lower_bound(vp, 1.0) == 4.0
    assert epsilon_sq_upper_bound(vp, 1.0) == pytest.approx(1 / 64)


def test_gamma_bound_is_strict():
    with pytest.raises(GammaTooSmall):
        validate_parameters(unit_params(gamma=4.0), 1.0)


def test_epsilon_too_large():
    with pytest.raises(EpsilonTooLarge):
        validate_parameters(unit_params(epsilon=0.2), 1.0)


def test_epsilon_must_stay_below_height():
    with pytest.raises(EpsilonTooLarge):
        validate_parameters(unit_params(epsilon=1.0, gamma=1e6), 1.0)


@pytest.mark.parametrize("field", ["nu", "kappa", "g", "alpha", "h", "L1", "L2",
                                   "gamma", "epsilon"])
@pytest.mark.parametrize("value", [0.0, -1.0, math.nan, math.inf])
def test_non_positive_fields_rejected(field, value):
    with pytest.raises(NonPositiveField):
        validate_parameters(unit_params(**{field: value}), 1.0)


def test_temperature_order():
    with pytest.raises(BadTemperatureOrder):
        validate_parameters(unit_params(T0=0.0, T1=1.0), 1.0)
    with pytest.raises(BadTemperatureOrder):
        validate_parameters(unit_params(T0=0.5, T1=0.5), 1.0)
    # equal temperatures are admitted on request
    vp = validate_parameters(unit_params(T0=0.5, T1=0.5), 1.0, strict_order=False)
    assert vp.delta_T == 0.0


def test_derived_constants_unit_example():
    vp = validate_parameters(unit_params(kappa=1.0, gamma=8.0), 1.0)
    c = derived_constants(vp.replace(gamma=1.0), 1.0, 1.0)
    assert c.R0 == pytest.approx(20.0, rel=1e-15)
    assert c.Kb == pytest.approx(10.0, rel=1e-15)


def test_eta_and_lambda0_are_minima():
    p = unit_params(nu=2.0, kappa=3.0)
    c = derived_constants(p, 9.87, 9.87)
    assert c.eta == 2.0
    assert c.lambda0 == 9.87
    assert derived_constants(p, 3.0, 2.0).lambda0 == 2.0


def test_Kb_matches_closed_form():
    p = unit_params(kappa=1.3, gamma=2.5, L1=2.0, L2=3.0, epsilon=0.07, T0=4.0, T1=1.5)
    c = derived_constants(p, 7.0, 11.0)
    expected = p.kappa * p.gamma * p.L1 * p.L2 / p.epsilon * (p.T1 - p.T0) ** 2
    assert c.Kb == pytest.approx(expected, rel=1e-14)
    assert c.Kb == 0.5 * c.eta * c.lambda0 * c.R0


def test_proposal_is_admissible():
    p = unit_params(g=10.0)
    gamma, eps = propose_gamma_epsilon(p, math.pi ** 2)
    validate_parameters(p.replace(gamma=gamma, epsilon=eps), math.pi ** 2)
    assert gamma == 2 * gamma_lower_bound(p, math.pi ** 2)


def test_background_profile():
    p = unit_params(epsilon=0.25, T0=3.0, T1=1.0)
    x3 = np.array([0.0, 0.5, 0.75, 0.875, 1.0])
    np.testing.assert_allclose(background_temperature(p, x3), [0, 0, 0, -1.0, -2.0])


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.01, 0.99))
def test_validity_is_monotone_below_gamma_star(s1, s2, eps_fraction):
    # the epsilon bound a/gamma - b/gamma^2 peaks at twice the gamma bound,
    # so raising gamma preserves validity only up to that point
    lam0 = 2.0
    p = unit_params(g=3.0)
    gmin = gamma_lower_bound(p, lam0)
    gamma = gmin * (1.0 + 1e-6 + s1 * (1 - 1e-6))
    gamma2 = gamma + (2 * gmin - gamma) * s2
    emax = math.sqrt(epsilon_sq_upper_bound(p.replace(gamma=gamma), lam0))
    eps = min(emax, p.h) * eps_fraction
    validate_parameters(p.replace(gamma=gamma, epsilon=eps), lam0)
    validate_parameters(p.replace(gamma=gamma2, epsilon=eps), lam0)
    validate_parameters(p.replace(gamma=gamma, epsilon=eps * 0.5), lam0)


def test_large_gamma_can_invalidate_epsilon():
    lam0 = 2.0
    p = unit_params(g=3.0)
    gstar = 2 * gamma_lower_bound(p, lam0)
    eps = 0.99 * math.sqrt(epsilon_sq_upper_bound(p.replace(gamma=gstar), lam0))
    validate_parameters(p.replace(gamma=gstar, epsilon=eps), lam0)
    with pytest.raises(EpsilonTooLarge):
        validate_parameters(p.replace(gamma=10 * gstar, epsilon=eps), lam0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.01, 0.5), st.floats(0.5, 4.0))
def test_radius_scales_with_gap_and_thickness(dT, eps, factor):
    p = unit_params(T0=dT, T1=0.0, epsilon=eps)
    c = derived_constants(p, 3.0, 4.0)
    c2 = derived_constants(p.replace(T0=dT * math.sqrt(factor)), 3.0, 4.0)
    c3 = derived_constants(p.replace(epsilon=eps / factor), 3.0, 4.0)
    assert c2.R0 == pytest.approx(factor * c.R0, rel=1e-12)
    assert c3.R0 == pytest.approx(factor * c.R0, rel=1e-12)
    assert c3.Kb == pytest.approx(factor * c.Kb, rel=1e-12)
