import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermionic_nls.errors import InvalidArgumentError, NumericalFailureError
from fermionic_nls.grid_core import apply, build_schrodinger, grid_with_spacing, inner_product
from fermionic_nls.solitons import (
    NORM_SLOPE,
    SQRT_MU_SLOPE,
    ExpansionCoefficients,
    SolitonSpec,
    mu_from_norm,
    sqrt_mu_linearization,
    w_base,
    w_star,
    w_star_prime,
    w_tilde,
    w_tilde_norm_sq,
    w_tilde_scaled,
    w_tilde_scaled_prime,
)


def test_expansion_constants():
    c = ExpansionCoefficients()
    assert c.norm_slope == pytest.approx(-2.317766, abs=5e-7)
    assert NORM_SLOPE == pytest.approx(6 - 12 * math.log(2), abs=1e-15)
    assert SQRT_MU_SLOPE == pytest.approx((6 - math.log(12)) / 16 + math.log(2), abs=1e-15)
    assert c.sqrt_mu_slope == pytest.approx(0.912841, abs=5e-7)


@pytest.mark.parametrize("p, mu", [(1.0, -1), (3.0, -1), (2.0, 0.0), (2.0, 0.5)])
def test_spec_validation(p, mu):
    with pytest.raises(InvalidArgumentError):
        SolitonSpec(p, mu)


def test_w_base_values():
    assert w_base(0.0) == pytest.approx(1.4142136, abs=1e-7)
    x = np.linspace(0, 50, 501)
    assert np.all(np.diff(w_base(x)) < 0)
    assert np.all(w_base(-x) == w_base(x))
    assert w_base(1e4) == 0.0


def test_w_base_norm():
    g = grid_with_spacing(40, 0.05)
    assert inner_product(w_base(g.x), w_base(g.x), g) == pytest.approx(4, abs=1e-6)


def test_w_star_values():
    assert w_star(0.0) == pytest.approx(0.3535534, abs=1e-7)
    x = np.linspace(-60, 60, 1201)
    assert np.max(np.abs(w_star(x) - 0.25 * w_base(x / 4))) <= 1e-14
    g = grid_with_spacing(40, 0.05)
    assert inner_product(w_star(g.x), w_star(g.x), g) == pytest.approx(1, abs=1e-6)


def test_w_star_closed_form():
    x = np.linspace(-10, 10, 41)
    closed = (math.sqrt(2) / 2) / (np.exp(x / 4) + np.exp(-x / 4))
    np.testing.assert_allclose(w_star(x), closed, rtol=1e-14)


def test_w_star_prime_matches_difference():
    x = np.linspace(-20, 20, 81)
    d = 1e-6
    fd = (w_star(x + d) - w_star(x - d)) / (2 * d)
    assert np.max(np.abs(fd - w_star_prime(x))) < 1e-9


def test_w_tilde_reduces_at_two():
    x = np.linspace(-30, 30, 601)
    assert np.max(np.abs(w_tilde(2.0, x) - w_base(x))) <= 1e-14


@pytest.mark.parametrize("p", [1.5, 1.9, 2.0, 2.3])
def test_w_tilde_peak(p):
    assert w_tilde(p, 0.0) == pytest.approx(p ** (1 / (2 * (p - 1))), rel=1e-14)


def test_w_tilde_closed_form():
    p, x = 1.7, np.linspace(-8, 8, 33)
    closed = (2 * math.sqrt(p) / (np.exp((p - 1) * x) + np.exp((1 - p) * x))) ** (1 / (p - 1))
    np.testing.assert_allclose(w_tilde(p, x), closed, rtol=1e-13)


def test_w_tilde_rejects_exponent():
    with pytest.raises(InvalidArgumentError):
        w_tilde(3.0, 0.0)


def test_w_tilde_norm_linearization():
    g = grid_with_spacing(40, 0.05)
    v = w_tilde(1.95, g.x)
    assert inner_product(v, v, g) == pytest.approx(4 + NORM_SLOPE * (1.95 - 2), abs=5e-3)


def test_scaled_profile_reduces_to_star():
    x = np.linspace(-40, 40, 801)
    assert np.max(np.abs(w_tilde_scaled(SolitonSpec(2.0, -1 / 16), x) - w_star(x))) <= 1e-14


def test_scaled_profile_scaling_identity():
    p, mu = 1.9, -0.09
    x = np.linspace(-30, 30, 601)
    lhs = w_tilde_scaled(SolitonSpec(p, mu), x)
    rhs = abs(mu) ** (1 / (2 * (p - 1))) * w_tilde(p, math.sqrt(abs(mu)) * x)
    assert np.max(np.abs(lhs - rhs)) <= 1e-13


def test_scaled_profile_equation_residual():
    g = grid_with_spacing(60, 0.05)
    p, mu = 1.9, -0.09
    u = w_tilde_scaled(SolitonSpec(p, mu), g.x)
    uxx = -apply(build_schrodinger(np.zeros(g.n_points), g), u)
    res = (uxx + mu * u + u ** (2 * p - 1))[1:-1]
    assert np.max(np.abs(res)) <= 0.01 * g.h ** 2


def test_scaled_prime_identity():
    spec = SolitonSpec(1.85, -0.1)
    x = np.linspace(-25, 25, 101)
    d = 1e-6
    fd = (w_tilde_scaled(spec, x + d) - w_tilde_scaled(spec, x - d)) / (2 * d)
    assert np.max(np.abs(fd - w_tilde_scaled_prime(spec, x))) < 1e-9


def test_mu_from_norm_anchors():
    assert mu_from_norm(2.0, 1.0) == pytest.approx(-1 / 16, abs=1e-10)
    assert mu_from_norm(2.0, 4.0) == pytest.approx(-1.0, abs=1e-10)
    assert mu_from_norm(1.9, 1.0) == pytest.approx(-0.094, abs=3e-3)


def test_mu_from_norm_closed_form_branch():
    mu = mu_from_norm(1.9, 1.0, norm_sq=w_tilde_norm_sq(1.9))
    assert mu == pytest.approx(mu_from_norm(1.9, 1.0), rel=1e-8)


def test_mu_from_norm_bracket_failure():
    with pytest.raises(NumericalFailureError):
        mu_from_norm(2.0, 1e9)


def test_mu_from_norm_rejects_target():
    with pytest.raises(InvalidArgumentError):
        mu_from_norm(2.0, 0.0)


def test_sqrt_mu_linearization_values():
    assert sqrt_mu_linearization(2.0) == 0.25
    assert sqrt_mu_linearization(1.9) == pytest.approx(0.25 + 0.1 * SQRT_MU_SLOPE, abs=1e-15)
    assert sqrt_mu_linearization(1.9) == pytest.approx(0.3412841, abs=1e-7)


def test_sqrt_mu_linearization_rate():
    def err(p):
        return abs(sqrt_mu_linearization(p) - math.sqrt(-mu_from_norm(p, 1.0)))
    assert err(1.9) >= 8 * err(1.99)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.2, 2.8), st.floats(-20, 20))
def test_w_tilde_even_and_positive(p, x):
    v = w_tilde(p, x)
    assert v > 0 or abs(x) > 10
    assert v == w_tilde(p, -x)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.6, 2.4), st.floats(0.01, 2.0))
def test_norm_scaling_property(p, target):
    mu = mu_from_norm(p, target, norm_sq=w_tilde_norm_sq(p))
    g = grid_with_spacing(80 / math.sqrt(-mu), 0.02 / math.sqrt(-mu))
    u = w_tilde_scaled(SolitonSpec(p, mu), g.x)
    assert inner_product(u, u, g) == pytest.approx(target, rel=1e-6)
