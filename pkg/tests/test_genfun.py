import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudorot.genfun import (CertificationError, PolarFactor, SampleSpec, UntwistedFactor, factor_polar,
                              generating_value, solve_untwisted, verify_untwisted_lipschitz)
from pseudorot.maps import AngularProfile, ConstantProfile, PolarMap, rotation

TURN = 2 * np.pi


class IdentityFactor(UntwistedFactor):
    def forward(self, x, y):
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def test_rotation_factor_implicit_map():
    beta = 0.05
    f = PolarFactor(ConstantProfile(beta))
    X, y = np.array([0.3, -1.2, 0.0]), np.array([0.7, 0.1, -0.4])
    x, Y = solve_untwisted(f, X, y)
    c, s = np.cos(TURN * beta), np.sin(TURN * beta)
    assert np.allclose(x, (X + y * s) / c, atol=1e-12)
    fX, fY = f.forward(x, y)
    assert np.allclose(fX, X, atol=1e-12) and np.allclose(fY, Y, atol=1e-12)


def test_identity_factor_implicit_map():
    X, y = np.array([0.5, -2.0]), np.array([1.0, 0.3])
    x, Y = solve_untwisted(IdentityFactor(), X, y)
    assert np.allclose(x, X) and np.allclose(Y, y)


def test_round_trip_random_polar_factor(rng):
    f = PolarFactor(AngularProfile(0.3, 0.45).scaled(1 / 8))
    x, y = rng.normal(size=400) * 0.8, rng.normal(size=400) * 0.8
    X, Y = f.forward(x, y)
    x2, Y2 = solve_untwisted(f, X, y)
    assert np.abs(x2 - x).max() < 1e-10 and np.abs(Y2 - Y).max() < 1e-10


def test_rotation_generating_function_closed_form():
    beta = 0.04
    f = PolarFactor(ConstantProfile(beta))
    c, s = np.cos(TURN * beta), np.sin(TURN * beta)
    for X, y in [(0.3, 0.2), (-0.5, 0.9), (1.1, -0.4)]:
        ref = X * y / c + (s / c) / 2 * (X**2 + y**2)
        assert f.h(np.array(X), np.array(y)) == pytest.approx(ref, abs=1e-12)
        assert generating_value(f, X, y) == pytest.approx(ref, abs=1e-10)


def test_generating_function_partials_reproduce_factor():
    f = PolarFactor(AngularProfile(0.3, 0.45).scaled(1 / 8))
    X, y, h = 0.6, -0.35, 1e-6
    x, Y = solve_untwisted(f, np.array(X), np.array(y))
    dh_dy = (f.h(np.array(X), np.array(y + h)) - f.h(np.array(X), np.array(y - h))) / (2 * h)
    dh_dX = (f.h(np.array(X + h), np.array(y)) - f.h(np.array(X - h), np.array(y))) / (2 * h)
    assert dh_dy == pytest.approx(float(x), abs=1e-8)
    assert dh_dX == pytest.approx(float(Y), abs=1e-8)


def test_identity_generating_function():
    assert generating_value(IdentityFactor(), 0.7, -0.2) == pytest.approx(0.7 * -0.2, abs=1e-12)


def test_polar_generating_function_vanishes_at_origin():
    f = PolarFactor(AngularProfile(0.3, 0.45).scaled(1 / 8))
    assert f.h(np.array(0.0), np.array(0.0)) == 0.0


def test_rotation_split_into_equal_factors():
    chain = factor_polar(rotation(0.3), 4)
    assert chain.m == 4
    for i in range(1, 5):
        assert chain.factor(i).profile.turns(np.array(0.7)) == pytest.approx(0.075)


def test_band_chain_is_certified(band_chain):
    r = np.linspace(0, 3, 50)
    assert np.all(band_chain.factor(1).profile.turns(r) <= 0.45 / 8 + 1e-15)
    rep = verify_untwisted_lipschitz(band_chain.factor(1), band_chain.K)
    assert rep.passed


def test_chain_composes_to_target(band_chain, rng):
    x, y = rng.normal(size=20), rng.normal(size=20)
    X, Y = band_chain.compose(x, y)
    z = PolarMap(AngularProfile(0.3, 0.45))(x + 1j * y)
    assert np.allclose(X + 1j * Y, z, atol=1e-12)


def test_too_few_factors_fail_certification():
    with pytest.raises(CertificationError):
        factor_polar(PolarMap(AngularProfile(0.3, 0.45)), 1)


def test_identity_certificate_ratios_are_one():
    rep = verify_untwisted_lipschitz(IdentityFactor(), 1.0, SampleSpec(n_r=20, n_phi=20, n_pairs=500))
    assert rep.passed
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-6)


def test_rotation_below_inverse_cosine_fails():
    beta = 0.1
    f = PolarFactor(ConstantProfile(beta))
    K = 0.99 / np.cos(TURN * beta)
    rep = verify_untwisted_lipschitz(f, K, SampleSpec(n_r=20, n_phi=20, n_pairs=500))
    assert not rep.passed
    rep = verify_untwisted_lipschitz(f, 1.01 / np.cos(TURN * beta), SampleSpec(n_r=20, n_phi=20, n_pairs=500))
    assert rep.passed


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_solve_round_trip_property(x, y):
    f = PolarFactor(AngularProfile(0.3, 0.45).scaled(1 / 8))
    X, Y = f.forward(np.array(x), np.array(y))
    x2, Y2 = solve_untwisted(f, X, np.array(y))
    assert abs(float(x2) - x) < 1e-10 and abs(float(Y2) - float(Y)) < 1e-10
