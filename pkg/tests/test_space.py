import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudorot.actionflow import (ActionSpace, DomainError, a_ab, action_h, c_ab, finite_difference_gradient,
                                  in_V_prime, linking_form_L, lipschitz_certificate, periodic_numerators,
                                  projections, singular_circles, zeta)
from pseudorot.genfun import factor_polar
from pseudorot.maps import AngularProfile, ConstantProfile, PolarMap

ALPHA, BETA = 0.3, 0.45


@pytest.fixture(scope="module")
def space7(band_chain):
    return ActionSpace(band_chain, 7)


def test_origin_is_singular(space7):
    z = np.zeros((space7.N, 2))
    assert np.all(space7.zeta(z) == 0)
    assert space7.action(z) == 0.0


def test_periodic_orbit_state_is_singular(band_chain):
    b, a = 7, 3
    w = (1 + a / b - ALPHA) * np.exp(0.37j)
    z = ActionSpace(band_chain, b).orbit_state(w)
    assert np.abs(zeta(band_chain, b, z)).max() < 1e-12


def test_shift_equivariance(space7, rng):
    z = space7.random_states(3, 0.7, rng)
    assert np.abs(space7.zeta(space7.phi(z)) - space7.phi(space7.zeta(z))).max() == 0.0
    assert np.abs(space7.action(space7.phi(z)) - space7.action(z)).max() < 1e-10


def test_gradient_matches_field(band_chain, rng):
    space = ActionSpace(band_chain, 3)
    z = space.random_states(5, 0.8, rng)
    g = finite_difference_gradient(space, z)
    ze = space.zeta(z)
    rel = np.linalg.norm((g - ze).reshape(5, -1), axis=1) / np.linalg.norm(ze.reshape(5, -1), axis=1)
    assert rel.max() < 1e-6


def test_projection_identities(space7, rng):
    z = space7.random_states(4, 0.6, rng)
    Q, P, Qp = space7.projections(z)
    ze = space7.zeta(z)
    # zeta_s = J (Q'_s - Q_s), J(x, y) = (-y, x)
    d = Qp - Q
    assert np.abs(ze[..., 0] + d[..., 1]).max() < 1e-10
    assert np.abs(ze[..., 1] - d[..., 0]).max() < 1e-10
    # f_s(Q_s) = Q'_{s+1}
    for s in range(space7.N):
        X, Y = space7.chain.factor(s + 1).forward(Q[..., s, 0], Q[..., s, 1])
        nxt = (s + 1) % space7.N
        assert np.abs(X - Qp[..., nxt, 0]).max() < 1e-10
        assert np.abs(Y - Qp[..., nxt, 1]).max() < 1e-10


def test_singular_projections_coincide(band_chain):
    z = ActionSpace(band_chain, 7).orbit_state((1 + 3 / 7 - ALPHA) * np.exp(1.1j))
    for i in (1, 5, 30):
        Q, P, Qp = projections(band_chain, 7, z, i)
        assert np.allclose(Q, P, atol=1e-12) and np.allclose(P, Qp, atol=1e-12)


def test_zero_state_projections(band_chain):
    Q, P, Qp = projections(band_chain, 2, np.zeros((16, 2)), 3)
    assert not np.any(Q) and not np.any(P) and not np.any(Qp)


def test_lipschitz_bound_formula():
    chain = factor_polar(PolarMap(ConstantProfile(0.0)), 4, K_target=1.0 + 1e-9)
    assert ActionSpace(chain, 1).lipschitz_bound == pytest.approx(3.0, abs=1e-8)


def test_identity_chain_ratio_at_most_three(rng):
    chain = factor_polar(PolarMap(ConstantProfile(0.0)), 4, K_target=1.0 + 1e-9)
    space = ActionSpace(chain, 3)
    z = space.random_states(500, 1.0, rng)
    zp = space.random_states(500, 1.0, rng)
    ratio = lipschitz_certificate(chain, 3, z, zp)
    # zeta is linear here, with spectral norm of its matrix as the oracle
    n = space.dim
    M = np.stack([space.zeta(e.reshape(space.N, 2)).ravel() for e in np.eye(n)], axis=1)
    assert ratio <= np.linalg.norm(M, 2) + 1e-12
    assert np.linalg.norm(M, 2) <= 3.0 + 1e-12


def test_certified_chain_at_small_K(rng):
    chain = factor_polar(PolarMap(AngularProfile(ALPHA, BETA)), 40, K_target=1.2)
    space = ActionSpace(chain, 1)
    z = space.random_states(300, 1.0, rng)
    zp = z + space.random_states(300, 0.05, rng)
    assert lipschitz_certificate(chain, 1, z, zp) <= np.sqrt(6 * 1.44 + 3)


def test_flow_from_singular_state_is_constant(space7):
    z = space7.orbit_state(1 + 3 / 7 - ALPHA)
    tr = space7.flow(z, 2.0)
    assert np.abs(tr.states - z).max() < 1e-11


def test_action_increase_equals_field_energy(space7, rng):
    z0 = space7.random_states(1, 0.5, rng)[0]
    tr = space7.flow(z0, 1.5, tol=1e-11)
    h = space7.action(tr.states)
    assert np.all(np.diff(h) >= -1e-12)
    e = np.sum(space7.zeta(tr.states) ** 2, axis=(-2, -1))
    energy = np.sum(0.5 * (e[1:] + e[:-1]) * np.diff(tr.t))
    assert h[-1] - h[0] == pytest.approx(energy, rel=2e-3)


def test_gronwall_sandwich(space7, rng):
    A = space7.lipschitz_bound
    z = space7.random_states(4, 0.6, rng)
    zp = z + space7.random_states(4, 0.05, rng)
    for t in (0.5, -0.5):
        a, b = space7.flow(z, t, record=False).final, space7.flow(zp, t, record=False).final
        d0 = np.linalg.norm((z - zp).reshape(4, -1), axis=1)
        d1 = np.linalg.norm((a - b).reshape(4, -1), axis=1)
        assert np.all(d1 <= np.exp(A * abs(t)) * d0)
        assert np.all(d1 >= np.exp(-A * abs(t)) * d0)


def test_linking_form_first_quadrant_is_zero():
    assert linking_form_L(np.abs(np.random.default_rng(0).normal(size=(10, 2))) + 0.1) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 4), st.floats(0.0, 1.0))
def test_linking_form_of_winding_orbit(a, phase):
    # steps below a quarter turn, so each step crosses at most one axis
    N = 40
    s = np.arange(N)
    w = np.exp(2j * np.pi * (a * s / N + phase * 0.5 / N + 0.013))
    z = np.stack([w.real, w.imag], axis=-1)
    assert linking_form_L(z) == a
    assert linking_form_L(-z) == a


def test_linking_form_on_integrable_orbit(band_chain):
    b, a = 7, 3
    z = ActionSpace(band_chain, b).orbit_state((1 + a / b - ALPHA) * np.exp(0.2j))
    assert linking_form_L(z) == a


def test_linking_form_domain_error():
    z = np.array([[1.0, 1.0], [0.0, -1.0], [1.0, 1.0]])
    assert not in_V_prime(z)
    with pytest.raises(DomainError):
        linking_form_L(z)
    assert np.isnan(linking_form_L(z, strict=False))
    ok = np.array([[1.0, 1.0], [0.0, 1.0], [1.0, 1.0]])
    assert in_V_prime(ok) and linking_form_L(ok) == 0


def test_singular_circles_b7(band_chain):
    circles = singular_circles(band_chain, 7, ALPHA, BETA)
    assert [c.a for c in circles] == [3]
    assert circles[0].radius == pytest.approx(1 + 3 / 7 - ALPHA)
    assert circles[0].residual < 1e-9


def test_no_periodic_circles():
    assert periodic_numerators(2, ALPHA, BETA) == []
    with pytest.raises(ValueError):
        singular_circles(factor_polar(PolarMap(AngularProfile(ALPHA, BETA)), 8), 2, ALPHA, BETA)


def test_action_gap_matches_closed_form(band_chain):
    for b in (5, 7):
        for c in singular_circles(band_chain, b, ALPHA, BETA):
            gap = action_h(band_chain, b, c.states) - 0.0
            assert np.allclose(gap, c_ab(ALPHA, c.a, b), rtol=1e-9)


def test_closed_forms():
    assert c_ab(0.3, 2, 5) == pytest.approx(np.pi * 0.5 * (1 + 0.1 + 0.01 / 3))
    assert a_ab(0.3, 2, 5) == pytest.approx(np.pi * 1.1**2)
    assert c_ab(0.3, 3, 10) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        c_ab(0.3, 1, 5)
