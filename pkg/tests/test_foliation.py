import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from pseudorot.foliation import (EPS_LEAF, ChartFamilyPath, CoincidentPoints, EuclideanChart, IsotopyPairPath, QuarterAngle,
                                 annulus_sums, displacement_m, lambda_count, linking_number_estimate,
                                 polar_image_chart, quarter_step, reduce_to_domain, rotation_number_estimate,
                                 tau_hat, theta_from_coords, track_pairs, winding_distance_estimate)
from pseudorot.maps import AngularProfile, ConstantProfile, rotation_isotopy, twist_isotopy


def test_lambda_count_values():
    assert lambda_count(0, 4) == 1.0
    assert lambda_count(1, 3) == 0.0
    assert lambda_count(1, 5) == 1.0
    assert lambda_count(0, 1) == 0.5
    assert lambda_count(3, -3) == -1.0
    assert lambda_count(2, 2) == 0.0


@given(st.integers(-40, 40), st.integers(-40, 40), st.integers(-40, 40))
def test_lambda_count_is_an_antisymmetric_cocycle(k, l, n):
    assert lambda_count(k, l) == -lambda_count(l, k)
    assert lambda_count(k, l) + lambda_count(l, n) == lambda_count(k, n)
    assert lambda_count(k + 4, l + 4) == lambda_count(k, l)


@given(st.floats(-3, 3), st.floats(0, 2), st.floats(-3, 3), st.floats(0, 2))
def test_theta_swap_adds_two(l1, a1, l2, a2):
    # leaves closer than the same-leaf band count as one leaf
    assume(not (abs(l1 - l2) <= EPS_LEAF and a1 == a2))
    t = theta_from_coords(l1, a1, l2, a2)
    assert theta_from_coords(l2, a2, l1, a1) == (t + 2) % 4


def test_theta_cases():
    assert theta_from_coords(0.0, 1.0, 0.5, 1.0) == 1
    assert theta_from_coords(0.0, 1.0, -0.5, 1.0) == 3
    assert theta_from_coords(0.0, 1.0, 0.0, 2.0) == 0
    assert theta_from_coords(0.0, 1.0, 1e-12, 0.5) == 2
    with pytest.raises(CoincidentPoints):
        theta_from_coords(0.0, 1.0, 0.0, 1.0)


def test_quarter_angle_arithmetic():
    assert (QuarterAngle(3) + 2).value == 1
    assert QuarterAngle(1).is_open and not QuarterAngle(2).is_open
    assert QuarterAngle(0).adjacent(QuarterAngle(3)) and not QuarterAngle(0).adjacent(QuarterAngle(2))
    assert list(quarter_step([0, 3, 1], [1, 0, 0])) == [1, 1, -1]


def _pairs(rng, n, r=1.0):
    return (rng.random(n), r * np.sqrt(rng.random(n))), (rng.random(n), r * np.sqrt(rng.random(n)))


def test_rigid_rotation_does_not_wind(rng):
    z1, z2 = _pairs(rng, 200)
    path = IsotopyPairPath(EuclideanChart(), rotation_isotopy(0.3), z1, z2)
    res = track_pairs(path, 200)
    assert res.unresolved == 0
    assert np.all(res.tau == 0)


def test_twist_winding_counts_crossings():
    # z2 outside z1 gains delta turns: each crossed translate adds two quarter steps
    prof = AngularProfile(0.3, 0.45)
    iso = twist_isotopy(prof, scale=20.0)
    z1 = (np.array([0.05]), np.array([0.5]))
    z2 = (np.array([0.2]), np.array([1.12]))
    delta = 20 * (prof.turns(1.12) - prof.turns(0.5))
    d0 = z2[0][0] - z1[0][0]
    crossings = int(np.floor(d0 + delta) - np.floor(d0))
    sums = annulus_sums(IsotopyPairPath(EuclideanChart(), iso, z1, z2), 1)
    assert sums.unresolved == 0
    assert sums.tau[0] == 2 * crossings
    assert sums.tau_bar[0] == 2 * crossings
    assert sums.lam[0] == pytest.approx(crossings)


def test_tau_hat_single_translate():
    iso = twist_isotopy(ConstantProfile(0.0), shift=-1.0)  # rotation by one full turn
    z1 = (np.array([0.0]), np.array([0.5]))
    z2 = (np.array([0.25]), np.array([0.5]))
    # equal radii: a rigid motion never changes the quarter angle
    assert tau_hat(IsotopyPairPath(EuclideanChart(), iso, z1, z2), 1)[0] == 0


def test_reduce_to_domain(rng):
    ell, rho = rng.normal(0, 5, 100), rng.random(100) + 0.1
    e, r, leaf = reduce_to_domain(EuclideanChart(), 0.25, ell, rho)
    assert np.all((leaf >= 0.25) & (leaf < 1.25))
    assert np.allclose(np.mod(e - ell + 0.5, 1.0), 0.5)


def test_displacement_of_rotation_lift(rng):
    lift = lambda e, r: (e + 1.3, r)
    ell = rng.random(1000)
    m = displacement_m(lift, EuclideanChart(), 0.0, ell, np.full(1000, 0.5))
    assert set(np.unique(m)) <= {1, 2}
    assert np.all(m == np.floor(ell + 1.3))


def test_rotation_number_of_rigid_rotation():
    lift = lambda e, r: (e + 0.3, r)
    est = rotation_number_estimate(lift, EuclideanChart(), 0.0, (np.array(0.1), np.array(0.5)), 2000)
    assert abs(est.value - 0.3) <= est.error + 1e-12
    with pytest.raises(ValueError):
        rotation_number_estimate(lift, EuclideanChart(), 0.0, (np.array(0.1), np.array(0.0)), 10)


def test_linking_number_of_rigid_rotation():
    z1 = (np.array([0.1]), np.array([0.3]))
    z2 = (np.array([0.6]), np.array([0.7]))
    est = linking_number_estimate(rotation_isotopy(0.3), EuclideanChart(), 0.0, z1, z2, 400)
    assert abs(est.value - 0.3) <= est.error


def test_rotation_preserves_radial_foliation(rng):
    # images of the ray foliation under rotations are the same foliation
    z1, z2 = _pairs(rng, 300)
    path = ChartFamilyPath(lambda s: polar_image_chart(ConstantProfile(0.3 * s)), z1, z2, s_max=1.0, eps=0.0)
    assert winding_distance_estimate(path, 300) == (0, 300)


def test_twisted_foliation_distance_grows(rng):
    z1, z2 = _pairs(rng, 300, r=1.15)
    prof = AngularProfile(0.3, 0.45)
    base = polar_image_chart(ConstantProfile(0.0))
    path = ChartFamilyPath(lambda s: polar_image_chart(_Scaled(prof, 8 * s), base), z1, z2, s_max=1.0, eps=0.0)
    d, _ = winding_distance_estimate(path, 300)
    assert d >= 2


class _Scaled:
    def __init__(self, prof, c):
        self.prof, self.c = prof, c

    def turns(self, r):
        return self.c * self.prof.turns(r)
