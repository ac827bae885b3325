import numpy as np
import pytest

from pseudorot.calabi import (CalabiEstimate, QuadratureMeasure, bound_experiment, calabi_action,
                              calabi_action_oracle, calabi_ang, calabi_link, concordance)
from pseudorot.maps import AngularProfile, ConstantProfile, rotation_isotopy, twist_isotopy

from conftest import ALPHA, BETA


def test_measure_samples_area_uniformly():
    m = QuadratureMeasure(radius=1.2, n=20000, seed=3)
    ell, rho = m.points()
    assert m.mass == pytest.approx(np.pi * 1.44)
    assert rho.max() <= 1.2 and ell.min() >= 0 and ell.max() < 1
    assert np.mean(rho**2) == pytest.approx(0.72, rel=1e-3)
    z1, z2 = m.pairs()
    assert np.array_equal(z1[0], QuadratureMeasure(1.2, 20000, 3).pairs()[0][0])
    assert not np.array_equal(z1[1], z2[1])


def test_action_route_for_rotation():
    res = calabi_action(ConstantProfile(0.3))
    assert res.cal == pytest.approx(0.0, abs=1e-14)
    assert res.cal_tilde == pytest.approx(np.pi**2 * 0.3, rel=1e-12)


def test_action_route_matches_oracle():
    prof = AngularProfile(ALPHA, BETA)
    for R, scale, shift in ((1.0, 1.0, 0.0), (1.15, 1.0, 0.0), (1.1, 3.0, 1.0)):
        res = calabi_action(prof, R, scale, shift)
        assert res.cal == pytest.approx(calabi_action_oracle(prof, R, scale, shift), rel=1e-10, abs=1e-12)


def test_action_route_ignores_exact_primitive_change():
    prof = AngularProfile(ALPHA, BETA)
    res = calabi_action(prof, 1.15, kappa_shift=lambda x, y: x**3 * y + np.sin(x))
    assert abs(res.kappa_term) < 1e-8
    assert res.cal == pytest.approx(calabi_action(prof, 1.15).cal, abs=1e-8)


def test_winding_and_linking_routes_for_rotation():
    m = QuadratureMeasure(1.0, 4000, 1)
    iso = rotation_isotopy(0.3)
    target = np.pi**2 * 0.3
    ang, link = calabi_ang(iso, m), calabi_link(iso, m)
    assert abs(ang.value - target) <= ang.error + 1e-9
    assert abs(link.value - target) <= link.error + 1e-9
    assert link.extra["unresolved"] == 0


def test_routes_agree_on_band_twist():
    prof = AngularProfile(ALPHA, BETA)
    m = QuadratureMeasure(1.1, 4000, 2)
    iso = twist_isotopy(prof)
    act = calabi_action(prof, 1.1)
    ests = [calabi_ang(iso, m), calabi_link(iso, m),
            CalabiEstimate("action", act.cal_tilde, 1e-9, 0, 0, 0.0)]
    ok, rows = concordance(ests)
    assert ok, rows


def test_concordance_flags_disagreement():
    a = CalabiEstimate("x", 1.0, 0.1, 10, 0, 0.0)
    b = CalabiEstimate("y", 1.5, 0.1, 10, 0, 0.0)
    assert not concordance([a, b])[0]
    assert concordance([a, CalabiEstimate("z", 1.1, 0.1, 10, 0, 0.0)])[0]
    assert not concordance([a], oracle=2.0)[0]


def test_bound_experiment_checks_radius(band_chain):
    with pytest.raises(ValueError):
        bound_experiment(band_chain, 7, 3, QuadratureMeasure(1.0, 100, 0))


def test_bound_experiment_display(band_chain):
    R = 1 + 3 / 7 - ALPHA
    rep = bound_experiment(band_chain, 7, 3, QuadratureMeasure(R, 2000, 0))
    assert rep.display_ok and rep.bounds_ok
    assert rep.display_bound == pytest.approx(8 * 8 * rep.A * rep.C)
    assert rep.tau_mass is None
    assert rep.to_json()["display_ok"]
