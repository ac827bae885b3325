import numpy as np
import pytest

from pseudorot.actionflow import (ActionSpace, CacheVersionError, ConvergenceError, DeltaDisk, DiskSettings,
                                  HeteroclinicSolver, MeshChart, linearize_origin, linking_form_L, make_levels,
                                  read_cache_meta)
from pseudorot.actionflow.disk import _level_states
from pseudorot.genfun import factor_polar
from pseudorot.maps import AngularProfile, PolarMap, from_cover, to_cover

from conftest import ALPHA


def test_levels_are_increasing_and_span_unit_interval():
    lv = make_levels(64)
    assert lv[0] > 0 and lv[-1] == 1.0
    assert np.all(np.diff(lv) > 0)


def test_slow_plane_carries_linking_number(disk13):
    space = disk13.space
    lin = linearize_origin(space, 1)
    assert lin.slow_value > 0
    for e in lin.slow.T:
        assert linking_form_L(e.reshape(space.N, 2)) == 1


def test_nodes_sit_on_their_levels(disk13):
    u = disk13.space.action(disk13.states) / disk13.C
    assert np.abs(u - disk13.levels).max() < 1e-8


def test_top_row_is_singular(disk13):
    top = disk13.singular_states()
    assert np.abs(disk13.space.zeta(top)).max() < 1e-8
    assert np.allclose(np.abs(disk13.projection_points(1, 0.0)[:, -1]), disk13.radius, atol=1e-8)


def test_field_links_a_inside_disk(disk13):
    z = disk13.states[:, 1:-1].reshape(-1, disk13.space.N, 2)
    assert np.all(linking_form_L(disk13.space.zeta(z)) == disk13.a)


def test_shifted_lines_match_direct_solution(disk13):
    # a line that the build produced by the shift symmetry, solved from scratch
    p = disk13.n_psi // 2 + 1
    solver = HeteroclinicSolver(disk13.space, disk13.a, disk13.radius)
    line, _ = solver.solve(disk13.psi[p])
    col, _ = _level_states(solver, line, disk13.levels, disk13.C)
    assert np.abs(col - disk13.states[p]).max() < 1e-6


def test_short_horizon_is_reported(band_chain):
    # near-resonant slow eigenvalue: a tiny horizon cannot reach the circle
    space = ActionSpace(band_chain, 3)
    solver = HeteroclinicSolver(space, 1, 1 + 1 / 3 - ALPHA, T=0.5, segments=2)
    with pytest.raises(ConvergenceError):
        solver.solve(0.0)


def test_cache_round_trip(disk13, tmp_path):
    path = tmp_path / "d.bin"
    disk13.save(path)
    meta = read_cache_meta(path)
    assert (meta["a"], meta["b"], meta["n_psi"]) == (1, 3, disk13.n_psi)
    back = DeltaDisk.load(path, disk13.space)
    assert np.array_equal(back.states, disk13.states)
    assert np.array_equal(back.slow, disk13.slow)


def test_cache_rejects_corruption(disk13, tmp_path):
    path = tmp_path / "d.bin"
    disk13.save(path)
    raw = path.read_bytes()
    (tmp_path / "junk.bin").write_bytes(b"garbage" + raw[7:])
    with pytest.raises(CacheVersionError):
        DeltaDisk.load(tmp_path / "junk.bin", disk13.space)
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(CacheVersionError):
        DeltaDisk.load(tmp_path / "short.bin", disk13.space)
    other = ActionSpace(factor_polar(PolarMap(AngularProfile(ALPHA, 0.45)), 16), 3)
    with pytest.raises(CacheVersionError):
        DeltaDisk.load(path, other)


def test_csv_dump(disk13, tmp_path):
    disk13.to_csv(tmp_path / "d.csv")
    rows = np.loadtxt(tmp_path / "d.csv", delimiter=",", skiprows=1)
    assert rows.shape == (disk13.n_psi * len(disk13.levels), 2 + 2 * disk13.space.N)


# ----------------------------------------------------------------------
# charts


def test_chart_recovers_node_labels(maps13):
    ch = maps13.chart(1)
    X, R = ch.node_points()
    leaf, along = ch.coords(X.ravel(), R.ravel())
    assert np.abs(leaf.reshape(X.shape) - ch.psi[:-1, None]).max() < 1e-9
    assert np.abs(along.reshape(X.shape) - ch.levels[None]).max() < 1e-9


def test_chart_leaf_is_deck_equivariant(maps13, rng):
    ch = maps13.chart(2, 0.5)
    z = 0.9 * maps13.disk.radius * np.sqrt(rng.random(200)) * np.exp(2j * np.pi * rng.random(200))
    e, r = to_cover(z)
    assert np.allclose(ch.leaf(e + 3, r), ch.leaf(e, r) + 3, atol=1e-12)


def test_transfer_round_trip(maps13, rng):
    c1, c2 = maps13.chart(1), maps13.chart(4, 1.5)
    z = maps13.disk.radius * np.sqrt(rng.random(300)) * np.exp(2j * np.pi * rng.random(300))
    e, r = to_cover(z)
    e2, r2 = c1.transfer(c2, e, r)
    e3, r3 = c2.transfer(c1, e2, r2)
    assert np.abs(e3 - e).max() < 1e-9 and np.abs(r3 - r).max() < 1e-9


def test_no_folded_cells(maps13):
    for i in (1, 5, 13):
        for s in (0.0, 1.0, 2.0):
            assert maps13.chart(i, s).folded_cells() == 0


def test_chart_rejects_points_outside(maps13):
    with pytest.raises(ValueError):
        maps13.chart(1).coords(0.0, 2 * maps13.disk.radius)


# ----------------------------------------------------------------------
# finite-order map and isotopy


def test_finite_order_map_has_order_b(maps13, rng):
    R = maps13.disk.radius
    z = R * np.sqrt(rng.random(500)) * np.exp(2j * np.pi * rng.random(500))
    w = z
    for _ in range(maps13.b):
        w = maps13.f_hat(w)
    assert np.abs(w - z).max() < 10 * maps13.disk.resolution(1, 0.0)
    assert maps13.f_hat(np.zeros(1))[0] == 0


def test_finite_order_map_agrees_on_boundary(maps13, rng):
    R = maps13.disk.radius
    zb = R * np.exp(2j * np.pi * rng.random(100))
    e, r = to_cover(zb)
    assert np.abs(maps13.f_hat(zb) - from_cover(*maps13.f_lift(e, r))).max() < 1e-6


def test_isotopy_endpoints(maps13, rng):
    R = maps13.disk.radius
    z = R * np.sqrt(rng.random(200)) * np.exp(2j * np.pi * rng.random(200))
    e, r = to_cover(z)
    e0, r0 = maps13.check_lift(0.0, e, r)
    assert np.abs(e0 - e).max() < 1e-9 and np.abs(r0 - r).max() < 1e-9
    mb = maps13.m * maps13.b
    fe, fr = maps13.f_lift(e, r, count=mb)
    e1, r1 = maps13.check_lift(2.0 * mb, e, r)
    # the first factor is realized by the piecewise-linear mesh, exact only at nodes
    tol = maps13.disk.resolution(1, 0.0)
    assert np.abs(e1 - (fe - maps13.a)).max() < tol and np.abs(r1 - fr).max() < tol
    with pytest.raises(ValueError):
        maps13.check_lift(2.0 * mb + 1, e, r)


def test_isotopy_is_continuous_across_pieces(maps13, rng):
    z = 0.8 * maps13.disk.radius * np.exp(2j * np.pi * rng.random(50))
    e, r = to_cover(z)
    for s in (2.0, 10.0, 30.0):
        a = np.array(maps13.check_lift(s - 1e-9, e, r))
        b = np.array(maps13.check_lift(s + 1e-9, e, r))
        assert np.abs(a - b).max() < 1e-6


def test_isotopy_chart_leaves_are_images(maps13, rng):
    # a point in leaf psi of q_1(F) is carried by the isotopy into leaf psi of its chart
    s = 13.7
    ch1, chs = maps13.chart(1), maps13.isotopy_chart(s)
    z = 0.9 * maps13.disk.radius * np.sqrt(rng.random(100)) * np.exp(2j * np.pi * rng.random(100))
    e, r = to_cover(z)
    e2, r2 = maps13.check_lift(s, e, r)
    assert np.abs(chs.leaf(e2 + maps13.a, r2) - ch1.leaf(e, r)).max() < 1e-7


def test_mesh_chart_type(maps13):
    assert isinstance(maps13.chart(3, 0.25), MeshChart)
