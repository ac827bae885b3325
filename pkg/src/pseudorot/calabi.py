"""Calabi invariants of disk isotopies by three independent routes.

* ``calabi_ang``: double integral of the winding of pairs of orbits.
* ``calabi_action``: integral of the action function of a polar family.
* ``calabi_link``: double integral of the displacement-corrected linking
  cocycle read in a radial foliation chart.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .foliation import EuclideanChart, FoliationChart, IsotopyPairPath, displacement_m, track_pairs
from .maps import IsotopyPath, Profile, from_cover


@dataclass(frozen=True)
class QuadratureMeasure:
    """Area measure on the disk of the given radius, sampled by Monte Carlo.

    Samples are Latin-hypercube stratified in (r^2, angle), so each point is
    uniform for the area measure.  Pairs are independent copies.
    """

    radius: float = 1.0
    n: int = 200_000
    seed: int = 0

    @property
    def mass(self) -> float:
        return float(np.pi * self.radius**2)

    def _lhs(self, rng, n, dims):
        u = np.empty((n, dims))
        for d in range(dims):
            u[:, d] = (rng.permutation(n) + rng.random(n)) / n
        return u

    def points(self, stream: int = 0):
        """Cover points (ell, rho) with ell in [0, 1)."""
        rng = np.random.default_rng([self.seed, stream])
        u = self._lhs(rng, self.n, 2)
        return u[:, 1], self.radius * np.sqrt(u[:, 0])

    def pairs(self):
        rng = np.random.default_rng([self.seed, 7])
        u = self._lhs(rng, self.n, 4)
        z1 = (u[:, 1], self.radius * np.sqrt(u[:, 0]))
        z2 = (u[:, 3], self.radius * np.sqrt(u[:, 2]))
        return z1, z2


@dataclass
class CalabiEstimate:
    estimator: str
    value: float
    error: float
    n: int
    seed: int
    wall_time: float
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def _mc(values, mass2):
    values = np.asarray(values, dtype=float)
    mean = values.mean()
    se = values.std(ddof=1) / np.sqrt(len(values)) if len(values) > 1 else np.inf
    return mass2 * mean, 3.0 * mass2 * se


# --------------------------------------------------------------------------
# winding of pairs


def ang_winding(path: IsotopyPath, z1, z2, n_grid: int = 5, max_turn: float = 0.25, max_depth: int = 40):
    """Total turns made by f_s(z2) - f_s(z1) as s runs over the isotopy.

    Points are cover coordinates (ell, rho) (arrays).  Each parameter
    interval is halved until the wrapped change of angle is below
    ``max_turn``; the result is the sum of the wrapped changes.
    """
    e1, r1 = (np.atleast_1d(np.asarray(c, dtype=float)) for c in z1)
    e2, r2 = (np.atleast_1d(np.asarray(c, dtype=float)) for c in z2)
    P = len(e1)

    def angle(s, idx):
        p1 = from_cover(*path.lift(s, e1[idx], r1[idx]))
        p2 = from_cover(*path.lift(s, e2[idx], r2[idx]))
        d = p2 - p1
        if np.any(d == 0):
            raise ValueError("orbits collide: f_s(z) = f_s(z')")
        return np.angle(d) / (2 * np.pi)

    S = np.tile(np.linspace(0.0, path.s_max, n_grid), P)
    I = np.repeat(np.arange(P), n_grid)
    A = angle(S, I)
    min_len = path.s_max * 2.0 ** -max_depth
    for _ in range(max_depth):
        same = I[1:] == I[:-1]
        step = np.mod(np.diff(A) + 0.5, 1.0) - 0.5
        flag = same & (np.abs(step) >= max_turn) & (np.diff(S) > min_len)
        if not np.any(flag):
            break
        j = np.nonzero(flag)[0]
        Sm, Im = 0.5 * (S[j] + S[j + 1]), I[j]
        S, I, A = np.concatenate([S, Sm]), np.concatenate([I, Im]), np.concatenate([A, angle(Sm, Im)])
        order = np.lexsort((S, I))
        S, I, A = S[order], I[order], A[order]
    same = I[1:] == I[:-1]
    step = np.where(same, np.mod(np.diff(A) + 0.5, 1.0) - 0.5, 0.0)
    out = np.zeros(P)
    np.add.at(out, I[:-1], step)
    return out


def calabi_ang(path: IsotopyPath, measure: QuadratureMeasure, chunk: int = 50_000) -> CalabiEstimate:
    t0 = time.perf_counter()
    z1, z2 = measure.pairs()
    vals = np.concatenate([
        ang_winding(path, (z1[0][i:i + chunk], z1[1][i:i + chunk]), (z2[0][i:i + chunk], z2[1][i:i + chunk]))
        for i in range(0, measure.n, chunk)])
    v, e = _mc(vals, measure.mass**2)
    return CalabiEstimate("ang", v, e, measure.n, measure.seed, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# action function of polar families


@dataclass(frozen=True)
class ActionResult:
    cal: float
    rot: float
    area: float
    cal_tilde: float
    kappa_term: float = 0.0


def _radial_nodes(profile: Profile, radius: float, order: int = 40):
    x, w = leggauss(order)
    cuts = [0.0] + [k for k in profile.kinks if 0 < k < radius] + [radius]
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def action_function(profile: Profile, radius: float, r, scale: float = 1.0):
    """Action of the polar isotopy at radius r, for the primitive (x dy - y dx)/2,
    normalized to vanish on the boundary circle: -1/2 int_r^R rho^2 Omega'(rho) d rho
    with Omega = 2 pi scale omega."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    x, w = leggauss(30)
    for i, ri in enumerate(r):
        cuts = [ri] + [k for k in profile.kinks if ri < k < radius] + [radius]
        tot = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            s = 0.5 * (b - a) * x + 0.5 * (a + b)
            tot += np.sum(0.5 * (b - a) * w * s**2 * profile.slope(s))
        out[i] = -np.pi * scale * tot
    return out


def calabi_action(profile: Profile, radius: float = 1.0, scale: float = 1.0, shift: float = 0.0,
                  kappa_shift=None, grid: int = 200) -> ActionResult:
    """Cal of the polar map with turns scale * omega - shift on the disk of the given radius.

    The result also carries the boundary rotation rot and the lifted
    invariant cal_tilde = cal + area^2 * rot.  With ``kappa_shift`` (a
    function F(x, y)) the integral of F o f - F is added, which changes the
    primitive by dF and must not change the result.
    """
    nodes, weights = _radial_nodes(profile, radius)
    A = action_function(profile, radius, nodes, scale)
    cal = float(np.sum(weights * 2 * np.pi * nodes * A))
    kappa_term = 0.0
    if kappa_shift is not None:
        x, w = leggauss(grid)
        phis = (np.arange(grid) + 0.5) / grid
        rr, ww = _radial_nodes(profile, radius, order=grid // max(1, len(profile.kinks) + 1))
        R, PH = np.meshgrid(rr, phis, indexing="ij")
        Wt = (ww * rr)[:, None] * (2 * np.pi / grid)
        z = R * np.exp(2j * np.pi * PH)
        fz = z * np.exp(2j * np.pi * (scale * profile.turns(R) - shift))
        kappa_term = float(np.sum(Wt * (kappa_shift(fz.real, fz.imag) - kappa_shift(z.real, z.imag))))
        cal += kappa_term
    rot = float(scale * profile.turns(np.array(radius)) - shift)
    area = float(np.pi * radius**2)
    return ActionResult(cal=cal, rot=rot, area=area, cal_tilde=cal + area**2 * rot, kappa_term=kappa_term)


def calabi_action_oracle(profile: Profile, radius: float = 1.0, scale: float = 1.0, shift: float = 0.0):
    """Cal = -pi^2 int_0^R s^4 Omega'(s)/(2 pi) ds by direct quadrature (independent route)."""
    nodes, weights = _radial_nodes(profile, radius)
    return float(-np.pi**2 * scale * np.sum(weights * nodes**4 * profile.slope(nodes)))


# --------------------------------------------------------------------------
# linking cocycle


def calabi_link(isotopy: IsotopyPath, measure: QuadratureMeasure, chart: FoliationChart | None = None,
                phi: float = 0.0, budget: float = 1e-3, **track_kw) -> CalabiEstimate:
    """Monte Carlo integral of lambda + displacement over pairs."""
    t0 = time.perf_counter()
    chart = EuclideanChart() if chart is None else chart
    z1, z2 = measure.pairs()
    res = track_pairs(IsotopyPairPath(chart, isotopy, z1, z2), measure.n, **track_kw)
    if res.unresolved > budget * measure.n:
        raise RuntimeError(f"{res.unresolved} unresolved pairs exceed the rejection budget")
    m = displacement_m(lambda e, r: isotopy.lift(isotopy.s_max, e, r), chart, phi, *z1)
    vals = res.lam + m
    v, e = _mc(vals, measure.mass**2)
    lam_v, lam_e = _mc(res.lam, measure.mass**2)
    m_v = float(np.mean(m) * measure.mass)
    return CalabiEstimate("link", v, e, measure.n, measure.seed, time.perf_counter() - t0,
                          extra={"lambda_integral": lam_v, "lambda_error": lam_e, "m_integral": m_v,
                                 "unresolved": int(res.unresolved)})


def concordance(estimates, oracle: float | None = None):
    """Pairwise agreement of estimates within combined error bars (bars are already 3 sigma)."""
    ok = True
    rows = []
    for i in range(len(estimates)):
        for j in range(i + 1, len(estimates)):
            a, b = estimates[i], estimates[j]
            gap = abs(a.value - b.value)
            allowed = np.hypot(a.error, b.error) + 1e-9
            rows.append((a.estimator, b.estimator, gap, allowed))
            ok &= gap <= allowed
    if oracle is not None:
        for a in estimates:
            ok &= abs(a.value - oracle) <= a.error + 1e-9
    return bool(ok), rows


# --------------------------------------------------------------------------
# bounds along a convergent


@dataclass
class BoundReport:
    a: int
    b: int
    m: int
    alpha: float
    A: float
    C: float
    link: CalabiEstimate
    display_lhs: float          # |link - (a/b) A^2 - A C / b|
    display_signed: float       # |link - (a/b) A^2 + A C / b|
    display_bound: float        # 8 m A C
    tau_mass: float | None = None
    tau_mass_error: float | None = None
    tau_integral: float | None = None
    tau_integral_error: float | None = None
    tau_pairs: int = 0
    unresolved: int = 0

    @property
    def mass_bound(self) -> float:
        return 2 * self.A * self.C

    @property
    def integral_bound(self) -> float:
        return 8 * self.m * self.b * self.A * self.C

    @property
    def display_ok(self) -> bool:
        return self.display_lhs <= self.display_bound

    @property
    def bounds_ok(self) -> bool:
        ok = self.display_ok
        if self.tau_mass is not None:
            ok &= self.tau_mass <= self.mass_bound + self.tau_mass_error
            ok &= self.tau_integral <= self.integral_bound + self.tau_integral_error
        return bool(ok)

    def to_json(self) -> dict:
        out = asdict(self)
        out.update(mass_bound=self.mass_bound, integral_bound=self.integral_bound,
                   display_ok=self.display_ok, bounds_ok=self.bounds_ok)
        return out


def bound_experiment(chain, b: int, a: int, measure: QuadratureMeasure, disk=None,
                     n_tau: int = 4000, seed: int = 0) -> BoundReport:
    """Link estimate on D_{a/b} with the closing display, and, given the
    sampled invariant disk, Monte Carlo estimates of the mass where the
    total variation of theta between F_1 and f^-b(F_1) is nonzero and of
    its integral."""
    from .actionflow.space import a_ab, c_ab
    from .foliation import ChartFamilyPath, ImageChart
    from .maps import twist_isotopy

    profile = chain.profile()
    alpha = float(profile.turns(np.array(0.0)))
    R = 1.0 + a / b - alpha
    if abs(measure.radius - R) > 1e-12:
        raise ValueError(f"measure radius {measure.radius} is not the radius {R} of D_(a/b)")
    A, C = a_ab(alpha, a, b), c_ab(alpha, a, b)
    link = calabi_link(twist_isotopy(profile), measure)
    lhs = abs(link.value - (a / b) * A**2 - A * C / b)
    signed = abs(link.value - (a / b) * A**2 + A * C / b)
    rep = BoundReport(a=a, b=b, m=chain.m, alpha=alpha, A=A, C=C, link=link, display_lhs=float(lhs),
                      display_signed=float(signed), display_bound=8 * chain.m * A * C)
    if disk is None:
        return rep
    F1 = disk.projection_chart(1, 0.0)
    g = twist_isotopy(profile, scale=b, shift=a, r_max=R)
    sub = QuadratureMeasure(radius=R, n=n_tau, seed=seed)
    z1, z2 = sub.pairs()
    path = ChartFamilyPath(lambda s: ImageChart(F1, lambda e, r, _s=s: g.lift(_s, e, r)), z1, z2,
                           s_max=1.0, eps=F1.eps)
    res = track_pairs(path, n_tau)
    tb = res.tau_bar.astype(float)
    mass, mass_e = _mc(tb != 0, A**2)
    integral, integral_e = _mc(tb, A**2)
    rep.tau_mass, rep.tau_mass_error = float(mass), float(mass_e)
    rep.tau_integral, rep.tau_integral_error = float(integral), float(integral_e)
    rep.tau_pairs, rep.unresolved = n_tau, int(res.unresolved)
    return rep
