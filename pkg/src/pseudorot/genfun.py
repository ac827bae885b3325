"""Untwisted factors, implicit solves, generating functions and certificates.

A factor f_i is untwisted when (x, y) -> (X, y) is a homeomorphism, where
(X, Y) = f_i(x, y).  It is then described implicitly by x = g(X, y) and
Y = g'(X, y), and for an area-preserving factor these are the partial
derivatives of a generating function h(X, y).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .maps import TWO_PI, PolarMap, Profile, SumProfile


class SolveError(RuntimeError):
    """The implicit solve did not converge; the factor is not untwisted here."""


class PathIndependenceError(RuntimeError):
    """Line integrals of x dy + Y dX disagree between two paths."""


class CertificationError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# --------------------------------------------------------------------------
# Factors


class UntwistedFactor:
    """Base class.  Subclasses implement ``forward`` and may provide an
    analytic ``dXdx`` and a closed-form generating function ``h``."""

    K: float | None = None

    def forward(self, x, y):
        raise NotImplementedError

    def dXdx(self, x, y, step=1e-7):
        return (self.forward(x + step, y)[0] - self.forward(x - step, y)[0]) / (2 * step)

    def initial_guess(self, X, y):
        return np.asarray(X, dtype=float).copy()

    def newton_parts(self, x, y):
        """X(x, y) and its x-derivative."""
        return self.forward(x, y)[0], self.dXdx(x, y)

    def g(self, X, y):
        return solve_untwisted(self, X, y)[0]

    def g_prime(self, X, y):
        return solve_untwisted(self, X, y)[1]

    def h(self, X, y):
        return generating_value(self, X, y)


@dataclass(frozen=True, eq=False)
class PolarFactor(UntwistedFactor):
    """Rotation of each circle |z| = r by profile.turns(r)."""

    profile: Profile
    K: float | None = None

    def angle(self, r):
        return TWO_PI * self.profile.turns(r)

    def forward(self, x, y):
        th = self.angle(np.hypot(x, y))
        c, s = np.cos(th), np.sin(th)
        return c * x - s * y, s * x + c * y

    def backward(self, X, Y):
        th = self.angle(np.hypot(X, Y))
        c, s = np.cos(th), np.sin(th)
        return c * X + s * Y, -s * X + c * Y

    def dXdx(self, x, y, step=None):
        r = np.hypot(x, y)
        th = self.angle(r)
        dth = TWO_PI * self.profile.slope(r)
        # r * cos(phi) * sin(phi + th) written without dividing by r
        return np.cos(th) - dth * x * (x * np.sin(th) + y * np.cos(th)) / np.where(r > 0, r, 1.0)

    def newton_parts(self, x, y):
        r = np.hypot(x, y)
        th = self.angle(r)
        c, s = np.cos(th), np.sin(th)
        dth = TWO_PI * self.profile.slope(r)
        d = c - dth * x * (x * s + y * c) / np.where(r > 0, r, 1.0)
        return c * x - s * y, d

    def initial_guess(self, X, y):
        th = self.angle(np.hypot(X, y))
        c = np.cos(th)
        safe = c > 0.1
        return np.where(safe, (X + y * np.sin(th)) / np.where(safe, c, 1.0), X)

    def h(self, X, y):
        """Closed form (x y + X Y)/2 - pi * int_0^r s^2 omega'(s) ds, r = |(x, y)|.

        Its partials are g' in X and g in y, and h(0, 0) = 0.
        """
        x, Y = solve_untwisted(self, X, y)
        return self.h_from_solution(x, y, X, Y)

    def h_from_solution(self, x, y, X, Y):
        return 0.5 * (x * y + X * Y) - np.pi * self.profile.moment(np.hypot(x, y))

    def as_map(self) -> PolarMap:
        return PolarMap(self.profile)


def solve_untwisted(factor: UntwistedFactor, X, y, tol: float = 1e-12, max_iter: int = 50):
    """Return (x, Y) with f(x, y) = (X, Y).

    Newton on x -> X(x, y) - X from the factor's guess; points where it
    does not settle go to a safeguarded Newton that keeps a sign bracket and
    falls back to bisection when a step leaves it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    X, y = np.broadcast_arrays(X, y)
    shape = X.shape
    X = X.ravel()
    y = y.ravel()
    # plain Newton from the guess first: x -> X(x, y) is increasing, so any
    # point where it converges has the unique root; the rest go to the
    # bracketed iteration below
    x = np.asarray(factor.initial_guess(X, y), dtype=float).copy()
    scale = tol * np.maximum(1.0, np.abs(X))
    for _ in range(6):
        Fx, d = factor.newton_parts(x, y)
        F = Fx - X
        if np.all(np.abs(F) <= scale):
            return x.reshape(shape), factor.forward(x, y)[1].reshape(shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d > 0, F / d, 0.0)
        x = np.where(np.abs(F) <= scale, x, x - step)
    F = factor.forward(x, y)[0] - X
    good = np.abs(F) <= scale
    if good.all():
        return x.reshape(shape), factor.forward(x, y)[1].reshape(shape)
    x = x.copy()
    x[~good] = _solve_bracketed(factor, X[~good], y[~good], tol, max_iter)
    return x.reshape(shape), factor.forward(x, y)[1].reshape(shape)


def _solve_bracketed(factor: UntwistedFactor, X, y, tol: float, max_iter: int):
    K = factor.K if factor.K else 2.0
    half = 2.0 * K * (np.abs(X) + np.abs(y)) + 4.0
    lo, hi = -half, half.copy()
    for _ in range(20):
        bad = (factor.forward(lo, y)[0] > X) | (factor.forward(hi, y)[0] < X)
        if not bad.any():
            break
        lo = np.where(bad, 2 * lo, lo)
        hi = np.where(bad, 2 * hi, hi)
    x = np.clip(factor.initial_guess(X, y), lo, hi)
    scale = tol * np.maximum(1.0, np.abs(X))
    active = np.ones(X.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa, ya, Xa = x[idx], y[idx], X[idx]
        F = factor.forward(xa, ya)[0] - Xa
        done = np.abs(F) <= scale[idx]
        lo_a = np.where(F < 0, xa, lo[idx])
        hi_a = np.where(F > 0, xa, hi[idx])
        d = factor.dXdx(xa, ya)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xa - F / d
        ok = (d > 0) & (newton > lo_a) & (newton < hi_a)
        nxt = np.where(ok, newton, 0.5 * (lo_a + hi_a))
        done |= (hi_a - lo_a) <= 4e-16 * np.maximum(1.0, np.abs(xa))
        x[idx] = np.where(done, xa, nxt)
        lo[idx], hi[idx] = lo_a, hi_a
        active[idx[done]] = False
    if active.any():
        raise SolveError(f"implicit solve did not converge at {active.sum()} of {active.size} points")
    return x


# --------------------------------------------------------------------------
# Generating values by quadrature

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def _adaptive_gl(fun, a, b, tol, depth=0, max_depth=40):
    def rule(lo, hi):
        t = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
        return 0.5 * (hi - lo) * np.dot(_GL_WEIGHTS, fun(t))

    mid = 0.5 * (a + b)
    whole = rule(a, b)
    halves = rule(a, mid) + rule(mid, b)
    if abs(whole - halves) <= tol or depth >= max_depth:
        return halves
    return _adaptive_gl(fun, a, mid, tol / 2, depth + 1) + _adaptive_gl(fun, mid, b, tol / 2, depth + 1)


def generating_value(factor: UntwistedFactor, X: float, y: float, tol: float = 1e-13, check: bool = True) -> float:
    """h(X, y) as the integral of x dy + Y dX along the segment from 0.

    With ``check`` the value is compared against the L-shaped path
    (0, 0) -> (X, 0) -> (X, y).
    """
    X = float(X)
    y = float(y)

    def along_segment(t):
        x, Y = solve_untwisted(factor, t * X, t * y)
        return x * y + Y * X

    value = _adaptive_gl(along_segment, 0.0, 1.0, tol)
    if check:
        leg1 = _adaptive_gl(lambda s: solve_untwisted(factor, s, 0.0 * s)[1], 0.0, X, tol) if X else 0.0
        leg2 = _adaptive_gl(lambda s: solve_untwisted(factor, X + 0.0 * s, s)[0], 0.0, y, tol) if y else 0.0
        other = leg1 + leg2
        if abs(other - value) > 1e-8 * max(1.0, abs(value)):
            raise PathIndependenceError(f"path discrepancy {abs(other - value):.3g} at ({X}, {y})")
    return value


# --------------------------------------------------------------------------
# Certificates


@dataclass(frozen=True)
class SampleSpec:
    r_max: float = 2.0
    n_r: int = 200
    n_phi: int = 200
    step: float = 1e-6
    n_pairs: int = 20000
    seed: int = 0

    def points(self):
        r = self.r_max * (np.arange(1, self.n_r + 1) / self.n_r)
        phi = TWO_PI * (np.arange(self.n_phi) + 0.5) / self.n_phi
        z = (r[:, None] * np.exp(1j * phi[None, :])).ravel()
        return z.real, z.imag


@dataclass
class CertificateReport:
    K: float
    entries: list = field(default_factory=list)
    min_dXdx: float = float("nan")
    passed: bool = False
    note: str = "empirical: sampled difference quotients on a polar grid, not a proof"

    def add(self, name, ratio, samples):
        self.entries.append((name, float(ratio), int(samples)))

    @property
    def max_ratio(self) -> float:
        return max(r for _, r, _ in self.entries)

    def to_text(self) -> str:
        lines = [f"K = {self.K:.12g}", f"passed = {self.passed}", f"min dX/dx = {self.min_dXdx:.12g}"]
        lines += [f"{name}: max_ratio = {r:.12g}, samples = {n}" for name, r, n in self.entries]
        lines.append(f"note: {self.note}")
        return "\n".join(lines) + "\n"


def verify_untwisted_lipschitz(factor: UntwistedFactor, K: float, spec: SampleSpec | None = None,
                               slack: float = 1e-9) -> CertificateReport:
    """Sample the four untwisted/Lipschitz conditions and compare with K."""
    spec = spec or SampleSpec()
    report = CertificateReport(K=K)
    x, y = spec.points()
    n = x.size
    hstep = spec.step

    slope = (factor.forward(x + hstep, y)[0] - factor.forward(x, y)[0]) / hstep
    report.min_dXdx = float(slope.min())
    untwisted = report.min_dXdx > 0

    # f bi-Lipschitz: local quotients in four directions plus random pairs
    X0, Y0 = factor.forward(x, y)
    ratios = []
    for ang in np.arange(4) * np.pi / 4:
        dx, dy = np.cos(ang) * hstep, np.sin(ang) * hstep
        X1, Y1 = factor.forward(x + dx, y + dy)
        ratios.append(np.hypot(X1 - X0, Y1 - Y0) / hstep)
    rng = np.random.default_rng(spec.seed)
    i, j = rng.integers(0, n, size=(2, spec.n_pairs))
    keep = i != j
    i, j = i[keep], j[keep]
    ratios.append(np.hypot(X0[i] - X0[j], Y0[i] - Y0[j]) / np.hypot(x[i] - x[j], y[i] - y[j]))
    q = np.concatenate(ratios)
    report.add("f bi-Lipschitz", max(q.max(), (1.0 / q).max()), q.size)

    if not untwisted:
        report.passed = False
        return report

    # implicit maps on the (X, y) grid
    try:
        g0, gp0 = solve_untwisted(factor, x, y)
        gX, gpX = solve_untwisted(factor, x + hstep, y)
        gy, gpy = solve_untwisted(factor, x, y + hstep)
    except SolveError:
        report.passed = False
        return report
    q1 = np.abs(gX - g0) / hstep
    q2 = np.abs(gpy - gp0) / hstep
    q3 = np.abs(gy - g0) / hstep
    q4 = np.abs(gpX - gp0) / hstep
    report.add("X -> g bi-Lipschitz", max(q1.max(), (1.0 / q1).max()), n)
    report.add("y -> g' bi-Lipschitz", max(q2.max(), (1.0 / q2).max()), n)
    report.add("y -> g Lipschitz", q3.max(), n)
    report.add("X -> g' Lipschitz", q4.max(), n)
    report.passed = bool(untwisted and report.max_ratio <= K + slack)
    return report


# --------------------------------------------------------------------------
# Chains


@dataclass(frozen=True, eq=False)
class FactorChain:
    """m-periodic sequence of untwisted factors f_1, ..., f_m."""

    factors: tuple
    K: float

    @property
    def m(self) -> int:
        return len(self.factors)

    def factor(self, i: int) -> UntwistedFactor:
        """The factor f_i, 1-based and read m-periodically."""
        return self.factors[(i - 1) % self.m]

    @property
    def uniform(self) -> bool:
        return all(f is self.factors[0] or f == self.factors[0] for f in self.factors)

    @property
    def polar(self) -> bool:
        return all(isinstance(f, PolarFactor) for f in self.factors)

    def profile(self) -> Profile:
        """Total rotation profile of f_m o ... o f_1 (polar chains only)."""
        if not self.polar:
            raise TypeError("chain has non-polar factors")
        return SumProfile(tuple(f.profile for f in self.factors))

    def compose(self, x, y, start: int = 1, count: int | None = None):
        """Apply f_{start + count - 1} o ... o f_start."""
        count = self.m if count is None else count
        for k in range(count):
            x, y = self.factor(start + k).forward(x, y)
        return x, y


def factor_polar(target: PolarMap, m: int, K_target: float = 3.5, spec: SampleSpec | None = None,
                 perturbations: tuple = ()) -> FactorChain:
    """Split a polar map into m equal polar factors and certify them.

    Closed-form perturbation factors are appended after the m copies, so the
    chain composes to perturbations o target.
    """
    if m < 1:
        raise ValueError("m must be positive")
    base = PolarFactor(target.profile.scaled(1.0 / m), K=K_target)
    factors = (base,) * m + tuple(perturbations)
    if spec is None:
        kinks = target.profile.kinks
        spec = SampleSpec(r_max=max(2.0, 1.5 * max(kinks, default=1.0)))
    seen = []
    for f in factors:
        if any(f is s for s in seen):
            continue
        seen.append(f)
        report = verify_untwisted_lipschitz(f, K_target, spec)
        if not report.passed:
            raise CertificationError(
                f"factor not certified untwisted {K_target}-Lipschitz (max ratio {report.max_ratio:.4g}, "
                f"min dX/dx {report.min_dXdx:.4g}); increase m", report)
    return FactorChain(factors=factors, K=K_target)
