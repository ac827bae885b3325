"""The space of broken geodesics, its gradient field and discrete action.

A state is an array of shape (..., N, 2) with N = m b; entry s holds the
planar point (x_s, y_s) at site s, read N-periodically.  Site s uses the
factor f_{s mod m} (0-based into ``chain.factors``), which maps Q_s to
Q'_{s+1}.  Leading axes batch independent states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..genfun import FactorChain, PolarFactor, generating_value, solve_untwisted
from ..integrate import Trajectory, integrate

ZERO_TOL = 1e-12


class DomainError(ValueError):
    """A state outside the open set where the linking form is defined."""


@dataclass(frozen=True, eq=False)
class ActionSpace:
    chain: FactorChain
    b: int

    def __post_init__(self):
        if self.b < 1:
            raise ValueError("b must be positive")

    @property
    def m(self) -> int:
        return self.chain.m

    @property
    def N(self) -> int:
        return self.chain.m * self.b

    @property
    def dim(self) -> int:
        return 2 * self.N

    @property
    def lipschitz_bound(self) -> float:
        K = self.chain.K
        return float(np.sqrt(6 * K * K + 3))

    @cached_property
    def _groups(self):
        """(factor, site indices) for each distinct factor object."""
        groups = []
        for s in range(self.N):
            f = self.chain.factors[s % self.m]
            for g in groups:
                if g[0] is f:
                    g[1].append(s)
                    break
            else:
                groups.append((f, [s]))
        return [(f, np.array(idx)) for f, idx in groups]

    # ------------------------------------------------------------------
    # implicit solves

    def solve(self, z):
        """Per-site solves at (X, y) = (x_{s+1}, y_s).

        Returns (xstar, Ystar) of shape (..., N): xstar_s = g_s(x_{s+1}, y_s)
        and Ystar_s = g'_s(x_{s+1}, y_s).
        """
        z = np.asarray(z, dtype=float)
        X = np.roll(z[..., 0], -1, axis=-1)
        y = z[..., 1]
        xs = np.empty_like(X)
        Ys = np.empty_like(X)
        for f, idx in self._groups:
            if len(idx) == self.N:
                xs, Ys = solve_untwisted(f, X, y)
                break
            xs[..., idx], Ys[..., idx] = solve_untwisted(f, X[..., idx], y[..., idx])
        return xs, Ys

    def zeta(self, z):
        """The vector field: site s gets (y_s - Y*_{s-1}, x_s - x*_s)."""
        z = np.asarray(z, dtype=float)
        xs, Ys = self.solve(z)
        out = np.empty_like(z)
        out[..., 0] = z[..., 1] - np.roll(Ys, 1, axis=-1)
        out[..., 1] = z[..., 0] - xs
        return out

    def action(self, z):
        """The discrete action sum_s x_s y_s - h_s(x_{s+1}, y_s)."""
        z = np.asarray(z, dtype=float)
        x, y = z[..., 0], z[..., 1]
        X = np.roll(x, -1, axis=-1)
        xs, Ys = self.solve(z)
        hv = np.empty_like(x)
        for f, idx in self._groups:
            sl = (Ellipsis, idx)
            if isinstance(f, PolarFactor):
                hv[sl] = f.h_from_solution(xs[sl], y[sl], X[sl], Ys[sl])
            else:
                gv = np.vectorize(lambda Xv, yv: generating_value(f, Xv, yv))
                hv[sl] = gv(X[sl], y[sl])
        return np.sum(x * y - hv, axis=-1)

    def projections(self, z):
        """All projections at once: arrays Q, P, Q' of shape (..., N, 2).

        Q_s = (x*_s, y_s), P_s = (x_s, y_s), Q'_s = (x_s, Y*_{s-1}).
        """
        z = np.asarray(z, dtype=float)
        xs, Ys = self.solve(z)
        Q = np.stack([xs, z[..., 1]], axis=-1)
        Qp = np.stack([z[..., 0], np.roll(Ys, 1, axis=-1)], axis=-1)
        return Q, z.copy(), Qp

    def projection(self, z, i: int):
        """(Q_i, P_i, Q'_i) for a 1-based index i, read N-periodically."""
        Q, P, Qp = self.projections(z)
        s = (i - 1) % self.N
        return Q[..., s, :], P[..., s, :], Qp[..., s, :]

    def shift(self, z, k: int = 1):
        """(S^k z)_s = z_{s+k}; the shift by m sites commutes with the field."""
        return np.roll(np.asarray(z), -k, axis=-2)

    def phi(self, z):
        return self.shift(z, self.m)

    # ------------------------------------------------------------------
    # states built from orbits

    def orbit_state(self, w):
        """State whose P-projections are the chain orbit of the planar point(s) w.

        If w is a fixed point of f^b the state is singular.  ``w`` may be a
        complex array; the result has shape w.shape + (N, 2).
        """
        w = np.asarray(w, dtype=complex)
        x, y = w.real.copy(), w.imag.copy()
        out = np.empty(w.shape + (self.N, 2))
        for s in range(self.N):
            out[..., s, 0] = x
            out[..., s, 1] = y
            x, y = self.chain.factors[s % self.m].forward(x, y)
        return out

    def random_states(self, n: int, scale: float = 1.0, rng=None):
        rng = np.random.default_rng(rng)
        return scale * rng.standard_normal((n, self.N, 2))

    # ------------------------------------------------------------------
    # flow

    def flow(self, z0, t_end: float, tol: float = 1e-9, record: bool = True, max_step: float = np.inf,
             callback=None) -> "FlowTrajectory":
        z0 = np.asarray(z0, dtype=float)
        traj = integrate(lambda t, z: self.zeta(z), 0.0, z0, t_end, tol=tol, record=record,
                         max_step=max_step, callback=callback)
        return FlowTrajectory(t=traj.t, states=traj.y, steps=np.array(traj.steps), rejected=traj.rejected)


@dataclass
class FlowTrajectory:
    t: np.ndarray
    states: np.ndarray
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rejected: int = 0

    @property
    def final(self):
        return self.states[-1]

    def to_csv(self, path):
        """One row per sample: t followed by x_1, y_1, ..., x_N, y_N (batch axes flattened)."""
        flat = self.states.reshape(len(self.t), -1)
        data = np.column_stack([self.t, flat])
        header = "t," + ",".join(f"c{k}" for k in range(flat.shape[1]))
        np.savetxt(path, data, delimiter=",", header=header, comments="")


# ----------------------------------------------------------------------
# functional interface


def zeta(chain: FactorChain, b: int, z):
    return ActionSpace(chain, b).zeta(z)


def action_h(chain: FactorChain, b: int, z):
    return ActionSpace(chain, b).action(z)


def flow(chain: FactorChain, b: int, z0, t_end: float, tol: float = 1e-9) -> FlowTrajectory:
    return ActionSpace(chain, b).flow(z0, t_end, tol)


def projections(chain: FactorChain, b: int, z, i: int):
    return ActionSpace(chain, b).projection(z, i)


def lipschitz_certificate(chain: FactorChain, b: int, z, zp) -> float:
    """Largest observed ratio |zeta(z) - zeta(z')| / |z - z'| over paired batches."""
    space = ActionSpace(chain, b)
    z = np.asarray(z, dtype=float)
    zp = np.asarray(zp, dtype=float)
    dz = np.sqrt(np.sum((z - zp) ** 2, axis=(-2, -1)))
    dzeta = np.sqrt(np.sum((space.zeta(z) - space.zeta(zp)) ** 2, axis=(-2, -1)))
    return float(np.max(dzeta / dz))


def finite_difference_gradient(space: ActionSpace, z, step: float = 1e-5):
    """Central differences of the action, one coordinate at a time (batched)."""
    z = np.asarray(z, dtype=float)
    grad = np.empty_like(z)
    for s in range(space.N):
        for c in range(2):
            e = np.zeros_like(z)
            e[..., s, c] = step
            grad[..., s, c] = (space.action(z + e) - space.action(z - e)) / (2 * step)
    return grad


# ----------------------------------------------------------------------
# linking form


def _signs(v):
    s = np.sign(v)
    s[np.abs(v) < ZERO_TOL] = 0.0
    return s


def in_V_prime(z):
    """Mask of states where every vanishing coordinate satisfies the sign rule.

    x_s = 0 needs y_{s-1} y_s > 0 and y_s = 0 needs x_s x_{s+1} > 0.
    """
    z = np.asarray(z, dtype=float)
    sx, sy = _signs(z[..., 0]), _signs(z[..., 1])
    ok_x = (sx != 0) | (np.roll(sy, 1, axis=-1) * sy > 0)
    ok_y = (sy != 0) | (sx * np.roll(sx, -1, axis=-1) > 0)
    return np.all(ok_x & ok_y, axis=-1)


def linking_form_L(z, strict: bool = True):
    """L(z) = 1/4 sum_s sign(x_s) (sign(y_s) - sign(y_{s-1})).

    Raises DomainError outside V' when ``strict``; otherwise those entries
    come back as NaN.
    """
    z = np.asarray(z, dtype=float)
    sx, sy = _signs(z[..., 0]), _signs(z[..., 1])
    val = 0.25 * np.sum(sx * (sy - np.roll(sy, 1, axis=-1)), axis=-1)
    ok = in_V_prime(z)
    if strict:
        if not np.all(ok):
            raise DomainError(f"{np.size(ok) - np.count_nonzero(ok)} state(s) outside V'")
        return val
    return np.where(ok, val, np.nan)


# ----------------------------------------------------------------------
# singular circles and closed forms


def _check_ratio(alpha, a, b, beta=None):
    if b <= 0:
        raise ValueError("b must be positive")
    p = a / b
    if p <= alpha or (beta is not None and p >= beta):
        raise ValueError(f"a/b = {p} outside ({alpha}, {beta})")
    return p


def c_ab(alpha: float, a: int, b: int, beta: float | None = None) -> float:
    """Action of the nontrivial orbits in the invariant disk above the origin."""
    if b <= 0:
        raise ValueError("b must be positive")
    d = a / b - alpha
    if d < 0 or (beta is not None and a / b >= beta):
        raise ValueError(f"a/b = {a / b} outside [{alpha}, {beta})")
    return np.pi * (a - b * alpha) * (1 + d + d * d / 3)


def a_ab(alpha: float, a: int, b: int, beta: float | None = None) -> float:
    """Area of the disk bounded by the circle of rotation number a/b."""
    if b <= 0:
        raise ValueError("b must be positive")
    d = a / b - alpha
    if d < 0 or (beta is not None and a / b >= beta):
        raise ValueError(f"a/b = {a / b} outside [{alpha}, {beta})")
    return np.pi * (1 + d) ** 2


@dataclass
class SingularCircle:
    a: int
    radius: float
    states: np.ndarray  # (n, N, 2)
    residual: float


def periodic_numerators(b: int, alpha: float, beta: float):
    lo, hi = b * alpha, b * beta
    return [a for a in range(int(np.floor(lo)) + 1, int(np.ceil(hi))) if lo < a < hi]


def singular_circles(chain: FactorChain, b: int, alpha: float, beta: float, n_points: int = 16,
                     tol: float = 1e-9):
    """The circles of singular states over the periodic circles of rotation a/b.

    Each state is the chain orbit of a point on the circle of radius
    1 + a/b - alpha; its field residual is checked against ``tol``.
    """
    space = ActionSpace(chain, b)
    numerators = periodic_numerators(b, alpha, beta)
    if not numerators:
        raise ValueError(f"no integer in ({b * alpha}, {b * beta}); no periodic circle at b = {b}")
    out = []
    angles = np.arange(n_points) / n_points
    for a in numerators:
        radius = 1.0 + a / b - alpha
        states = space.orbit_state(radius * np.exp(2j * np.pi * angles))
        res = float(np.max(np.abs(space.zeta(states))))
        if res > tol:
            raise RuntimeError(f"singular circle a = {a}: residual {res:.3g} above {tol:.1g}")
        out.append(SingularCircle(a=a, radius=radius, states=states, residual=res))
    return out
