"""Gradient lines of the invariant disk as heteroclinic connections.

Every nontrivial orbit of the invariant disk leaves the origin tangent to
the slow eigenplane of the linearization (the eigenvalue group on which the
linking form equals a) and converges to the singular circle.  The disk is a
slow manifold, so plain forward integration drifts off it.  Each orbit is
instead found by multiple shooting: the start lies in the unstable subspace
of the origin (the field is exactly linear near 0), and the end lies on the
linearized stable manifold of the singular circle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..integrate import dp_step
from .space import ActionSpace, linking_form_L


class ConvergenceError(RuntimeError):
    """Newton iteration for a gradient line did not converge."""


def jacobian(space: ActionSpace, z, eps: float = 1e-7):
    """Symmetrized central-difference Jacobian of the field (it is a Hessian)."""
    n = space.dim
    I = np.eye(n).reshape(n, space.N, 2) * eps
    F = space.zeta(np.concatenate([z + I, z - I])).reshape(2, n, n)
    J = ((F[0] - F[1]) / (2 * eps)).T
    return 0.5 * (J + J.T)


def eigen_groups(w, tol: float = 1e-8):
    """Index ranges of (sorted) eigenvalues equal within tol."""
    groups, i = [], 0
    while i < len(w):
        j = i
        while j + 1 < len(w) and abs(w[j + 1] - w[i]) < tol:
            j += 1
        groups.append((i, j + 1))
        i = j + 1
    return groups


@dataclass
class Linearization:
    values: np.ndarray
    vectors: np.ndarray
    slow: np.ndarray          # (2N, 2) orthonormal basis of the slow plane
    slow_value: float
    unstable: np.ndarray      # (2N, d) other unstable eigenvectors
    unstable_values: np.ndarray


def linearize_origin(space: ActionSpace, a: int, seed: int = 0) -> Linearization:
    """Eigen-decomposition at 0 and the eigenplane on which L = a."""
    z0 = np.zeros((space.N, 2))
    w, V = np.linalg.eigh(jacobian(space, z0, eps=1e-4))
    rng = np.random.default_rng(seed)
    pick = None
    for lo, hi in eigen_groups(w):
        v = V[:, lo:hi] @ rng.standard_normal(hi - lo)
        L = linking_form_L(v.reshape(space.N, 2), strict=False)
        if L == a:
            if hi - lo != 2:
                raise ValueError(f"eigenvalue group with L = {a} has dimension {hi - lo}")
            pick = (lo, hi)
    if pick is None:
        raise ValueError(f"no eigenplane with L = {a}")
    lo, hi = pick
    if w[lo] <= 0:
        raise ValueError(f"eigenplane with L = {a} is not unstable (eigenvalue {w[lo]:.3g})")
    E = V[:, lo:hi].copy()
    # orient so the P_1 angle increases with the plane angle
    p = E.reshape(space.N, 2, 2)[0]          # rows x1, y1; columns e1, e2
    if np.linalg.det(p) < 0:
        E[:, 1] *= -1
    mask = (w > 1e-9)
    mask[lo:hi] = False
    return Linearization(values=w, vectors=V, slow=E, slow_value=float(w[lo]),
                         unstable=V[:, mask], unstable_values=w[mask])


def max_projection(space: ActionSpace, z):
    Q, P, Qp = space.projections(z)
    return float(max(np.abs(np.hypot(*np.moveaxis(A, -1, 0))).max() for A in (Q, P, Qp)))


@dataclass
class GradientLine:
    """One orbit of the invariant disk, as shooting nodes with the exact
    linear tail near the origin."""

    psi: float
    coeffs: np.ndarray        # unstable-mode coefficients at the start (slow pair first)
    nodes: np.ndarray         # (M, N, 2) states at times 0, dt, ..., (M-1) dt
    dt: float
    theta_end: float
    end_distance: float
    residual: float


class HeteroclinicSolver:
    """Multiple-shooting solver for the gradient lines from 0 to the singular circle."""

    def __init__(self, space: ActionSpace, a: int, radius: float, T: float = 18.0, segments: int = 12,
                 start_size: float = 0.8, step: float = 0.02):
        self.space = space
        self.a = a
        self.radius = radius
        self.T = T
        self.M = segments
        self.dt = T / segments
        self.substeps = max(1, int(np.ceil(self.dt / step)))
        self.lin = linearize_origin(space, a)
        N = space.N
        psis = np.linspace(0, 1, 64, endpoint=False)
        worst = max(max_projection(space, self._plane(p).reshape(N, 2)) for p in psis)
        self.r0 = start_size / worst
        self._ref_basis = None
        self._J = None
        self.end_tol = 0.02

    # -- geometry -------------------------------------------------------
    def _plane(self, psi):
        E = self.lin.slow
        return np.cos(2 * np.pi * psi) * E[:, 0] + np.sin(2 * np.pi * psi) * E[:, 1]

    def start(self, psi, c):
        z = self.r0 * self._plane(psi) + self.lin.unstable @ c
        return z.reshape(self.space.N, 2)

    def sigma(self, theta):
        return self.space.orbit_state(self.radius * np.exp(2j * np.pi * np.asarray(theta)))

    def nearest_theta(self, z, guess=None):
        if guess is None:
            guess = np.angle(z[0, 0] + 1j * z[0, 1]) / (2 * np.pi)
        res = minimize_scalar(lambda t: np.sum((z - self.sigma(t)) ** 2),
                              bracket=(guess - 0.01, guess + 0.01), tol=1e-12)
        return float(res.x)

    def _tangent(self, th, h=1e-6):
        d = (self.sigma(th + h) - self.sigma(th - h)).ravel() / (2 * h)
        return d / np.linalg.norm(d)

    def _unstable_end(self, th):
        J = jacobian(self.space, self.sigma(th), eps=1e-5)
        mu, W = np.linalg.eigh(J)
        Wu = W[:, mu > 1e-6]
        if self._ref_basis is None or self._ref_basis.shape[1] != Wu.shape[1]:
            self._ref_basis = Wu
        B = Wu @ (Wu.T @ self._ref_basis)
        q, _ = np.linalg.qr(B)
        return q * np.sign(np.sum(q * B, axis=0))

    def _end_res(self, zT, th):
        dz = (zT - self.sigma(th)).ravel()
        Wu = self._unstable_end(th)
        return np.concatenate([Wu.T @ dz, [self._tangent(th) @ dz]])

    # -- shooting -------------------------------------------------------
    def _phi(self, Z):
        # fixed steps keep the flow map smooth in its argument, so Newton
        # is not limited by step-size selection noise
        h = self.dt / self.substeps
        fun = lambda t, z: self.space.zeta(z)
        k1 = None
        for _ in range(self.substeps):
            Z, _, k1 = dp_step(fun, 0.0, Z, h, k1)
        return Z

    def _unpack(self, x):
        nc = self.lin.unstable.shape[1]
        n = self.space.dim
        c = x[:nc]
        Z = x[nc:nc + (self.M - 1) * n].reshape(self.M - 1, self.space.N, 2)
        return c, Z, x[-1]

    def _residual(self, psi, x, want_jac=False, h=1e-7):
        c, Z, th = self._unpack(x)
        n = self.space.dim
        nc = len(c)
        z0 = self.start(psi, c)
        if not want_jac:
            out = self._phi(np.concatenate([z0[None], Z]))
            parts = [out[k] - Z[k] for k in range(self.M - 1)] + [self._end_res(out[-1], th)]
            return np.concatenate([p.ravel() for p in parts])
        U = self.lin.unstable.T.reshape(nc, self.space.N, 2) * h
        I = np.eye(n).reshape(n, self.space.N, 2) * h
        big = [np.concatenate([z0[None], z0[None] + U])]
        for k in range(self.M - 1):
            big.append(np.concatenate([Z[k][None], Z[k][None] + I]))
        sizes = [len(b) for b in big]
        out = np.split(self._phi(np.concatenate(big)), np.cumsum(sizes)[:-1])
        D = [(p[1:] - p[0]).reshape(len(p) - 1, -1).T / h for p in out]
        ends = [p[0] for p in out]
        r_end = self._end_res(ends[-1], th)
        R = np.concatenate([(ends[k] - Z[k]).ravel() for k in range(self.M - 1)] + [r_end])
        Jm = np.zeros((len(R), len(x)))
        Jm[0:n, 0:nc] = D[0]
        for k in range(1, self.M - 1):
            Jm[k * n:(k + 1) * n, nc + (k - 1) * n:nc + k * n] = D[k]
        for k in range(self.M - 1):
            Jm[k * n:(k + 1) * n, nc + k * n:nc + (k + 1) * n] -= np.eye(n)
        Pe = np.vstack([self._unstable_end(th).T, self._tangent(th)[None]])
        Jm[(self.M - 1) * n:, nc + (self.M - 2) * n:nc + (self.M - 1) * n] = Pe @ D[-1]
        Jm[(self.M - 1) * n:, -1] = (self._end_res(ends[-1], th + 1e-7) - r_end) / 1e-7
        return R, Jm

    def initial_guess(self, psi):
        """Forward orbit of the pure eigenplane start, cut where the action
        peaks, then an exponential approach to the nearest singular state."""
        space = self.space
        z0 = self.start(psi, np.zeros(self.lin.unstable.shape[1]))
        tr = space.flow(z0, self.T, tol=1e-9)
        dist = np.array([np.linalg.norm(z - self.sigma(self.nearest_theta(z))) for z in tr.states])
        # stop before the drift takes over
        k = int(np.argmin(dist))
        tcut = tr.t[k]
        th0 = self.nearest_theta(tr.states[k])
        s_end = self.sigma(th0)
        nodes = []
        for j in range(1, self.M):
            t = j * self.dt
            if t <= tcut:
                i = np.searchsorted(tr.t, t)
                nodes.append(tr.states[min(i, len(tr.t) - 1)])
            else:
                nodes.append(s_end + (tr.states[k] - s_end) * np.exp(-0.7 * (t - tcut)))
        return np.concatenate([np.zeros(self.lin.unstable.shape[1]), np.array(nodes).ravel(), [th0]])

    def solve(self, psi, x0=None, max_iter: int = 30, target: float = 1e-9, jac=None, verbose=False):
        """Newton with backtracking.  A supplied Jacobian is reused (chord
        steps) until progress stalls, then refreshed."""
        x = self.initial_guess(psi) if x0 is None else np.array(x0, dtype=float)
        nr = np.inf
        fresh = jac is None
        for it in range(max_iter):
            if jac is None:
                R, jac = self._residual(psi, x, want_jac=True)
                fresh = True
            else:
                R = self._residual(psi, x)
            nr = np.linalg.norm(R)
            if nr < target:
                break
            dx = np.linalg.lstsq(jac, -R, rcond=None)[0]
            lam, nr2 = 1.0, np.inf
            while lam > 1e-4:
                try:
                    nr2 = np.linalg.norm(self._residual(psi, x + lam * dx))
                except Exception:
                    nr2 = np.inf
                if nr2 < nr:
                    break
                lam /= 2
            if verbose:
                print(f"  newton {it}: |R| {nr:.3e} -> {nr2:.3e} (step {lam:.3g}, fresh jac {fresh})", flush=True)
            if nr2 >= nr:
                if fresh:
                    raise ConvergenceError(f"no descent at |R| = {nr:.3e}")
                jac = None
                continue
            if not fresh and nr2 > 0.3 * nr:
                jac = None  # chord steps too slow; refresh
            else:
                fresh = False if jac is not None else fresh
            x = x + lam * dx
            nr = nr2
            if nr < target:
                break
        if nr >= target:
            raise ConvergenceError(f"gradient line at psi={psi}: residual {nr:.3e}")
        self._J = jac
        line = self._line(psi, x, nr)
        # the end condition only constrains unstable directions, so a horizon
        # too short for the slow eigenvalue ends far from the circle
        if line.end_distance > self.end_tol * self.radius:
            raise ConvergenceError(f"gradient line at psi={psi} ends {line.end_distance:.3g} from the singular "
                                   f"circle; horizon T={self.T} is too short for slow eigenvalue "
                                   f"{self.lin.slow_value:.3g}")
        return line, x

    def _line(self, psi, x, nr):
        c, Z, th = self._unpack(x)
        nodes = np.concatenate([self.start(psi, c)[None], Z])
        end = self._phi(Z[-1][None])[0]
        return GradientLine(psi=float(psi), coeffs=c.copy(), nodes=nodes, dt=self.dt, theta_end=float(th),
                            end_distance=float(np.linalg.norm(end - self.sigma(th))), residual=float(nr))

    def core_state(self, line: GradientLine, tau):
        """Exact state at time tau <= 0 before the first node (linear region)."""
        tau = np.asarray(tau, dtype=float)
        slow = self.r0 * np.exp(self.lin.slow_value * tau)[..., None] * self._plane(line.psi)
        fast = (np.exp(np.multiply.outer(tau, self.lin.unstable_values)) * line.coeffs) @ self.lin.unstable.T
        return (slow + fast).reshape(tau.shape + (self.space.N, 2))

    def slow_coordinates(self, z):
        """Coordinates of a state in the core eigenplane basis."""
        z = np.asarray(z, dtype=float)
        return z.reshape(z.shape[:-2] + (-1,)) @ self.lin.slow
