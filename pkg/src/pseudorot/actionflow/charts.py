"""Foliation charts and maps read off the sampled invariant disk.

Each projection q_i^s sends the mesh nodes (line psi, level u) to planar
points.  In cover coordinates (lifted angle, log radius) the node grid is
split into triangles; a point is located by walking through the grid and
all quantities are interpolated linearly there.  Because every projection
shares the same grid, maps between projections are piecewise affine in
cover coordinates and compose exactly.

Below the lowest level the disk is flat to rounding (the field is linear
there), and the projections are inverted with their 2x2 linear part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..foliation import EPS_LEAF, FoliationChart
from .space import DomainError


class MeshResolutionError(RuntimeError):
    """The mesh is too coarse to invert a projection."""


def _wrap(x):
    return x - np.round(x)


@dataclass(eq=False)
class MeshChart(FoliationChart):
    """Chart of the projected gradient-line foliation for one projection.

    leaf = psi of the gradient line (lifted), along = action level u.
    """

    X: np.ndarray        # (n+1, K+1) lifted node angles, X[n] = X[0] + 1
    Y: np.ndarray        # (n+1, K+1) log node radii
    psi: np.ndarray      # (n+1,) node leaf labels, psi[n] = psi[0] + 1
    levels: np.ndarray   # (K+1,)
    B: np.ndarray        # (2, 2) slow-plane coordinates -> planar point
    core_radius: float
    offset: float        # lifted boundary angle minus leaf label
    index: int = 1
    s: float = 0.0
    eps: float = EPS_LEAF
    source: str = "gradient-lines"

    @classmethod
    def from_disk(cls, disk, i: int, s: float = 0.0) -> "MeshChart":
        w = disk.projection_points(i, s)
        n, K1 = w.shape
        N = disk.space.N
        # boundary normalization: projection i of a singular state sits a(i-1)/N turns after projection 1
        top1 = disk.projection_points(1, 0.0)[0, -1]
        c1 = _wrap(np.angle(top1) / (2 * np.pi))
        offset = c1 + disk.a * (i - 1) / N
        ang = np.angle(w) / (2 * np.pi)
        X = np.empty((n, K1))
        X[:, -1] = np.unwrap(ang[:, -1], period=1.0)
        X[:, -1] += np.round(offset + disk.psi[0] - X[0, -1])
        # continue each line downward from the boundary
        for k in range(K1 - 2, -1, -1):
            X[:, k] = X[:, k + 1] + _wrap(ang[:, k] - X[:, k + 1])
        if np.abs(_wrap(np.diff(X, axis=0))).max() > 0.25 or np.abs(np.diff(X, axis=0)).max() > 0.25:
            raise MeshResolutionError("node angles jump between neighbouring lines")
        Y = np.log(np.abs(w))
        Xe = np.concatenate([X, X[:1] + 1.0])
        Ye = np.concatenate([Y, Y[:1]])
        psi = np.concatenate([disk.psi, disk.psi[:1] + 1.0])
        chart = cls(X=Xe, Y=Ye, psi=psi, levels=disk.levels.copy(), B=disk.core_matrix(i, s),
                    core_radius=float(np.mean(disk.core_radius)), offset=float(offset), index=i, s=s)
        folded = chart.folded_cells()
        if folded:
            raise MeshResolutionError(f"{folded} mesh triangles are folded in projection ({i}, {s})")
        return chart

    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.X.shape[0] - 1

    @property
    def K(self) -> int:
        return self.X.shape[1] - 1

    @property
    def boundary_radius(self) -> float:
        return float(np.exp(self.Y[:, -1].mean()))

    def folded_cells(self) -> int:
        X, Y = self.X, self.Y
        bad = 0
        for t in (0, 1):
            ax, ay = X[:-1, :-1], Y[:-1, :-1]
            bx, by = X[1:, t:self.K + t], Y[1:, t:self.K + t]
            cx, cy = X[1 - t:self.n + 1 - t, 1:], Y[1 - t:self.n + 1 - t, 1:]
            area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            bad += int(np.sum(area <= 0))
        return bad

    def _tree(self):
        if not hasattr(self, "_kd"):
            w = np.exp(self.Y[:-1]) * np.exp(2j * np.pi * self.X[:-1])
            pts = np.column_stack([w.real.ravel(), w.imag.ravel()])
            object.__setattr__(self, "_kd", cKDTree(pts))
        return self._kd

    def _ring0(self, x):
        """Lifted log radius of the lowest ring at lifted angle x."""
        X0, Y0 = self.X[:, 0], self.Y[:, 0]
        base = X0[0]
        xr = base + np.mod(x - base, 1.0)
        return np.interp(xr, X0, Y0)

    # ------------------------------------------------------------------
    def locate(self, ell, rho, max_steps: int | None = None):
        """Triangle and barycentric weights of cover points.

        Returns (p, k, t, wrap, lam, core) with lam of shape (P, 3); core marks
        points below the lowest level, for which the other outputs are unused.
        """
        ell = np.atleast_1d(np.asarray(ell, dtype=float)).ravel()
        rho = np.atleast_1d(np.asarray(rho, dtype=float)).ravel()
        P = len(ell)
        Rb = self.boundary_radius
        if np.any(rho > Rb * (1 + 1e-9)):
            raise DomainError("point outside the projected disk")
        y = np.log(np.maximum(rho, 1e-300))
        ytop = self.Y[:, -1].min()
        y = np.minimum(y, ytop - 1e-14 * max(1.0, abs(ytop)))
        core = y < self._ring0(ell)
        n, K = self.n, self.K
        p = np.zeros(P, dtype=np.int64)
        k = np.zeros(P, dtype=np.int64)
        t = np.zeros(P, dtype=np.int64)
        wrap = np.zeros(P)
        lam = np.zeros((P, 3))
        act = np.nonzero(~core)[0]
        if len(act):
            w = rho[act] * np.exp(2j * np.pi * ell[act])
            _, j = self._tree().query(np.column_stack([w.real, w.imag]))
            p0, k0 = np.divmod(j, K + 1)
            p[act] = p0
            k[act] = np.minimum(k0, K - 1)
            wrap[act] = np.round(ell[act] - self.X[p0, k0])
        max_steps = max_steps or 4 * (n + K)
        for _ in range(max_steps):
            if not len(act):
                break
            pa, ka, ta, wa = p[act], k[act], t[act], wrap[act]
            xa, ya = ell[act] - wa, y[act]
            ax, ay = self.X[pa, ka], self.Y[pa, ka]
            bx, by = self.X[pa + 1, ka + ta], self.Y[pa + 1, ka + ta]
            cx, cy = self.X[pa + 1 - ta, ka + 1], self.Y[pa + 1 - ta, ka + 1]
            det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            l1 = ((xa - ax) * (cy - ay) - (ya - ay) * (cx - ax)) / det
            l2 = ((bx - ax) * (ya - ay) - (by - ay) * (xa - ax)) / det
            L = np.column_stack([1 - l1 - l2, l1, l2])
            jm = np.argmin(L, axis=1)
            inside = L[np.arange(len(act)), jm] >= -1e-12
            lam[act[inside]] = L[inside]
            move = ~inside
            pa, ka, ta, jm = pa[move], ka[move], ta[move], jm[move]
            # neighbour across the edge opposite the most negative weight
            np_, nk, nt = pa.copy(), ka.copy(), 1 - ta
            t0, t1 = ta == 0, ta == 1
            np_[t0 & (jm == 0)] += 1
            nk[t0 & (jm == 2)] -= 1
            nk[t1 & (jm == 0)] += 1
            np_[t1 & (jm == 1)] -= 1
            idx = act[move]
            wrap_new = wrap[idx] + (np_ >= n) - (np_ < 0)
            np_ = np.mod(np_, n)
            # leaving through the bottom or the top ring: slide along the ring instead
            low, high = nk < 0, nk > K - 1
            nk = np.clip(nk, 0, K - 1)
            nt[low] = 0
            nt[high] = 1
            p[idx], k[idx], t[idx], wrap[idx] = np_, nk, nt, wrap_new
            if np.any(low | high):
                for sel in (low, high):
                    if not np.any(sel):
                        continue
                    ii = idx[sel]
                    x = ell[ii] - wrap[ii]
                    ring = self.X[:, 0 if sel is low else K]
                    col = np.searchsorted(ring, x, side="right") - 1
                    shift = np.floor_divide(col, n)
                    p[ii] = np.mod(col, n)
                    wrap[ii] += shift
            act = act[move]
        if len(act):
            raise MeshResolutionError(f"{len(act)} point(s) not located in the mesh")
        return p, k, t, wrap, lam, core

    def _interp(self, table, p, k, t, lam):
        a = table[p, k]
        b = table[p + 1, k + t]
        c = table[p + 1 - t, k + 1]
        return lam[:, 0] * a + lam[:, 1] * b + lam[:, 2] * c

    # ------------------------------------------------------------------
    def _core_leaf(self, ell, rho):
        w = rho * np.exp(2j * np.pi * ell)
        v = np.linalg.solve(self.B, np.vstack([w.real, w.imag]))
        ang = np.arctan2(v[1], v[0]) / (2 * np.pi)
        d0 = np.interp(np.mod(ang - self.psi[0], 1.0) + self.psi[0], self.psi, self.psi - self.X[:, 0])
        leaf = ang + np.round(ell + d0 - ang)
        u = self.levels[0] * (np.hypot(v[0], v[1]) / self.core_radius) ** 2
        return leaf, u, v

    def coords(self, ell, rho):
        ell = np.asarray(ell, dtype=float)
        shape = np.broadcast(ell, np.asarray(rho)).shape
        ell, rho = (np.broadcast_to(c, shape).ravel() for c in (ell, np.asarray(rho, dtype=float)))
        p, k, t, wrap, lam, core = self.locate(ell, rho)
        Psi = np.broadcast_to(self.psi[:, None], self.X.shape)
        U = np.broadcast_to(self.levels[None, :], self.X.shape)
        leaf = self._interp(Psi, p, k, t, lam) + wrap
        along = self._interp(U, p, k, t, lam)
        if np.any(core):
            leaf[core], along[core], _ = self._core_leaf(ell[core], rho[core])
        return leaf.reshape(shape), along.reshape(shape)

    def transfer(self, other: "MeshChart", ell, rho):
        """Lifted map q_other o q_self^-1 in cover coordinates."""
        ell = np.asarray(ell, dtype=float)
        shape = np.broadcast(ell, np.asarray(rho)).shape
        ell, rho = (np.broadcast_to(c, shape).ravel() for c in (ell, np.asarray(rho, dtype=float)))
        p, k, t, wrap, lam, core = self.locate(ell, rho)
        e2 = self._interp(other.X, p, k, t, lam) + wrap
        r2 = np.exp(self._interp(other.Y, p, k, t, lam))
        if np.any(core):
            leaf, _, v = self._core_leaf(ell[core], rho[core])
            w2 = other.B @ v
            a2 = np.arctan2(w2[1], w2[0]) / (2 * np.pi)
            d0 = np.interp(np.mod(leaf - other.psi[0], 1.0) + other.psi[0], other.psi,
                           other.psi - other.X[:, 0])
            e2[core] = a2 + np.round(leaf - d0 - a2)
            r2[core] = np.hypot(w2[0], w2[1])
        return e2.reshape(shape), r2.reshape(shape)

    def node_points(self):
        """Cover coordinates of the nodes (without the duplicated column)."""
        return self.X[:-1], np.exp(self.Y[:-1])
