"""The finite-order map and the good isotopy built on the invariant disk.

With q_i the projections of the disk (all sharing one mesh):

* f_hat_i = q_{i+1} o q_i^-1, and f_hat = q_{m+1} o q_1^-1 has order b;
* the isotopy s -> f_check_s, s in [0, 2mb], runs through
  f_mb o ... o f_{mb-k+1} o q^r_{mb-k+1} o q_1^-1 with k = floor(s/2) and
  r = s - 2k, where q^r interpolates q, p (r <= 1) and then p, q' (r >= 1).

Lifts use the boundary normalization of the mesh charts: on the singular
circle the lift of q_i o q_1^-1 turns by a(i-1)/N, so the isotopy lift is
the chart transfer followed by the factor lifts, minus a.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..foliation import ImageChart
from ..maps import IsotopyPath, from_cover, to_cover
from .charts import MeshChart


class DiskMaps:
    """Charts and maps of one sampled disk, with a bounded chart cache."""

    def __init__(self, disk, cache_size: int = 512):
        self.disk = disk
        self.space = disk.space
        self._charts: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._factors = [self.space.chain.factor(j).as_map() for j in range(1, self.space.m + 1)]

    @property
    def m(self) -> int:
        return self.space.m

    @property
    def b(self) -> int:
        return self.space.b

    @property
    def a(self) -> int:
        return self.disk.a

    def chart(self, i: int, s: float = 0.0) -> MeshChart:
        key = (int(i), float(s))
        ch = self._charts.get(key)
        if ch is None:
            ch = MeshChart.from_disk(self.disk, i, s)
            self._charts[key] = ch
            if len(self._charts) > self._cache_size:
                self._charts.popitem(last=False)
        else:
            self._charts.move_to_end(key)
        return ch

    def factor(self, j: int):
        """The map f_j of the chain (1-based, periodic)."""
        return self._factors[(j - 1) % self.m]

    # ------------------------------------------------------------------
    def f_hat_i_lift(self, i: int, ell, rho):
        return self.chart(i).transfer(self.chart(i + 1), ell, rho)

    def f_hat_lift(self, ell, rho):
        return self.chart(1).transfer(self.chart(self.m + 1), ell, rho)

    def f_hat(self, z):
        """Finite-order map on the closed disk D_{a/b} (planar)."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        nz = z != 0
        if np.any(nz):
            e, r = to_cover(z[nz])
            out[nz] = from_cover(*self.f_hat_lift(e, r))
        return out

    def f_lift(self, ell, rho, count: int = None):
        """Lift of the pseudo-rotation f = f_m o ... o f_1, applied count times."""
        count = self.m if count is None else count
        for j in range(1, count + 1):
            ell, rho = self.factor(j).lift(ell, rho)
        return ell, rho

    # ------------------------------------------------------------------
    def check_lift(self, s, ell, rho):
        """Lift of f_check_s (identity at s = 0)."""
        s, ell, rho = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(ell, dtype=float),
                                          np.asarray(rho, dtype=float))
        shape = s.shape
        s, ell, rho = s.ravel(), ell.ravel(), rho.ravel()
        mb = self.m * self.b
        out_e, out_r = np.empty_like(ell), np.empty_like(rho)
        base = self.chart(1, 0.0)
        for sv in np.unique(s):
            sel = s == sv
            k, r, i = self._split(float(sv))
            e, rr = base.transfer(self.chart(i, float(r)), ell[sel], rho[sel])
            for j in range(mb - k + 1, mb + 1):
                e, rr = self.factor(j).lift(e, rr)
            out_e[sel], out_r[sel] = e - self.a, rr
        return out_e.reshape(shape), out_r.reshape(shape)

    def _split(self, s: float):
        mb = self.m * self.b
        if not 0.0 <= s <= 2 * mb + 1e-12:
            raise ValueError("isotopy parameter outside [0, 2mb]")
        k = min(int(s // 2), mb - 1)
        return k, s - 2 * k, mb - k + 1

    def isotopy_chart(self, s: float) -> ImageChart:
        """Chart of f_check_s(q_1(F)): the mesh chart of q^r_{mb-k+1} pulled
        back through the factor lifts f_mb, ..., f_{mb-k+1}."""
        k, r, i = self._split(float(s))
        base = self.chart(i, float(r))
        mb = self.m * self.b

        def lifted_inverse(ell, rho):
            for j in range(mb, mb - k, -1):
                ell, rho = self.factor(j).lift_inverse(ell, rho)
            return ell, rho

        return ImageChart(base, lifted_inverse)

    def good_isotopy(self) -> IsotopyPath:
        return IsotopyPath(self.check_lift, s_max=2.0 * self.m * self.b, max_step=0.25,
                           r_max=self.disk.radius, label=f"good isotopy a={self.a} b={self.b}")

    def check(self, s: float, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        nz = z != 0
        if np.any(nz):
            e, r = to_cover(z[nz])
            e2, r2 = self.check_lift(s, e, r)
            out[nz] = from_cover(e2 + self.a, r2)
        return out


def finite_order_map(disk, z):
    """f_hat(z) for planar points z in D_{a/b}."""
    return DiskMaps(disk).f_hat(z)


def good_isotopy(disk, s: float, z):
    """f_check_s(z) for planar points z in D_{a/b}."""
    return DiskMaps(disk).check(s, z)
