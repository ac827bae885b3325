"""Sampled invariant disk: gradient lines indexed by their core angle psi and
by action levels u = h / C(a, b) in [0, 1].

The top level is the singular circle itself.  For chains invariant under
the one-site shift the disk is built from a fundamental range of psi and
the remaining lines are shifted copies.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.optimize import brentq

from ..integrate import dp_step
from .heteroclinic import ConvergenceError, HeteroclinicSolver
from .space import ActionSpace, c_ab, linking_form_L

MAGIC = b"PSRDISK\0"
CACHE_VERSION = 2


class CacheVersionError(ValueError):
    """The cache file has the wrong header or version."""


def make_levels(K: int = 64, u_core: float = 1e-6, u_split: float = 0.02, n_low: int = 12):
    """Action levels: geometric from u_core to u_split, then clustered toward 1."""
    low = np.geomspace(u_core, u_split, n_low)
    n_high = K - n_low + 1
    k = np.arange(1, n_high + 1)
    high = u_split + (1 - u_split) * np.sin(np.pi * k / (2 * n_high)) ** 2
    levels = np.concatenate([low, high])
    levels[-1] = 1.0
    return levels


@dataclass
class DiskSettings:
    n_psi_min: int = 256
    K: int = 64
    u_core: float = 1e-6
    T: float = 18.0
    segments: int = 12
    step: float = 0.02

    def to_dict(self):
        return dict(self.__dict__)


def _shift_generator(space: ActionSpace):
    """Sites moved by the smallest shift that commutes with the field."""
    return 1 if space.chain.uniform else space.m


@dataclass
class DeltaDisk:
    space: ActionSpace
    a: int
    alpha: float
    psi: np.ndarray          # (n_psi,)
    levels: np.ndarray       # (K + 1,)
    states: np.ndarray       # (n_psi, K + 1, N, 2)
    slow: np.ndarray         # (2N, 2) core eigenplane basis
    core_radius: np.ndarray  # (n_psi,) slow-plane radius at level 0
    shift_step: int = 1      # psi index step of the generating shift
    shift_sites: int = 1
    settings: DiskSettings = field(default_factory=DiskSettings)
    meta: dict = field(default_factory=dict)

    @property
    def b(self) -> int:
        return self.space.b

    @property
    def radius(self) -> float:
        return 1.0 + self.a / self.b - self.alpha

    @property
    def C(self) -> float:
        return c_ab(self.alpha, self.a, self.b)

    @property
    def n_psi(self) -> int:
        return len(self.psi)

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def build(cls, space: ActionSpace, a: int, alpha: float, settings: DiskSettings | None = None,
              verbose: bool = False) -> "DeltaDisk":
        settings = settings or DiskSettings()
        radius = 1.0 + a / space.b - alpha
        solver = HeteroclinicSolver(space, a, radius, T=settings.T, segments=settings.segments, step=settings.step)
        N = space.N
        unit = _shift_generator(space)
        E = solver.lin.slow
        SE = np.roll(E.reshape(N, 2, 2), -unit, axis=0).reshape(2 * N, 2)
        R2 = E.T @ SE
        d = np.arctan2(R2[1, 0], R2[0, 0]) / (2 * np.pi)
        if np.abs(R2 - np.array([[np.cos(2 * np.pi * d), -np.sin(2 * np.pi * d)],
                                  [np.sin(2 * np.pi * d), np.cos(2 * np.pi * d)]])).max() > 1e-6:
            raise RuntimeError("shift does not act on the eigenplane as a rotation")
        order = N // unit
        kd = int(round(d * order)) % order
        if abs(d * order - round(d * order)) > 1e-6:
            raise RuntimeError(f"shift rotates the eigenplane by {d}, not a multiple of 1/{order}")
        g = gcd(kd, order) if kd else order
        copies = order // g           # lines generated from each fundamental line
        c = int(np.ceil(settings.n_psi_min / copies))
        n_psi = c * copies
        psi = np.arange(n_psi) / n_psi
        levels = make_levels(settings.K, settings.u_core)
        C = c_ab(alpha, a, space.b)
        states = np.empty((n_psi, len(levels), N, 2))
        core_radius = np.empty(n_psi)
        x_prev, jac = None, None
        if verbose:
            print(f"disk a={a} b={space.b}: {c} fundamental lines, {copies} copies each", flush=True)
        for p0 in range(c):
            line, x_prev = solver.solve(psi[p0], x0=x_prev, jac=jac, verbose=verbose)
            jac = solver._J
            col, r_core = _level_states(solver, line, levels, C)
            L = linking_form_L(space.zeta(col[1:-1]), strict=False)
            if not np.all(L == a):
                raise ConvergenceError(f"line psi={psi[p0]:.4g} leaves the invariant disk: linking form of "
                                       f"the field takes values {sorted(set(L[L == L].tolist()))}")
            inv = pow(kd // g, -1, copies) if copies > 1 else 0
            for q in range(copies):
                j = (q * inv) % copies
                p = p0 + c * q
                states[p] = np.roll(col, -j * unit, axis=-2)
                core_radius[p] = r_core
        step = c * (kd // g) % n_psi if copies > 1 else 0
        disk = cls(space=space, a=a, alpha=alpha, psi=psi, levels=levels, states=states, slow=E,
                   core_radius=core_radius, shift_step=step, shift_sites=unit, settings=settings,
                   meta={"shift_turns": float(d), "fundamental_lines": c, "copies": copies})
        return disk

    # ------------------------------------------------------------------
    # derived data

    def projections(self):
        if not hasattr(self, "_proj"):
            Q, P, Qp = self.space.projections(self.states)
            self._proj = (Q, P, Qp)
        return self._proj

    def projection_points(self, i: int, s: float = 1.0):
        """Planar nodes (complex, shape (n_psi, K+1)) of q_i^s (s in [0, 1])
        or q'_i^{s-1} (s in [1, 2]); i is 1-based and read periodically."""
        Q, P, Qp = self.projections()
        k = (i - 1) % self.space.N
        if s <= 1.0:
            w = (1 - s) * Q[:, :, k] + s * P[:, :, k]
        else:
            w = (2 - s) * P[:, :, k] + (s - 1) * Qp[:, :, k]
        return w[..., 0] + 1j * w[..., 1]

    def core_matrix(self, i: int, s: float = 1.0):
        """2x2 matrix from slow-plane coordinates to the planar projection,
        valid in the linear core."""
        N = self.space.N
        cols = []
        for e in self.slow.T:
            z = 1e-6 * e.reshape(N, 2)
            Q, P, Qp = self.space.projections(z)
            k = (i - 1) % N
            if s <= 1.0:
                w = (1 - s) * Q[k] + s * P[k]
            else:
                w = (2 - s) * P[k] + (s - 1) * Qp[k]
            cols.append(w / 1e-6)
        return np.array(cols).T

    def resolution(self, i: int = 1, s: float = 0.0) -> float:
        """Largest distance between neighbouring nodes of a projection."""
        w = self.projection_points(i, s)
        d1 = np.abs(np.diff(np.concatenate([w, w[:1]]), axis=0)).max()
        d2 = np.abs(np.diff(w, axis=1)).max()
        return float(max(d1, d2))

    def singular_states(self):
        return self.states[:, -1]

    def projection_chart(self, i: int, s: float = 0.0):
        from .charts import MeshChart
        return MeshChart.from_disk(self, i, s)

    # ------------------------------------------------------------------
    # dumps

    def to_csv(self, path):
        """One row per node: psi, u, then x_1, y_1, ..., x_N, y_N."""
        N = self.space.N
        P, L = np.meshgrid(self.psi, self.levels, indexing="ij")
        rows = np.column_stack([P.ravel(), L.ravel(), self.states.reshape(-1, 2 * N)])
        head = ["psi", "u"] + [f"{c}_{i}" for i in range(1, N + 1) for c in ("x", "y")]
        np.savetxt(path, rows, delimiter=",", header=",".join(head), comments="", fmt="%.17g")

    # ------------------------------------------------------------------
    # cache

    def save(self, path):
        meta = {
            "a": self.a, "b": self.b, "m": self.space.m, "alpha": self.alpha, "N": self.space.N,
            "n_psi": self.n_psi, "n_levels": len(self.levels), "shift_step": self.shift_step,
            "shift_sites": self.shift_sites, "settings": self.settings.to_dict(), "meta": self.meta,
        }
        blob = json.dumps(meta).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", CACHE_VERSION, len(blob)))
            fh.write(blob)
            for arr in (self.psi, self.levels, self.core_radius, self.slow, self.states):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, space: ActionSpace) -> "DeltaDisk":
        with open(path, "rb") as fh:
            meta = _read_header(fh, path)
            data = np.frombuffer(fh.read(), dtype="<f8")
        if meta["N"] != space.N or meta["m"] != space.m:
            raise CacheVersionError(f"{path}: cache built for a different chain")
        n_psi, nl, N = meta["n_psi"], meta["n_levels"], meta["N"]
        sizes = [n_psi, nl, n_psi, 4 * N, n_psi * nl * N * 2]
        if data.size != sum(sizes):
            raise CacheVersionError(f"{path}: payload size mismatch")
        psi, levels, core_radius, slow, states = np.split(data, np.cumsum(sizes)[:-1])
        return cls(space=space, a=meta["a"], alpha=meta["alpha"], psi=psi.copy(), levels=levels.copy(),
                   states=states.reshape(n_psi, nl, N, 2).copy(), slow=slow.reshape(2 * N, 2).copy(),
                   core_radius=core_radius.copy(), shift_step=meta["shift_step"],
                   shift_sites=meta["shift_sites"], settings=DiskSettings(**meta["settings"]), meta=meta["meta"])


def _read_header(fh, path):
    head = fh.read(len(MAGIC))
    if head != MAGIC:
        raise CacheVersionError(f"{path}: not a disk cache")
    raw = fh.read(8)
    if len(raw) != 8:
        raise CacheVersionError(f"{path}: truncated header")
    version, n = struct.unpack("<II", raw)
    if version != CACHE_VERSION:
        raise CacheVersionError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
    try:
        return json.loads(fh.read(n).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheVersionError(f"{path}: unreadable cache metadata") from exc


def read_cache_meta(path) -> dict:
    """Metadata of a disk cache (validates the header)."""
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def delta_disk_sample(chain, b: int, a: int, alpha: float, resolution: int = 256,
                      levels: int = 64, verbose: bool = False) -> DeltaDisk:
    """Sample the invariant disk with at least ``resolution`` gradient lines."""
    space = ActionSpace(chain, b)
    return DeltaDisk.build(space, a, alpha, DiskSettings(n_psi_min=resolution, K=levels), verbose=verbose)


def _level_states(solver: HeteroclinicSolver, line, levels, C):
    """States of one gradient line at the requested action levels."""
    space = solver.space
    N = space.N
    out = np.empty((len(levels), N, 2))
    u_start = space.action(line.nodes[0]) / C
    fun = lambda t, z: space.zeta(z)

    # linear tail before the first node
    def u_tail(tau):
        return space.action(solver.core_state(line, tau)) / C

    lo = -1.0
    for k, u in enumerate(levels[:-1]):
        if u > u_start:
            break
        while u_tail(lo) > u:
            lo *= 2
            if lo < -1e6:
                raise RuntimeError("core level below reach of the linear tail")
        tau = brentq(lambda t: u_tail(t) - u, lo, 0.0, xtol=1e-14, rtol=1e-14)
        out[k] = solver.core_state(line, tau)
    k_next = k if levels[k] > u_start else len(levels) - 1

    # forward from the shooting nodes, fixed steps
    h = solver.dt / solver.substeps
    z = line.nodes[0].copy()
    u_now = u_start
    k1 = None
    steps = 0
    max_steps = solver.substeps * solver.M * 4
    while k_next < len(levels) - 1:
        node = steps // solver.substeps
        if steps % solver.substeps == 0 and node < solver.M:
            z = line.nodes[node].copy()
            k1 = None
            u_now = space.action(z) / C
        z_new, _, k1_new = dp_step(fun, 0.0, z, h, k1)
        u_new = space.action(z_new) / C
        while k_next < len(levels) - 1 and u_new >= levels[k_next]:
            target = levels[k_next]

            def g(tt, z0=z):
                return space.action(dp_step(fun, 0.0, z0, tt)[0]) / C - target

            tt = brentq(g, 0.0, h, xtol=1e-15) if u_now < target else 0.0
            out[k_next] = dp_step(fun, 0.0, z, tt)[0] if tt > 0 else z
            k_next += 1
        z, k1, u_now = z_new, k1_new, u_new
        steps += 1
        if steps > max_steps:
            raise RuntimeError(f"level {levels[k_next]:.6g} not reached along the gradient line")
    out[-1] = solver.sigma(line.theta_end)
    r_core = float(np.linalg.norm(solver.slow_coordinates(out[0])))
    return out, r_core
