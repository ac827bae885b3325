"""Discrete angle calculus for radial foliations of the punctured disk.

A radial foliation is handled through a chart: a map from cover points
(ell, rho) to a pair (leaf, along).  The leaf label is a real number that
increases by exactly 1 under the deck transformation and orders the lifted
leaves from right to left; ``along`` increases toward the boundary on each
leaf.  Two cover points then have a relative position in Z/4Z (the quarter
angle), and following it along an isotopy gives integer-valued invariants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

EPS_LEAF = 1e-9


class CoincidentPoints(ValueError):
    pass


class RefinementExhausted(RuntimeError):
    """The digital-topology refinement did not separate two samples."""


# --------------------------------------------------------------------------
# Z/4Z values


@dataclass(frozen=True)
class QuarterAngle:
    value: int

    def __post_init__(self):
        object.__setattr__(self, "value", int(self.value) % 4)

    def __add__(self, other):
        return QuarterAngle(self.value + int(getattr(other, "value", other)))

    @property
    def is_open(self) -> bool:
        """Odd values (different leaves) are the open points of the digital line."""
        return self.value % 2 == 1

    def adjacent(self, other: "QuarterAngle") -> bool:
        return (self.value - other.value) % 4 in (0, 1, 3)


@dataclass(frozen=True)
class LiftedAngle:
    value: int

    @property
    def base(self) -> QuarterAngle:
        return QuarterAngle(self.value)


def quarter_step(old, new):
    """Lifted change between adjacent quarter angles: -1, 0 or +1."""
    return np.mod(np.asarray(new) - np.asarray(old) + 1, 4) - 1


def theta_from_coords(leaf, along, leaf2, along2, eps: float = EPS_LEAF):
    """Quarter angle of the second point seen from the first (vectorized).

    1 if the second point is on a leaf to the left, 3 if to the right, 0 if
    on the same leaf and further out, 2 if on the same leaf and further in.
    """
    d = np.asarray(leaf2, dtype=float) - np.asarray(leaf, dtype=float)
    same = np.abs(d) <= eps
    ahead = np.asarray(along2) > np.asarray(along)
    if np.any(same & (np.asarray(along2) == np.asarray(along))):
        raise CoincidentPoints("quarter angle of coincident points")
    return np.where(d > eps, 1, np.where(d < -eps, 3, np.where(ahead, 0, 2)))


def lambda_count(k, l):
    """Number of multiples of 4 strictly between k and l, plus half the
    number at the endpoints; antisymmetric in (k, l)."""
    k = np.asarray(k, dtype=np.int64)
    l = np.asarray(l, dtype=np.int64)
    lo, hi = np.minimum(k, l), np.maximum(k, l)
    inner = np.where(hi > lo, np.floor_divide(hi - 1, 4) - np.floor_divide(lo, 4), 0)
    ends = (np.mod(lo, 4) == 0).astype(float) + (np.mod(hi, 4) == 0)
    val = inner + np.where(hi > lo, ends / 2.0, 0.0)
    return np.where(k <= l, val, -val)


# --------------------------------------------------------------------------
# Charts


class FoliationChart:
    """Leaf and along coordinates of cover points.

    ``eps`` is the same-leaf band; analytic charts use 0 (exact comparison).
    """

    source = "abstract"
    eps = EPS_LEAF

    def coords(self, ell, rho):
        raise NotImplementedError

    def leaf(self, ell, rho):
        return self.coords(ell, rho)[0]

    def theta(self, z, zp):
        l1, a1 = self.coords(*z)
        l2, a2 = self.coords(*zp)
        return theta_from_coords(l1, a1, l2, a2, self.eps)


class EuclideanChart(FoliationChart):
    """The foliation by rays from the origin."""

    source = "euclidean"
    eps = 0.0

    def coords(self, ell, rho):
        return np.asarray(ell, dtype=float), np.asarray(rho, dtype=float)


@dataclass(frozen=True, eq=False)
class ImageChart(FoliationChart):
    """Chart of g(F) given a lifted inverse of g: leaf(z) = leaf_F(g^-1 z)."""

    base: FoliationChart
    lifted_inverse: Callable
    source: str = "image-under-map"

    @property
    def eps(self):
        return self.base.eps

    def coords(self, ell, rho):
        return self.base.coords(*self.lifted_inverse(ell, rho))


def polar_image_chart(profile, base: FoliationChart | None = None) -> ImageChart:
    """Image of a chart under the polar map with the given profile."""
    base = EuclideanChart() if base is None else base

    def inv(ell, rho):
        rho = np.asarray(rho, dtype=float)
        return np.asarray(ell) - profile.turns(rho), rho

    return ImageChart(base, inv)


# --------------------------------------------------------------------------
# Paths of pairs: s -> coordinates of two cover points in a chart


class PairPath:
    """s -> (leaf1, along1, leaf2, along2) for a batch of point pairs.

    ``evaluate(s, idx)`` takes equal-length arrays of parameters and pair
    indices.  The leaf difference is what the tracker follows.
    """

    s_max = 1.0
    eps = EPS_LEAF

    def evaluate(self, s, idx):
        raise NotImplementedError


@dataclass(eq=False)
class IsotopyPairPath(PairPath):
    """Points moved by a lifted isotopy, read in a fixed chart.

    By naturality this follows the quarter angle of the fixed points
    relative to the pulled-back foliations f_s^-1(F).
    """

    chart: FoliationChart
    isotopy: object  # maps.IsotopyPath
    z1: tuple
    z2: tuple

    def __post_init__(self):
        self.s_max = self.isotopy.s_max
        self.eps = self.chart.eps
        self.z1 = tuple(np.asarray(c, dtype=float) for c in self.z1)
        self.z2 = tuple(np.asarray(c, dtype=float) for c in self.z2)

    def evaluate(self, s, idx):
        s = np.asarray(s, dtype=float)
        e1, r1 = self.isotopy.lift(s, self.z1[0][idx], self.z1[1][idx])
        e2, r2 = self.isotopy.lift(s, self.z2[0][idx], self.z2[1][idx])
        l1, a1 = self.chart.coords(e1, r1)
        l2, a2 = self.chart.coords(e2, r2)
        return l1, a1, l2, a2


@dataclass(eq=False)
class ChartFamilyPath(PairPath):
    """Fixed points read in a family of charts s -> F_s.

    ``chart_at(s)`` returns a chart; parameters are grouped so each chart is
    built once per distinct s.
    """

    chart_at: Callable
    z1: tuple
    z2: tuple
    s_max: float = 1.0
    eps: float = EPS_LEAF

    def __post_init__(self):
        self.z1 = tuple(np.asarray(c, dtype=float) for c in self.z1)
        self.z2 = tuple(np.asarray(c, dtype=float) for c in self.z2)

    def evaluate(self, s, idx):
        s = np.asarray(s, dtype=float)
        idx = np.asarray(idx)
        out = [np.empty(len(s)) for _ in range(4)]
        for sv in np.unique(s):
            sel = s == sv
            ch = self.chart_at(float(sv))
            i = idx[sel]
            l1, a1 = ch.coords(self.z1[0][i], self.z1[1][i])
            l2, a2 = ch.coords(self.z2[0][i], self.z2[1][i])
            for o, v in zip(out, (l1, a1, l2, a2)):
                o[sel] = v
        return tuple(out)


# --------------------------------------------------------------------------
# Tracker


@dataclass
class TrackResult:
    """Per pair: translates k, lifted change of theta for z1 vs T^k z2, and
    the starting quarter angles."""

    ks: np.ndarray      # (P, W) translate offsets, valid where mask
    mask: np.ndarray    # (P, W)
    tau: np.ndarray     # (P, W) integer
    theta0: np.ndarray  # (P, W) in 0..3
    unresolved: int = 0

    def tau_hat(self, k=0):
        hit = self.mask & (self.ks == k)
        out = np.where(hit, self.tau, 0).sum(axis=1)
        return out

    @property
    def tau_bar(self):
        return np.where(self.mask, np.abs(self.tau), 0).sum(axis=1)

    @property
    def tau_sum(self):
        return np.where(self.mask, self.tau, 0).sum(axis=1)

    @property
    def lam(self):
        l = lambda_count(self.theta0, self.theta0 + self.tau)
        return np.where(self.mask, l, 0.0).sum(axis=1)

    @property
    def tau_max(self):
        return np.where(self.mask, np.abs(self.tau), 0).max(axis=1)


def _sample(path: PairPath, n_pairs: int, n_grid: int, max_jump: float, max_depth: int):
    """Adaptive samples of the leaf difference, flattened and sorted by pair."""
    s0 = np.linspace(0.0, path.s_max, n_grid)
    S = np.tile(s0, n_pairs)
    I = np.repeat(np.arange(n_pairs), n_grid)
    l1, a1, l2, a2 = path.evaluate(S, I)
    D = l2 - l1
    min_len = path.s_max * 2.0 ** -max_depth
    unresolved = 0
    for _ in range(max_depth):
        same = I[1:] == I[:-1]
        jump = np.abs(np.diff(D)) > max_jump
        short = np.diff(S) <= min_len
        flag = same & jump & ~short
        unresolved = int(np.count_nonzero(same & jump & short))
        if not np.any(flag):
            break
        j = np.nonzero(flag)[0]
        Sm = 0.5 * (S[j] + S[j + 1])
        Im = I[j]
        nl1, na1, nl2, na2 = path.evaluate(Sm, Im)
        S = np.concatenate([S, Sm])
        I = np.concatenate([I, Im])
        D = np.concatenate([D, nl2 - nl1])
        a1 = np.concatenate([a1, na1])
        a2 = np.concatenate([a2, na2])
        order = np.lexsort((S, I))
        S, I, D, a1, a2 = S[order], I[order], D[order], a1[order], a2[order]
    return S, I, D, a1, a2, unresolved


def track_pairs(path: PairPath, n_pairs: int, n_grid: int = 9, max_jump: float = 0.2,
                max_depth: int = 40, margin: int = 2, chunk: int = 20000) -> TrackResult:
    """Follow the quarter angles of z1 against every relevant translate T^k z2.

    Translates whose leaf difference stays outside the same-leaf band keep a
    constant quarter angle and are skipped; the others (plus ``margin`` on
    each side) are tracked.  Between samples the leaf difference is refined
    until consecutive values differ by at most ``max_jump``; a sign change
    between two samples off the band is resolved from the along-coordinates
    at the interpolated crossing.
    """
    parts = []
    for start in range(0, n_pairs, chunk):
        stop = min(n_pairs, start + chunk)

        class _Sub(PairPath):
            s_max = path.s_max
            eps = path.eps

            def evaluate(self, s, idx, _o=start):
                return path.evaluate(s, np.asarray(idx) + _o)

        parts.append(_track_chunk(_Sub(), stop - start, n_grid, max_jump, max_depth, margin))
    if len(parts) == 1:
        return parts[0]
    W = max(p.ks.shape[1] for p in parts)

    def pad(a, fill):
        return np.concatenate([np.pad(p_a, ((0, 0), (0, W - p_a.shape[1])), constant_values=fill)
                               for p_a in a])

    return TrackResult(ks=pad([p.ks for p in parts], 0), mask=pad([p.mask for p in parts], False),
                       tau=pad([p.tau for p in parts], 0), theta0=pad([p.theta0 for p in parts], 1),
                       unresolved=sum(p.unresolved for p in parts))


def _track_chunk(path, P, n_grid, max_jump, max_depth, margin):
    eps = path.eps
    S, I, D, a1, a2, unresolved = _sample(path, P, n_grid, max_jump, max_depth)
    dmin = np.full(P, np.inf)
    dmax = np.full(P, -np.inf)
    np.minimum.at(dmin, I, D)
    np.maximum.at(dmax, I, D)
    kmin = np.floor(-dmax).astype(np.int64) - margin
    kmax = np.ceil(-dmin).astype(np.int64) + margin
    W = int(np.max(kmax - kmin)) + 1
    off = np.arange(W)
    ks = kmin[:, None] + off[None, :]
    mask = ks <= kmax[:, None]

    kk = ks[I]                       # (M, W)
    v = D[:, None] + kk              # leaf difference against T^k z2
    ahead = (a2 > a1)[:, None]
    th = np.where(v > eps, 1, np.where(v < -eps, 3, np.where(ahead, 0, 2)))
    same_pair = (I[1:] == I[:-1])[:, None]
    t0, t1 = th[:-1], th[1:]
    jump2 = (np.mod(t1 - t0, 4) == 2) & same_pair
    # crossing value for 1 <-> 3 jumps
    v0, v1 = v[:-1], v[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(v0 != v1, v0 / (v0 - v1), 0.5)
    ac1 = (a1[:-1, None] * (1 - w) + a1[1:, None] * w)
    ac2 = (a2[:-1, None] * (1 - w) + a2[1:, None] * w)
    mid = np.where(ac2 > ac1, 0, 2)
    odd_jump = jump2 & (t0 % 2 == 1)
    bad = jump2 & (t0 % 2 == 0)
    step = np.where(odd_jump, quarter_step(t0, mid) + quarter_step(mid, t1), quarter_step(t0, t1))
    step = np.where(same_pair, step, 0)
    tau = np.zeros((P, W), dtype=np.int64)
    np.add.at(tau, I[:-1], step)
    first = np.concatenate([[True], I[1:] != I[:-1]])
    theta0 = th[first]
    unresolved += int(np.count_nonzero(bad))
    return TrackResult(ks=ks, mask=mask, tau=tau, theta0=theta0, unresolved=unresolved)


def tau_hat(path: PairPath, n_pairs: int, k: int = 0, **kw):
    """Lifted change of theta between z1 and T^k z2 along the path, per pair."""
    res = track_pairs(path, n_pairs, **kw)
    if res.unresolved:
        raise RefinementExhausted(f"{res.unresolved} sample interval(s) not separated")
    return res.tau_hat(k)


@dataclass
class AnnulusSums:
    tau_bar: np.ndarray
    tau: np.ndarray
    lam: np.ndarray
    tau_max: np.ndarray
    unresolved: int


def annulus_sums(path: PairPath, n_pairs: int, **kw) -> AnnulusSums:
    """Sums over deck translates: total variation, signed total and lambda."""
    res = track_pairs(path, n_pairs, **kw)
    return AnnulusSums(tau_bar=res.tau_bar, tau=res.tau_sum, lam=res.lam, tau_max=res.tau_max,
                       unresolved=res.unresolved)


# --------------------------------------------------------------------------
# Displacement and the linking cocycle


def reduce_to_domain(chart: FoliationChart, phi: float, ell, rho):
    """Deck-translate cover points so their leaf label lies in [phi, phi + 1)."""
    leaf = chart.leaf(ell, rho)
    j = np.floor(leaf - phi)
    return np.asarray(ell) - j, np.asarray(rho), leaf - j


def displacement_m(lifted_map: Callable, chart: FoliationChart, phi: float, ell, rho):
    """floor(leaf(f~ z~) - phi) for the lift z~ with leaf in [phi, phi + 1)."""
    e, r, _ = reduce_to_domain(chart, phi, ell, rho)
    fe, fr = lifted_map(e, r)
    return np.floor(chart.leaf(fe, fr) - phi).astype(np.int64)


def Lambda_op(isotopy, chart: FoliationChart, phi: float, z1, z2, **kw):
    """lambda of the pair along the isotopy plus the displacement of z1.

    ``isotopy`` is a lifted IsotopyPath; its time-one lift is the lifted map.
    """
    z1 = tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in z1)
    z2 = tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in z2)
    path = IsotopyPairPath(chart, isotopy, z1, z2)
    res = track_pairs(path, len(z1[0]), **kw)
    m = displacement_m(lambda e, r: isotopy.lift(isotopy.s_max, e, r), chart, phi, *z1)
    return res.lam + m


def winding_distance_estimate(path: PairPath, n_pairs: int, **kw):
    """Largest |tau_hat| over sampled pairs and translates: a lower bound for
    the winding distance.  Returns (estimate, sample count)."""
    res = track_pairs(path, n_pairs, **kw)
    if res.unresolved:
        raise RefinementExhausted(f"{res.unresolved} sample interval(s) not separated")
    return int(res.tau_max.max(initial=0)), n_pairs


# --------------------------------------------------------------------------
# Rotation and linking numbers of points


@dataclass
class Estimate:
    value: float
    error: float
    window: int
    samples: int


def _block_error(series, blocks: int = 8):
    series = np.asarray(series, dtype=float)
    n = len(series) // blocks
    if n < 1:
        return float("nan")
    means = series[: n * blocks].reshape(blocks, n).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(blocks)) if blocks > 1 else float("nan")


def rotation_number_estimate(lifted_map: Callable, chart: FoliationChart, phi: float, z, n: int,
                             planar_map: Callable | None = None) -> Estimate:
    """Birkhoff average of the displacement along the orbit of z.

    The orbit is followed on the cover by iterating the lifted map and
    reducing to the fundamental domain each time.  The error bar is the spread
    of block means plus the 1/n telescoping remainder.
    """
    ell, rho = (np.asarray(c, dtype=float) for c in z)
    if np.any(rho <= 0):
        raise ValueError("the fixed point 0 is not in the punctured disk")
    if n < 1:
        raise ValueError("no recurrences within the window")
    ms = []
    for _ in range(n):
        e, r, _ = reduce_to_domain(chart, phi, ell, rho)
        fe, fr = lifted_map(e, r)
        ms.append(np.floor(chart.leaf(fe, fr) - phi))
        ell, rho = fe, fr
    ms = np.array(ms)
    return Estimate(float(ms.mean()), _block_error(ms) + 1.0 / n, n, n)


def linking_number_estimate(isotopy, chart: FoliationChart, phi: float, z1, z2, n: int,
                            **kw) -> Estimate:
    """Birkhoff average of Lambda along the pair orbit (n iterates)."""
    if n < 1:
        raise ValueError("no joint recurrences within the window")
    one = isotopy.s_max
    e1, r1 = (np.atleast_1d(np.asarray(c, dtype=float)) for c in z1)
    e2, r2 = (np.atleast_1d(np.asarray(c, dtype=float)) for c in z2)
    E1, R1, E2, R2 = [e1], [r1], [e2], [r2]
    for _ in range(n - 1):
        e1, r1 = isotopy.lift(one, e1, r1)
        e2, r2 = isotopy.lift(one, e2, r2)
        E1.append(e1), R1.append(r1), E2.append(e2), R2.append(r2)
    vals = Lambda_op(isotopy, chart, phi, (np.concatenate(E1), np.concatenate(R1)),
                     (np.concatenate(E2), np.concatenate(R2)), **kw)
    return Estimate(float(vals.mean()), _block_error(vals) + 2.0 / n, n, n)


def gradient_foliation_chart(disk, i: int = 1, s: float = 0.0):
    """Chart of the foliation by projected gradient lines of the invariant disk.

    ``disk`` is an :class:`~pseudorot.actionflow.disk.DeltaDisk`; the chart
    is that of q_i^s for s in [0, 1] and of q'_i^{s-1} for s in [1, 2].
    """
    return disk.projection_chart(i, s)
