"""Area-preserving polar maps of the plane, their isotopies and cover lifts.

Angles are measured in turns throughout.  A point of the universal cover of
the punctured plane is a pair ``(ell, rho)`` where ``ell`` is a lifted angle in
turns and ``rho > 0`` a radius; the deck transformation is ``ell -> ell + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi


def to_cover(z):
    """Lift planar points to the cover, with angles taken in [0, 1)."""
    z = np.asarray(z, dtype=complex)
    ell = np.mod(np.angle(z) / TWO_PI, 1.0)
    return ell, np.abs(z)


def from_cover(ell, rho):
    return np.asarray(rho) * np.exp(1j * TWO_PI * np.asarray(ell))


# --------------------------------------------------------------------------
# Radial profiles: rotation amount (turns) as a function of the radius.


class Profile:
    """Rotation amount as a function of the radius.

    Subclasses provide ``turns``, ``slope`` (derivative in r) and ``moment``,
    the integral of s**2 * slope(s) from 0 to r.  All three are vectorized.
    """

    kinks: tuple = ()

    def turns(self, r):
        raise NotImplementedError

    def slope(self, r):
        raise NotImplementedError

    def moment(self, r):
        raise NotImplementedError

    def scaled(self, factor: float) -> "Profile":
        return ScaledProfile(self, factor)


@dataclass(frozen=True)
class ConstantProfile(Profile):
    value: float

    def turns(self, r):
        return np.full(np.shape(r), float(self.value))

    def slope(self, r):
        return np.zeros(np.shape(r))

    def moment(self, r):
        return np.zeros(np.shape(r))


@dataclass(frozen=True)
class AngularProfile(Profile):
    """Rigid rotation by alpha inside the unit disk, linear twist on the band
    [1, 1 + beta - alpha], rigid rotation by beta outside."""

    alpha: float
    beta: float
    pseudo_rotation: bool = False

    def __post_init__(self):
        if not self.beta > self.alpha:
            raise ValueError(f"need beta > alpha, got alpha={self.alpha}, beta={self.beta}")
        if self.pseudo_rotation and np.floor(self.beta) >= np.ceil(self.alpha):
            raise ValueError("(alpha, beta) must not contain an integer")

    @property
    def band_end(self) -> float:
        return 1.0 + self.beta - self.alpha

    @property
    def kinks(self):
        return (1.0, self.band_end)

    def turns(self, r):
        return np.clip(self.alpha + np.asarray(r, dtype=float) - 1.0, self.alpha, self.beta)

    def slope(self, r):
        r = np.asarray(r, dtype=float)
        return ((r > 1.0) & (r < self.band_end)).astype(float)

    def moment(self, r):
        s = np.clip(np.asarray(r, dtype=float), 1.0, self.band_end)
        return (s**3 - 1.0) / 3.0

    def radius_of(self, value):
        """Radius of the circle rotated by ``value`` turns (value in [alpha, beta])."""
        if not self.alpha <= value <= self.beta:
            raise ValueError(f"{value} outside [{self.alpha}, {self.beta}]")
        return 1.0 + value - self.alpha


@dataclass(frozen=True)
class ScaledProfile(Profile):
    base: Profile
    factor: float

    @property
    def kinks(self):
        return self.base.kinks

    def turns(self, r):
        return self.factor * self.base.turns(r)

    def slope(self, r):
        return self.factor * self.base.slope(r)

    def moment(self, r):
        return self.factor * self.base.moment(r)


@dataclass(frozen=True)
class SumProfile(Profile):
    parts: tuple

    @property
    def kinks(self):
        return tuple(sorted({k for p in self.parts for k in p.kinks}))

    def turns(self, r):
        return sum(p.turns(r) for p in self.parts)

    def slope(self, r):
        return sum(p.slope(r) for p in self.parts)

    def moment(self, r):
        return sum(p.moment(r) for p in self.parts)


@dataclass(frozen=True)
class ExtendedProfile(Profile):
    """An inner profile on the unit disk glued to the band twist and beta."""

    inner: Profile
    alpha: float
    beta: float

    @property
    def band_end(self) -> float:
        return 1.0 + self.beta - self.alpha

    @property
    def kinks(self):
        return tuple(sorted(set(k for k in self.inner.kinks if k < 1.0) | {1.0, self.band_end}))

    def turns(self, r):
        r = np.asarray(r, dtype=float)
        outer = np.clip(self.alpha + r - 1.0, self.alpha, self.beta)
        return np.where(r <= 1.0, self.inner.turns(np.minimum(r, 1.0)), outer)

    def slope(self, r):
        r = np.asarray(r, dtype=float)
        band = ((r > 1.0) & (r < self.band_end)).astype(float)
        return np.where(r <= 1.0, self.inner.slope(np.minimum(r, 1.0)), band)

    def moment(self, r):
        r = np.asarray(r, dtype=float)
        s = np.clip(r, 1.0, self.band_end)
        inner = self.inner.moment(np.minimum(r, 1.0))
        return inner + (s**3 - 1.0) / 3.0


# --------------------------------------------------------------------------
# Maps


@dataclass(frozen=True)
class PolarMap:
    """(r, phi) -> (r, phi + omega(r)), omega in turns.  Preserves every circle
    centred at 0, hence area, and fixes 0."""

    profile: Profile

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return z * np.exp(1j * TWO_PI * self.profile.turns(np.abs(z)))

    def inverse(self, z):
        z = np.asarray(z, dtype=complex)
        return z * np.exp(-1j * TWO_PI * self.profile.turns(np.abs(z)))

    def lift(self, ell, rho):
        """The canonical lift, advancing the lifted angle by omega(rho)."""
        return np.asarray(ell) + self.profile.turns(rho), np.asarray(rho)

    def lift_inverse(self, ell, rho):
        return np.asarray(ell) - self.profile.turns(rho), np.asarray(rho)

    def then(self, other: "PolarMap") -> "PolarMap":
        """Composition other o self (polar maps commute)."""
        return PolarMap(SumProfile((self.profile, other.profile)))


def rotation(alpha: float) -> PolarMap:
    return PolarMap(ConstantProfile(alpha))


def identity_map() -> PolarMap:
    return PolarMap(ConstantProfile(0.0))


def band_extend(inner_map, alpha: float, beta: float, n_check: int = 256):
    """Extend a disk map that rotates the unit circle by alpha to the plane.

    The result agrees with ``inner_map`` on the unit disk, twists the band
    1 <= |z| <= 1 + beta - alpha by alpha + r - 1 and rotates by beta beyond.
    Polar inner maps give a :class:`PolarMap`; other callables give a plain
    planar function.
    """
    if not beta > alpha:
        raise ValueError(f"need beta > alpha, got alpha={alpha}, beta={beta}")
    circle = np.exp(1j * TWO_PI * (np.arange(n_check) + 0.5) / n_check)
    residual = np.max(np.abs(inner_map(circle) - circle * np.exp(1j * TWO_PI * alpha)))
    if residual > 1e-9:
        raise ValueError(f"inner map is not rotation by {alpha} on the unit circle (residual {residual:.3g})")
    if isinstance(inner_map, PolarMap):
        inner = inner_map.profile
        if isinstance(inner, ConstantProfile):
            return PolarMap(AngularProfile(alpha, beta))
        return PolarMap(ExtendedProfile(inner, alpha, beta))
    outer = PolarMap(AngularProfile(alpha, beta))

    def extended(z):
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) <= 1.0
        out = outer(z)
        if np.any(inside):
            out = np.where(inside, inner_map(np.where(inside, z, 0.0)), out)
        return out

    return extended


# --------------------------------------------------------------------------
# Isotopies


@dataclass(frozen=True)
class IsotopyPath:
    """A path s in [0, s_max] of planar maps with a lift to the cover.

    ``lift_fn(s, ell, rho)`` returns the image cover point; it must be the
    identity at s = 0 and commute with the deck transformation.
    """

    lift_fn: Callable
    s_max: float = 1.0
    max_step: float = 0.05
    r_max: float = np.inf
    label: str = ""

    def lift(self, s, ell, rho):
        return self.lift_fn(s, ell, rho)

    def family(self, s) -> Callable:
        def planar(z):
            ell, rho = to_cover(z)
            e, r = self.lift_fn(s, ell, rho)
            return from_cover(e, r)

        return planar

    def __call__(self, s, z):
        return self.family(s)(z)


def polar_isotopy(turns_fn: Callable, s_max: float = 1.0, r_max: float = np.inf, label: str = "") -> IsotopyPath:
    """Isotopy rotating the circle of radius rho by ``turns_fn(s, rho)``."""

    def lift_fn(s, ell, rho):
        rho = np.asarray(rho, dtype=float)
        return np.asarray(ell, dtype=float) + turns_fn(s, rho), rho

    return IsotopyPath(lift_fn, s_max=s_max, r_max=r_max, label=label)


def identity_isotopy(r_max: float = np.inf) -> IsotopyPath:
    return polar_isotopy(lambda s, rho: 0.0 * rho, r_max=r_max, label="identity")


def rotation_isotopy(alpha: float, r_max: float = np.inf) -> IsotopyPath:
    """s -> R_{s alpha}; alpha + k gives the lift T_alpha composed with T^k."""
    return polar_isotopy(lambda s, rho: s * alpha + 0.0 * rho, r_max=r_max, label=f"rotation {alpha}")


def twist_isotopy(profile: Profile, scale: float = 1.0, shift: float = 0.0, r_max: float = np.inf) -> IsotopyPath:
    """s -> rotation of each circle by s * (scale * omega(rho) - shift).

    With scale = b and shift = a this is an isotopy from the identity to
    f^b composed with T^{-a}.
    """

    def turns_fn(s, rho):
        return s * (scale * profile.turns(rho) - shift)

    return polar_isotopy(turns_fn, r_max=r_max, label="twist")


def eval_lift(path: IsotopyPath, s, ell, rho):
    """Evaluate the lifted isotopy at parameter s on cover points."""
    rho = np.asarray(rho, dtype=float)
    if not 0.0 <= s <= path.s_max:
        raise ValueError(f"parameter {s} outside [0, {path.s_max}]")
    if np.any(rho <= 0.0) or np.any(rho > path.r_max):
        raise ValueError("cover point projects to 0 or lies outside the domain")
    return path.lift(s, ell, rho)


# --------------------------------------------------------------------------


def restricted_calabi_closed_form(alpha: float, a: int, b: int, beta: float | None = None) -> float:
    """4 pi^2 times the integral of r^3 (alpha + r - 1) over [1, 1 + a/b - alpha].

    This is the change of the Calabi invariant of the band twist when the
    disk is enlarged from radius 1 to radius 1 + a/b - alpha.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    p = a / b
    if p < alpha or (beta is not None and p >= beta):
        raise ValueError(f"a/b = {p} outside ({alpha}, {beta})")
    rho = 1.0 + p - alpha

    def antiderivative(r):
        return (alpha - 1.0) * r**4 / 4.0 + r**5 / 5.0

    return 4.0 * np.pi**2 * (antiderivative(rho) - antiderivative(1.0))
