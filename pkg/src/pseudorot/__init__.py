"""Finite-dimensional models of disk pseudo-rotations and their Calabi invariant."""

from .genfun import FactorChain, PolarFactor, UntwistedFactor, factor_polar, verify_untwisted_lipschitz
from .maps import AngularProfile, ConstantProfile, IsotopyPath, PolarMap, rotation, twist_isotopy

__version__ = "0.1.0"

__all__ = [
    "AngularProfile", "ConstantProfile", "FactorChain", "IsotopyPath", "PolarFactor", "PolarMap",
    "UntwistedFactor", "factor_polar", "rotation", "twist_isotopy", "verify_untwisted_lipschitz",
]
