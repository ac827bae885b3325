"""The gradient-like field on periodic sequences and its invariant disks."""

from .charts import MeshChart, MeshResolutionError
from .disk import CacheVersionError, DeltaDisk, DiskSettings, delta_disk_sample, make_levels, read_cache_meta
from .heteroclinic import ConvergenceError, GradientLine, HeteroclinicSolver, linearize_origin
from .isotopy import DiskMaps, finite_order_map, good_isotopy
from .space import (ActionSpace, DomainError, SingularCircle, a_ab, action_h, c_ab, finite_difference_gradient,
                    flow, in_V_prime, linking_form_L, lipschitz_certificate, periodic_numerators, projections,
                    singular_circles, zeta)

__all__ = [
    "ActionSpace", "CacheVersionError", "ConvergenceError", "DeltaDisk", "DiskMaps", "DiskSettings",
    "DomainError", "GradientLine", "HeteroclinicSolver", "MeshChart", "MeshResolutionError", "SingularCircle",
    "a_ab", "action_h", "c_ab", "delta_disk_sample", "finite_difference_gradient", "finite_order_map", "flow",
    "good_isotopy", "in_V_prime", "linearize_origin", "linking_form_L", "lipschitz_certificate", "make_levels",
    "periodic_numerators", "projections", "read_cache_meta", "singular_circles", "zeta",
]
