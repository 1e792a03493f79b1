"""Simulation and numerical-analysis lab for a planar quadratic contact
process: stochastic lattice dynamics, their deterministic density
recursion, directional spreading speeds, and the triangular
vacant-region comparison process."""

__version__ = "0.1.0"

from .kernel import (DiscreteKernel, Kernel1D, KernelSpec, build_kernel,
                     discretize, marginal_1d, sample_offset)
from .mean_field import Equilibria, Params, equilibria, iterate_mean_field
from .ide import Field2D, Profile1D, apply_Q_1d, apply_Q_2d, evolve
from .wavespeed import (PhiData, PsiSpec, SpeedResult, build_phi,
                        classify_speed, estimate_cstar,
                        front_speed_tracking, make_psi, weinberger_step)
from .lattice import (BoxStats, LatticeState, StepReport, box_stats,
                      coupling_discrepancy, init, step)
from .comparison import (ComparisonConfig, ContainmentReport, ErrorPoint,
                         RegionSet, VacantRegion, check_containment,
                         detect_errors, evolve_regions, h_field,
                         make_comparison_config, spawn_region,
                         vacant_membership)
from .rng import LatticeRng

__all__ = [
    "__version__",
    "KernelSpec", "DiscreteKernel", "Kernel1D", "build_kernel", "discretize",
    "marginal_1d", "sample_offset",
    "Params", "Equilibria", "equilibria", "iterate_mean_field",
    "Field2D", "Profile1D", "apply_Q_2d", "apply_Q_1d", "evolve",
    "PsiSpec", "SpeedResult", "PhiData", "make_psi", "weinberger_step",
    "classify_speed", "estimate_cstar", "front_speed_tracking", "build_phi",
    "LatticeState", "BoxStats", "StepReport", "init", "step", "box_stats",
    "coupling_discrepancy",
    "ComparisonConfig", "ErrorPoint", "VacantRegion", "RegionSet",
    "ContainmentReport", "make_comparison_config", "spawn_region",
    "evolve_regions", "vacant_membership", "h_field", "detect_errors",
    "check_containment",
    "LatticeRng",
]
