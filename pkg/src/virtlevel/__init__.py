"""Numerical laboratory for virtual levels of few-body Schrödinger operators."""

__version__ = "0.1.0"

from .errors import (BracketError, ConvergenceError, DomainError, InconsistencyError, ResolutionError,
                     ResourceError, VirtLevelError)
from .geometry import ParticleSystem, Partition, one_particle_system
from .discretize import (Bump, DecayCertificate, Gaussian, GridSpec, PotentialSpec, Step, WeightSpec,
                         assemble_hamiltonian, hvz_floor, identical_pairs, one_body)
from .spectral import counting_below, lowest_eigenpairs
from .hardy import hardy_constant, rayleigh_estimate_CH, sector_angles, verify_scalar_hardy
from .virtual_level import coupling_threshold, detect_via_perturbation, detect_virtual_level, tau_zero
from .decay import decay_study, resonance_sequence, tail_exponent_fit, threshold_function, weighted_norm
from .localization import build_cone_partition, build_scalar_cutoff, ims_decompose
from .efimov import boundary_lemma_check, count_vs_coupling, counting_curve, exterior_positivity_check

__all__ = [
    "BracketError", "ConvergenceError", "DomainError", "InconsistencyError", "ResolutionError",
    "ResourceError", "VirtLevelError", "ParticleSystem", "Partition", "one_particle_system", "Bump",
    "DecayCertificate", "Gaussian", "GridSpec", "PotentialSpec", "Step", "WeightSpec",
    "assemble_hamiltonian", "hvz_floor", "identical_pairs", "one_body", "counting_below",
    "lowest_eigenpairs", "hardy_constant", "rayleigh_estimate_CH", "sector_angles", "verify_scalar_hardy",
    "coupling_threshold", "detect_via_perturbation", "detect_virtual_level", "tau_zero", "decay_study",
    "resonance_sequence", "tail_exponent_fit", "threshold_function", "weighted_norm",
    "build_cone_partition", "build_scalar_cutoff", "ims_decompose", "boundary_lemma_check",
    "count_vs_coupling", "counting_curve", "exterior_positivity_check",
]
