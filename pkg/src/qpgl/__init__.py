"""Finite-volume numerics for the Aubry-dual lattice operator of quasi-periodic
Schrödinger operators: Green's functions, resonance sets and the resolvent
estimates of a momentum-space multi-scale analysis."""

__version__ = "0.1.0"

from .lattice import (BlockStructure, Region, RegionDescriptor, StructuralError, block_dot, cube,
                      elementary_regions_at_scale, enumerate_region, sup_norm)
from .potential import (ConfigurationError, InvariantError, PotentialModel, evaluate,
                        from_named_model, verify_decay)
from .dual_green import (DualMatrix, GreenReport, NearSingular, assemble, diagonal_symbol, green,
                         ldt_check)
from .resonance import (PreconditionError, ResonanceSpec, ScaleSchedule, cartan_probe,
                        double_resonance_scan, first_step_coupling, first_step_delta,
                        frequency_diagnostic, in_resonance, no_resonance_far_field,
                        section_measure)
from .msa_checks import (BlochSample, CheckReport, LatticeVector, RescaleMap, absence_witness,
                         build_covering, duality_residual, poisson_residual, rescale,
                         spectral_window_check, unrescale, verify_coupling_decay,
                         verify_coupling_norm, verify_perturbation_lemma)

__all__ = [name for name in dir() if not name.startswith("_")]
