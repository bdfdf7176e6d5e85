"""Numerical sufficiency analysis for families of quantum states on
finite-dimensional matrix algebras."""

from .algebra import (BlockStructure, MatrixStarAlgebra, center, commutant,
                      conditional_expectation, fixed_point_algebra,
                      full_algebra, generate_algebra, intersect,
                      modular_invariance_check, multiplicative_domain,
                      relative_commutant, restricted_density,
                      structure_decomposition)
from .channels import (Channel, choi_matrix, choi_of_map, depolarizing_channel,
                       embedding_channel, identity_channel,
                       partial_trace_channel, pinching_channel,
                       schwarz_defect, unitary_channel)
from .divergences import (AUDIT_T_GRID, DEFAULT_T_GRID, CocycleSample,
                          ModularAudit, connes_cocycle,
                          equality_intertwiner_residual, modular_flow,
                          monotonicity_gap, relative_entropy,
                          relative_modular_audit, transition_probability,
                          von_neumann_entropy)
from .expfam import (ExponentialFamily, LogPartition, RegionExitError,
                     commutative_family_check, density_at,
                     expfam_channel_sufficiency, expfam_subalgebra_sufficiency,
                     log_partition, mean_values, moment_match, perturbed_state)
from .linalg import (frechet_exp, imaginary_power, kron, mat_fun,
                     partial_trace, pinv_on_support, psd_power,
                     resolvent_quadrature_check, spectral, support_projection)
from .rand import DEFAULT_SEED, rng
from .ssa import (NotAnEqualityCase, SSAStructure, TripartiteState,
                  build_ssa_equality_state, ssa_equality_structure, ssa_gap)
from .states import (DensityMatrix, Experiment, build_dominating_state,
                     compress_experiment, petz_conditional_expectation,
                     petz_dual)
from .sufficiency import (ChannelStructure, DecompositionError,
                          FactorizationResult, InsufficiencyError,
                          SDecomposition, SufficiencyVerdict,
                          channel_structure, channel_sufficiency,
                          decompose_L_factors, factorization_check,
                          minimal_sufficient_algebra, s_decomposition,
                          state_preserving_structure, subalgebra_sufficiency)

__version__ = "0.1.0"
