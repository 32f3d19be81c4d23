"""Nonlinear Landau-Zener dynamics and scattering toolkit."""

from .dynamics import (Affine, ModelConfig, NonlinearitySpec, Trajectory,
                       TwoLevelState, compute_Mm, gauge_to_v, integrate,
                       linear_spec, make_model, preset_bloch,
                       preset_doublewell, preset_physics, rhs)
from .errors import (ConfigError, ConvergenceError, ExtractionError,
                     IntegrationError, NLZError, NumericError)
from .linear import (complex_gamma, lz_transition, slin_coefficients,
                     slin_matrix, verify_slin_numeric)
from .operators import (CouplingOperator, ProjectorPair, block_j, block_k,
                        bump, hermitian_funcalc, matrix_coupling,
                        phase_unitary, projectors, quaternion_coupling,
                        scalar_coupling, theta_cutoff, v_matrix)
from .scattering import (AsymptoticState, ExtractionGrid, ScatteringResult,
                         WaveOperatorResult, asymptotic_ansatz,
                         extract_norm_limits, extract_scattering_state,
                         mode_populations, scattering_map, wave_operator)

__version__ = "0.1.0"
