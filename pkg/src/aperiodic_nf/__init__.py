"""Partial normal forms and Nekhoroshev constants for slowly, aperiodically forced Hamiltonians."""
from .ftseries import (Caps, DomainParams, FTSeries, StructureError, action_polynomial, add,
                       allclose, evaluate, fourier_norm, from_records, harmonic_split,
                       majorant_norm, mul, partial_xi, poisson_bracket, to_records)
from .normalizer import (HamiltonianSpec, NormalFormResult, SmallDivisorError, E_op,
                         eta_image, lie_derivative, map_coordinates, normalize,
                         normalize_autonomous, psi_step, solve_homological)
from .resonance import (ResonanceModule, check_nonresonance, convexity_constants,
                        fast_drift_distance, is_resonance_module)
from .estimator import (AnalyticConstants, SequenceTriple, StabilityPlan, delta_threshold,
                        f_tilde, lambda_param, minunmezzo_check, nekhoroshev_plan,
                        remainder_bound, run_recurrences, t_star)
from .dynamics import Trajectory, drift_report, integrate, vector_field

__version__ = "0.1.0"
