"""Robust evaluation and policy improvement for MDPs with a non-rectangular L_p ball of kernels."""
from .gradient import GradientReport, RpgInterrupted, RpgTrace, policy_gradient, rpg_run, simplex_project
from .lp import conjugate, dual_vector, gstd, in_B, in_K, mean_project, p_mean, sample_B, sample_K
from .mdp import (Mdp, MdpFormatError, MdpValidationError, NegativeKernelEntry, NominalEval, RankOnePerturbation,
                  apply_perturbation, load_mdp, load_policy, nominal_eval, policy_average, policy_matrices,
                  q_value, random_mdp, save_mdp, save_policy, uniform_policy, validate_mdp, validate_policy)
from .robust import (BaselineResult, ConsistencyFailure, InvalidDenominator, NonBracketed, NonContractionWarning,
                     PenaltyCertificate, SamplingExhausted, UncertaintySpec, baseline_local_bk,
                     baseline_random_kernel, baseline_random_rank_one, binary_search_evaluate,
                     dual_penalty_direct, penalty_operator, recover_worst_kernel, rect_robust_eval)
from .spectral import DegenerateMatrix, SpectralSolution, local_refine, random_search, spectral_bounds, spectral_solve
