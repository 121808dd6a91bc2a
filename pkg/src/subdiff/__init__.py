"""Solver and verification suite for subdiffusive porous-medium-type problems.

The package integrates d/dt[k conv (u - u0)] - div(A grad phi(u)) = f with
homogeneous Dirichlet data, for Sonine kernel pairs (fractional, tempered,
ultra-slow), monotone nonlinearities including the degenerate
porous-medium family, and rough integrable data handled through a
two-parameter truncation ladder.  A verification layer recomputes the
structural inequalities (contraction, entropy, energy) from stored
histories.
"""

__version__ = "0.1.0"

from .cascade import (CascadeReport, TruncationIndex, extract_limit,
                      run_cascade, truncate_data)
from .kernels import (ConvolutionWeights, KernelPair, SoECompression,
                      conv_weights, eval_k, eval_l, soe_compress,
                      sonine_residual)
from .nonlinearity import (EntropyTestFunction, NonlinearityProfile,
                           entropy_test_function, h_eps, truncate,
                           validate_slope_bound)
from .space import (Coefficient, SpatialProblem, assemble_stiffness,
                    build_mesh, coercivity_probe, l1_norm, l1_norm_spacetime)
from .special import e1_scaled, mittag_leffler_neg
from .stepper import (NewtonOptions, SolutionHistory, TimeGrid, energy_audit,
                      solve)
from .verify import (KernelSplit, VerificationReport, contraction_check,
                     entropy_battery, entropy_contraction_check,
                     entropy_residual, scalar_relaxation, weak_residual)

__all__ = [
    "__version__",
    "KernelPair", "ConvolutionWeights", "SoECompression",
    "eval_k", "eval_l", "sonine_residual", "conv_weights", "soe_compress",
    "NonlinearityProfile", "EntropyTestFunction", "entropy_test_function",
    "truncate", "h_eps", "validate_slope_bound",
    "SpatialProblem", "Coefficient", "build_mesh", "assemble_stiffness",
    "coercivity_probe", "l1_norm", "l1_norm_spacetime",
    "TimeGrid", "NewtonOptions", "SolutionHistory", "solve", "energy_audit",
    "TruncationIndex", "CascadeReport", "truncate_data", "run_cascade",
    "extract_limit",
    "KernelSplit", "VerificationReport", "contraction_check",
    "entropy_contraction_check", "weak_residual", "entropy_residual",
    "entropy_battery", "scalar_relaxation",
    "mittag_leffler_neg", "e1_scaled",
]
