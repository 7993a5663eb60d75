"""Sparse binary pairwise Markov network learning.

The L1-penalized pseudo-likelihood is solved as a single stacked L1
logistic regression (PLG), with node-wise logistic regression and a direct
proximal-gradient optimizer for comparison.
"""
from plgnet._kernels import BACKEND
from plgnet.model import (
    BinaryDataError,
    DimensionError,
    ObjectiveValue,
    SampleMatrix,
    ThetaMatrix,
    joint_pmf,
    log_partition,
    penalized_log_likelihood,
    psi_s,
    pseudo_likelihood,
    pseudo_likelihood_gradient,
)
from plgnet.transform import (
    StackedProblem,
    StructuredDesign,
    build_stacked,
    converted_objective,
    devectorize,
    pair_index,
    vectorize,
)
from plgnet.solver import (
    ConvergenceError,
    PathSolution,
    SolverConfig,
    fit_logistic_lasso,
    fit_path,
    lambda_max,
    soft_threshold,
    strong_rule_screen,
)

__version__ = "0.1.0"
