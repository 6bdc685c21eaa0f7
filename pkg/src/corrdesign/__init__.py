"""Optimal exact designs for regression with correlated errors, via a convex
virtual-noise relaxation solved by cutting planes."""

from .criteria import Criterion, ExactDesign, efficiency, grad_phi, info_matrix_exact, phi, phi_and_grad
from .cutplane import LPProblem, SolveReport, optimize_measure, solve_lp
from .equivalence import OptimalityCertificate, calibrate, certify
from .errors import *  # noqa: F401,F403
from .exactmethods import (
    MethodResult,
    bksf,
    exhaustive,
    kriging_residuals,
    quantile_extract,
    random_extract,
    random_uniform_baseline,
    sensitivity_tilde,
)
from .instances import example
from .problem import (
    DesignGrid,
    ProblemInstance,
    default_kappa,
    load_problem,
    make_problem,
    min_eigenvalue,
    problem_from_spec,
)
from .vncore import (
    DesignMeasure,
    EquivalenceContext,
    TaylorCut,
    equivalence_context,
    info_matrix_measure,
    taylor_cut,
    virtual_noise_matrix,
)

__version__ = "0.1.0"
