"""Brownian-bridge Monte Carlo toolkit for the degenerate (Grushin-type)
diffusion: transition-density estimation, path-space rate functions, and
short-time asymptotics experiments."""

from grushin.paths import (
    TimeGrid,
    DiscretePath,
    RngStream,
    make_uniform_grid,
    sample_bridge,
    linear_path,
    besov_norm,
    cm_norm,
    sup_norm,
)
from grushin.functionals import GrushinParams, FunctionalValue, v_functional, running_max
from grushin.density import (
    DensityEstimate,
    estimate_density,
    conditional_density,
    on_diagonal_constant,
)
from grushin.asymptotics import (
    AsymptoticsReport,
    DegenerateBounds,
    Delta0Estimate,
    MaxProbReport,
    TaylorFit,
    degenerate_bounds,
    estimate_delta0,
    max_prob_check,
    off_diagonal_experiment,
    on_diagonal_experiment,
    taylor_experiment,
)
from grushin.variational import (
    PhiProblem,
    PsiResult,
    RateResult,
    psi_minimize,
    c_gamma,
    minimize_phi,
    asymptotic_rate_constant,
)

__version__ = "0.1.0"
