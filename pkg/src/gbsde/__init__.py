"""Reflected backward SDEs driven by G-Brownian motion: lattice and
finite-difference solvers, penalization, optimal stopping and
uncertain-volatility American pricing."""

from .errors import (
    ConfigurationError,
    ConvergenceError,
    GBSDEError,
    ProblemInputError,
    SizeError,
    UnsupportedCaseError,
)
from .gcore import (
    SpaceGrid,
    Stencil,
    TimeGrid,
    VolatilityBand,
    VolatilityControl,
    g_eval,
    simulate_control_paths,
    step_sup_expectation,
    sup_expectation,
)
from .lattice import (
    MarkovianProblem,
    SolutionSurface,
    complementarity_residual,
    monte_carlo_lower_bound,
    rollback,
)
from .market import (
    ClaimSpec,
    MarketModel,
    bs_closed_form,
    crr_american_oracle,
    extract_hedge,
    price_american,
    price_european,
)
from .pde import PDEProblem, assemble_FH, cross_validate, solve_obstacle_pde, solve_pde, solve_penalized_pde
from .rbsde import LadderConfig, PenalizationLadder, run_ladder, uniform_bound_report
from .stopping import brute_force_oracle, optimal_stopping_value, optional_stopping_check

__version__ = "0.1.0"
