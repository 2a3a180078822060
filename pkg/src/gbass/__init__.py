"""Geometric Bass martingales between prescribed marginals.

Reduces the geometric martingale fitting problem on positive marginals to its
arithmetic counterpart by a reciprocal measure reflection, solves the
resulting fixed-point system, and exposes transport values, duality gaps,
marginal flows and Monte Carlo path engines.
"""

from .measures import (
    GridMeasure,
    MeasureError,
    OrderReport,
    ComponentDecomposition,
    MeasureComponent,
    make_grid_measure,
    normalize_to_unit_mean,
    moment,
    cdf,
    quantile,
    potential,
    check_convex_order,
    irreducible_components,
    reflect_measure,
    wasserstein1,
)
from .gaussian import (
    MonotoneFn,
    StepFn,
    CallableFn,
    TableFn,
    gauss_pdf,
    gauss_cdf,
    gauss_quantile,
    smoothed_cdf,
    smoothed_quantile,
    heat_convolve,
    heat_convolve_deriv,
)
from .bass_solver import (
    SolverParams,
    BassComponentSolution,
    BassSolution,
    ConvergenceError,
    monotone_rearrangement,
    update_alpha,
    solve_component,
    solve_decomposed,
    eval_fn,
    eval_fn_deriv,
    terminal_law,
)
from .geometric_bridge import (
    GeometricSolution,
    to_arithmetic,
    solve_geometric,
    marginal_flow,
    sde_volatility,
)
from .duality_values import (
    ValueReport,
    max_covariance,
    max_covariance_smoothed,
    component_dual_value,
    primal_value,
    dual_value,
    make_value_report,
)
from .simulate import (
    PathEnsemble,
    SimulationStats,
    simulate_arithmetic,
    simulate_geometric_weighted,
    simulate_geometric_sde,
    ensemble_stats,
    export_paths_csv,
)

__version__ = "0.1.0"
