"""Berry-Esseen bounds for maxima of vector-valued martingales: smooth-max
calculus, Gaussian bounds, martingale scenarios and a Monte Carlo harness."""

from .bounds import (
    BoundInputs,
    BoundReport,
    bound_report,
    corollary_bound,
    d1_bound,
    gamma_floor_check,
    optimal_epsilon,
    theorem1_bound,
    variance_stats,
)
from .errors import InputError, PreconditionError
from .gaussian import (
    CovMatrix,
    SeedStream,
    anti_concentration_value,
    estimate_levy_concentration,
    estimate_max_moment,
    max_moment_bound,
    sample_gaussian,
)
from .harness import (
    KolmogorovEstimate,
    MCConfig,
    dkw_halfwidth,
    estimate_kolmogorov,
    run_sweep,
    smoothed_distance_diagnostic,
    two_sample_distance,
)
from .martingale import (
    AtomStatistics,
    CoupledPath,
    F0Atom,
    ScenarioSpec,
    compute_atom_statistics,
    make_scenario,
    sample_coupled_path,
)
from .smooth_max import (
    SmoothMaxParams,
    SmoothStepSpec,
    directional_d1,
    directional_d2,
    directional_d3,
    explicit_coefficients,
    smooth_max,
    smooth_step,
    smoothed_indicator,
    softmax_weights,
)

__version__ = "0.1.0"
