"""Suspension flows with analytically known invariant measures.

Build a flow from a base map, its ergodic invariant measure, and a roof
function bounded away from zero; compute escape, hitting, and first-return
times to cylinder and graph sets; and check the mean-return-time identities
three ways: seeded Monte Carlo, analytic closed forms, and an exact
rational-arithmetic oracle on finite permutation models.
"""

from .errors import (
    BadSupBoundWarning,
    ConfigurationError,
    EmptyProjection,
    IdentityCheckFailed,
    InvalidExitWidth,
    KacflowError,
    NonRecurrentWithinBudget,
    RoofBoundViolation,
    RoofSupViolation,
    ScaleRangeError,
    SetValidationError,
    UnsupportedExactIntegration,
    ZeroEntropyBase,
)
from .identities import (
    EstimateReport,
    GraphReturnBreakdown,
    LinearityResult,
    LinearityRow,
    check_unnormalized_identity,
    cross_section_mean_return,
    cylinder_mean_escape,
    cylinder_mean_return_analytic,
    cylinder_rhs_forms,
    entropy_quotient,
    exit_region_limit,
    exit_region_limit_target,
    graph_mean_return_analytic,
    linearity_scan,
    mc_mean_return,
    parallel_sides_mean_return,
)
from .recurrence import (
    CylinderSet,
    GraphSet,
    adjusted_return_time,
    bar_mu_of_set,
    escape_time,
    exit_region,
    hitting_time,
    member,
    projection_integral,
    return_orbit_stats,
    validate_flow_set,
)
from .roofs import (
    BaseFunction,
    ConstantFunction,
    ExprFunction,
    PiecewiseConstant,
    RoofFunction,
    birkhoff_roof_sum,
    eval_roof,
    roof_integral,
)
from .suspension import (
    FlowMeasure,
    FlowPoint,
    canonicalize,
    crossing_count,
    evolve,
    evolve_array,
    sample_bar_mu,
    sample_flow_points,
)
from .systems import (
    BaseSystem,
    DigitCylinder,
    ExpandingMap,
    FinitePermutation,
    IntervalUnion,
    IrrationalRotation,
    StateSet,
    apply_base,
    first_return_base,
    first_return_times,
    integrate_mu,
    mu_of_set,
    sample_mu,
)

__version__ = "0.1.0"
