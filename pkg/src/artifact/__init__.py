"""Shape optimization over convex planar bodies parametrized by gauge functions.

A convex body containing the origin is encoded by its gauge function
``u(theta)`` via ``{r < 1/u(theta)}``; convexity is the linear cone
``u'' + u >= 0`` and corners are point masses of that measure.  The package
provides the periodic calculus (Fourier seminorms, curvature measures,
Poincaré ratios), geometric functionals with gradients and Hessian forms, a
P1 finite-element solver for Dirichlet energies and the first Laplace
eigenvalue with their shape gradients, a projected-gradient /
augmented-Lagrangian optimizer on the discretized cone with KKT multiplier
recovery, regularity diagnostics (corner detection, corner-gap bounds,
coercivity probes), and a CLI around reproducible problem documents.
"""

from .periodic import (
    CurvatureMeasure,
    PeriodicField,
    SpectralCoeffs,
    curvature_measure,
    dirichlet_integral,
    poincare_ratio,
    refine_field,
    sobolev_norm,
    sobolev_seminorm,
    spectral_coeffs,
    support_arc_length,
)
from .body import (
    DomainError,
    GaugeBody,
    PolygonBody,
    SupportBody,
    area,
    area_gradient,
    area_hessian_form,
    gauge_to_polygon,
    gauge_to_support,
    perimeter,
    perimeter_gradient,
    perimeter_hessian_form,
    polar_dual,
    polygon_to_gauge,
    support_functionals,
)
from .pde import (
    EigenPair,
    FemSolution,
    Mesh,
    dirichlet_energy,
    energy_shape_gradient,
    lambda1,
    lambda1_shape_gradient,
    mesh_convex,
)
from .functional import (
    ConstraintSpec,
    EqualityConstraint,
    EvalReport,
    FunctionalSpec,
    Kind,
    Term,
    constraint_eval,
    evaluate,
    pairing,
    second_form,
)
from .optimize import (
    ConeConstraint,
    InfeasibleError,
    KKTReport,
    OptimizationResult,
    OptimizerConfig,
    cone_matrix,
    minimize,
    project_feasible,
    recover_multipliers,
)
from .analyze import (
    ClassifyConfig,
    CoercivityFit,
    DerivativeCheckReport,
    RegularityVerdict,
    check_gradient,
    classify,
    coercivity_probe,
    corner_gap_bound,
    fd_second_form,
    localized_direction,
    split_atoms,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # periodic
    "PeriodicField",
    "SpectralCoeffs",
    "CurvatureMeasure",
    "spectral_coeffs",
    "sobolev_seminorm",
    "sobolev_norm",
    "curvature_measure",
    "dirichlet_integral",
    "poincare_ratio",
    "support_arc_length",
    "refine_field",
    # body
    "DomainError",
    "GaugeBody",
    "SupportBody",
    "PolygonBody",
    "area",
    "perimeter",
    "area_gradient",
    "perimeter_gradient",
    "area_hessian_form",
    "perimeter_hessian_form",
    "support_functionals",
    "gauge_to_support",
    "polar_dual",
    "gauge_to_polygon",
    "polygon_to_gauge",
    # pde
    "Mesh",
    "FemSolution",
    "EigenPair",
    "mesh_convex",
    "dirichlet_energy",
    "lambda1",
    "energy_shape_gradient",
    "lambda1_shape_gradient",
    # functional
    "Kind",
    "Term",
    "FunctionalSpec",
    "EqualityConstraint",
    "ConstraintSpec",
    "EvalReport",
    "evaluate",
    "constraint_eval",
    "pairing",
    "second_form",
    # optimize
    "ConeConstraint",
    "OptimizerConfig",
    "KKTReport",
    "OptimizationResult",
    "InfeasibleError",
    "cone_matrix",
    "project_feasible",
    "minimize",
    "recover_multipliers",
    # analyze
    "ClassifyConfig",
    "RegularityVerdict",
    "CoercivityFit",
    "DerivativeCheckReport",
    "split_atoms",
    "classify",
    "corner_gap_bound",
    "localized_direction",
    "coercivity_probe",
    "check_gradient",
    "fd_second_form",
]
