"""Numerical laboratory for the modified Calabi flow on toric surfaces."""

from .polygon import (
    ClippedPolygon,
    DelzantPolygon,
    Facet,
    ValidationReport,
    hirzebruch_trapezoid,
    load_polygon,
    save_polygon,
    standard_simplex,
    transform_polygon,
    unit_square,
    validate,
)
from .poly2 import Polynomial2D
from .potential import (
    AffineFunction,
    Jet,
    SymplecticPotential,
    convexity_probe,
    eval_derivatives,
    load_potential,
    normalize,
    restrict_to_segment,
    save_potential,
    transform_potential,
)
from .curvature import (
    CurvatureSample,
    curvature_sample,
    edge_curvature,
    rm_norm,
    rm_norm_at,
    scalar_curvature,
    scalar_curvature_at,
    sup_rm_estimate,
)
from .functionals import (
    EnergyReport,
    QuadratureRule,
    average_scalar_curvature,
    calabi_energy_mod,
    energy_report,
    l2_distance,
    l_functional,
    mabuchi_relative,
    solve_theta,
)
from .flow import (
    FlowParams,
    FlowRecord,
    FlowState,
    ModifiedCalabiFlow,
    normalize_trajectory,
    write_history_csv,
)
from .stability import (
    CreaseFunction,
    SegmentTriple,
    diameter_estimate,
    l_of_crease,
    lambda_estimate,
    m_condition_estimate,
    m_condition_value,
    ray_length,
)
from .errors import (
    ConfigError,
    DegeneracyError,
    DomainError,
    FlowStallError,
    ToricFlowError,
)

__version__ = "0.1.0"
