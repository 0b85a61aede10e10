"""eigenlab: energy-minimizing maps to spheres and extremal metrics at desk scale.

Build discretized closed manifolds (flat tori, icospheres, products, mapping
tori), minimize the conformally invariant dimension-matched energy of circle-
and sphere-valued maps, conformally rescale by the density to produce
candidate extremal metrics, and certify them against the discrete
Laplace-Beltrami spectrum.
"""

from .circle import (
    CircleClass,
    CircleMap,
    SolveReport,
    align_rotation,
    class_from_winding,
    density,
    min_density,
    minimize,
    p_energy,
    p_energy_gradient,
)
from .errors import (
    ClassMismatch,
    ConfigError,
    DegenerateConformalFactor,
    DegenerateDensity,
    DegreeIllConditioned,
    EigensolverFailure,
    InvalidGeometry,
    InvalidGluing,
    LabError,
    MeshTooCoarse,
    MetricNotPhiInvariant,
    NoConvergence,
    NotAProduct,
    SpectrumTooShallow,
    UnsupportedDimension,
    UnsupportedTopology,
)
from .extremal import (
    ExtremalCandidate,
    eigenmap_residual,
    normalize_volume,
    rescale_to_unit_density,
    run_extremal_pipeline,
)
from .mesh import (
    Mesh,
    MetricField,
    SphereConstants,
    build_flat_circle,
    build_flat_torus,
    build_icosphere,
    build_mapping_torus,
    build_product,
    build_unit_circle,
    conformal_scale,
    dump_mesh,
    load_mesh,
    quarter_turn_permutation,
    sphere_constants,
    volume,
)
from .operators import Operators, assemble_operators
from .sphere import (
    BoundReport,
    SphereMap,
    fiber_degree,
    lower_bound,
    map_degree,
    minimize_sphere,
    projection_map,
    sphere_energy,
    verify_bound_chain,
)
from .spectrum import (
    GapReport,
    SpectrumResult,
    cluster_eigenvalues,
    eigenvalue_functional,
    extremality_gap_check,
    laplace_spectrum,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
