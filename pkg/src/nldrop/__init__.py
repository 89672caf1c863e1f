"""Nonlocal liquid-drop energies on general kernels.

Energy functionals built from an attractive riesz term, a kernel-driven
nonlocal perimeter, and an optional repulsive background; mass thresholds
beyond which minimizers cannot exist; cut-defect diagnostics that certify
nonexistence on concrete shapes; and competitor families (ball splittings,
voxel local search) that exhibit the splitting behaviour directly.
"""

from .energy import (
    DecompositionCheck,
    EnergyParams,
    EnergyReport,
    ScalingReport,
    background,
    check_perimeter_decomposition,
    check_riesz_decomposition,
    interaction,
    perimeter,
    riesz,
    scaling_report,
    total_energy,
)
from .errors import (
    BracketError,
    ConfigError,
    DomainError,
    NldropError,
    ParameterError,
    PreconditionError,
    ShapeFormatError,
)
from .families import (
    FamilySearchResult,
    SubadditivityProbe,
    TwoBallConfig,
    single_ball_energy,
    split_advantage,
    two_ball_energy,
    voxel_local_search,
    weak_subadditivity_probe,
)
from .geometry import (
    BallConfig,
    Halfspace,
    SlicedShape,
    VoxelShape,
    ball_of_volume,
    indicator,
    load_balls,
    load_voxel,
    random_blob,
    random_disjoint_pair,
    save_balls,
    save_voxel,
    scale,
    slice_shape,
    translate,
    unit_ball_volume,
    unit_sphere_area,
    volume,
)
from .isoperimetry import (
    IsoperimetryCheck,
    bound_constant,
    isoperimetric_check,
    run_suite,
    volume_cap,
)
from .kernels import (
    KernelAudit,
    KernelConditionReport,
    KernelSpec,
    epsilon_min,
    eval_kernel,
    eval_kernel_radial,
    radial_tail_integral,
    validate_conditions,
)
from .quadrature import (
    IntegralEstimate,
    PointSingularity,
    QuadratureSpec,
    double_integral,
    complement_double_integral,
    integral_over,
    sphere_average,
    voxelize,
)
from .slicing import (
    AveragedBoundReport,
    LayerCakeChecks,
    ScanResult,
    SliceDefectRecord,
    averaged_mass_bound,
    layer_cake_checks,
    scan,
    splitting_defect,
    sphere_positive_integral,
)
from .thresholds import (
    DimensionConstants,
    GeneralConstants,
    ThresholdRecord,
    critical_mass,
    general_constants,
    general_critical_mass,
    phi,
)

__version__ = "0.1.0"

__all__ = [
    "AveragedBoundReport",
    "BallConfig",
    "BracketError",
    "ConfigError",
    "DecompositionCheck",
    "DimensionConstants",
    "DomainError",
    "EnergyParams",
    "EnergyReport",
    "FamilySearchResult",
    "GeneralConstants",
    "Halfspace",
    "IntegralEstimate",
    "IsoperimetryCheck",
    "KernelAudit",
    "KernelConditionReport",
    "KernelSpec",
    "LayerCakeChecks",
    "NldropError",
    "ParameterError",
    "PointSingularity",
    "PreconditionError",
    "QuadratureSpec",
    "ScalingReport",
    "ScanResult",
    "ShapeFormatError",
    "SliceDefectRecord",
    "SlicedShape",
    "SubadditivityProbe",
    "ThresholdRecord",
    "TwoBallConfig",
    "VoxelShape",
    "averaged_mass_bound",
    "background",
    "ball_of_volume",
    "bound_constant",
    "check_perimeter_decomposition",
    "check_riesz_decomposition",
    "complement_double_integral",
    "critical_mass",
    "double_integral",
    "epsilon_min",
    "eval_kernel",
    "eval_kernel_radial",
    "general_constants",
    "general_critical_mass",
    "indicator",
    "integral_over",
    "interaction",
    "isoperimetric_check",
    "layer_cake_checks",
    "load_balls",
    "load_voxel",
    "perimeter",
    "phi",
    "radial_tail_integral",
    "random_blob",
    "random_disjoint_pair",
    "riesz",
    "run_suite",
    "save_balls",
    "save_voxel",
    "scale",
    "scaling_report",
    "scan",
    "single_ball_energy",
    "slice_shape",
    "sphere_average",
    "sphere_positive_integral",
    "split_advantage",
    "splitting_defect",
    "total_energy",
    "translate",
    "two_ball_energy",
    "unit_ball_volume",
    "unit_sphere_area",
    "validate_conditions",
    "volume",
    "volume_cap",
    "voxel_local_search",
    "voxelize",
    "weak_subadditivity_probe",
]
