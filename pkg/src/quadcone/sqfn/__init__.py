"""FFT-based square-function, wave-envelope, and tube-geometry measurements."""

from .grid import (
    CapProjection,
    GridField,
    GridInfeasible,
    GridPlan,
    PartitionGap,
    ResolutionTooCoarse,
    build_cell_caps,
    cap_project,
    plan_grid,
    spectral_mass_outside,
    sq_ratio,
    square_sum_field,
    synthesize_field,
)

__all__ = [
    "CapProjection",
    "GridField",
    "GridInfeasible",
    "GridPlan",
    "PartitionGap",
    "ResolutionTooCoarse",
    "build_cell_caps",
    "cap_project",
    "plan_grid",
    "spectral_mass_outside",
    "sq_ratio",
    "square_sum_field",
    "synthesize_field",
]
