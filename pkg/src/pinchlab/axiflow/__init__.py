"""Axisymmetric level-set mean curvature flow."""

from .raster import (
    EmptyZeroSetError,
    ScaledTorus,
    ShapeOutOfBoundsError,
    Sphere,
    hausdorff_zero_sets,
    rasterize,
    zero_set_segments,
)
from .snapshot import SnapshotFormatError, read_snapshot, write_snapshot
from .solver import (
    Field,
    Grid2D,
    InstabilityError,
    RunRecord,
    Schedule,
    curvature_speed,
    enclosed_volume,
    evolve,
    reinitialize,
    resume_field,
    speed,
    sphere_area_constant,
    step,
)

__all__ = [
    "EmptyZeroSetError",
    "Field",
    "Grid2D",
    "InstabilityError",
    "RunRecord",
    "Schedule",
    "ScaledTorus",
    "ShapeOutOfBoundsError",
    "SnapshotFormatError",
    "Sphere",
    "curvature_speed",
    "enclosed_volume",
    "evolve",
    "hausdorff_zero_sets",
    "rasterize",
    "read_snapshot",
    "reinitialize",
    "resume_field",
    "speed",
    "sphere_area_constant",
    "step",
    "write_snapshot",
    "zero_set_segments",
]
