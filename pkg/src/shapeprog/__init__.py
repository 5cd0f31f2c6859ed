"""Compiler and differentiable executor for 3D shape programs.

Parse a small DSL of draw and loop statements, lower programs into posed
cuboid/cylinder primitives, render them to point clouds and voxel grids,
score reconstructions with Chamfer and coverage losses, and fit the
continuous program parameters to a target by gradient descent.
"""

from .dsl import (
    Block,
    Diagnostic,
    ParseError,
    Program,
    RegistryError,
    Statement,
    StatementDef,
    StatementRegistry,
    builtin_registry,
    format_program,
    parse_program,
    register_statement,
    validate_program,
)
from .geometry import (
    distance_cuboid,
    distance_cylinder,
    distance_primitive,
    distance_set,
    surface_area,
)
from .gradients import (
    GradientVector,
    ParameterVector,
    apply_parameters,
    evaluate_loss,
    extract_parameters,
    finite_difference_check,
    loss_with_gradient,
)
from .io import Mesh, read_binvox, read_obj, sample_mesh, write_binvox
from .losses import LossConfig, chamfer, coverage_loss
from .lowering import (
    LoweringError,
    PrimitiveSet,
    TransformedPrimitive,
    lower_program,
    statement_to_primitive,
    unroll_block,
)
from .optimizer import OptimConfig, fit
from .renderer import PointCloud, RenderConfig, VoxelGrid, sample_points, voxelize

__version__ = "0.1.0"

__all__ = [
    "Block",
    "Diagnostic",
    "GradientVector",
    "LossConfig",
    "LoweringError",
    "Mesh",
    "OptimConfig",
    "ParameterVector",
    "ParseError",
    "PointCloud",
    "PrimitiveSet",
    "Program",
    "RegistryError",
    "RenderConfig",
    "Statement",
    "StatementDef",
    "StatementRegistry",
    "TransformedPrimitive",
    "VoxelGrid",
    "apply_parameters",
    "builtin_registry",
    "chamfer",
    "coverage_loss",
    "distance_cuboid",
    "distance_cylinder",
    "distance_primitive",
    "distance_set",
    "evaluate_loss",
    "extract_parameters",
    "finite_difference_check",
    "fit",
    "format_program",
    "loss_with_gradient",
    "lower_program",
    "parse_program",
    "read_binvox",
    "read_obj",
    "register_statement",
    "sample_mesh",
    "sample_points",
    "statement_to_primitive",
    "surface_area",
    "unroll_block",
    "validate_program",
    "voxelize",
    "write_binvox",
]
