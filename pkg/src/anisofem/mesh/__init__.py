"""Triangulations, node patches, generators, validation and file I/O."""

from .generators import generate_patch, generate_shishkin, generate_uniform, shishkin_grid, tensor_mesh
from .io import mesh_from_dict, mesh_to_json, read_mesh, write_mesh
from .patches import (
    Classification,
    ClassificationParams,
    NodePatch,
    build_patches,
    classify,
    node_patch,
)
from .quality import (
    MeshQualityReport,
    QualityParams,
    Violation,
    min_area_rectangle,
    quasi_non_obtuse_violations,
    validate_mesh,
)
from .triangulation import (
    Edge,
    Point2,
    Triangulation,
    TriangleGeometry,
    build_triangulation,
    triangle_geometry,
)

__all__ = [
    "Classification",
    "ClassificationParams",
    "Edge",
    "MeshQualityReport",
    "NodePatch",
    "Point2",
    "QualityParams",
    "Triangulation",
    "TriangleGeometry",
    "Violation",
    "build_patches",
    "build_triangulation",
    "classify",
    "generate_patch",
    "generate_shishkin",
    "generate_uniform",
    "mesh_from_dict",
    "mesh_to_json",
    "min_area_rectangle",
    "node_patch",
    "quasi_non_obtuse_violations",
    "read_mesh",
    "shishkin_grid",
    "tensor_mesh",
    "triangle_geometry",
    "validate_mesh",
    "write_mesh",
]
