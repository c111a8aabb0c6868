"""JSON mesh files.

Format::

    {"index_base": 0, "points": [[x, y], ...], "triangles": [[i, j, k], ...],
     "boundary_nodes": [...]}

Coordinates are written with 17 significant digits so a write/read round
trip reproduces every double exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import MeshError, MeshIOError, ParseError
from .triangulation import Triangulation

REQUIRED_KEYS = ("points", "triangles")


def mesh_to_json(mesh: Triangulation, index_base: int = 0) -> str:
    pts = ",\n    ".join(f"[{x:.17g}, {y:.17g}]" for x, y in mesh.points.tolist())
    tris = ",\n    ".join(json.dumps([int(v) + index_base for v in t]) for t in mesh.triangles.tolist())
    bnd = json.dumps([int(v) + index_base for v in mesh.boundary_nodes.tolist()])
    return (
        "{\n"
        f'  "index_base": {index_base},\n'
        f'  "points": [\n    {pts}\n  ],\n'
        f'  "triangles": [\n    {tris}\n  ],\n'
        f'  "boundary_nodes": {bnd}\n'
        "}\n"
    )


def write_mesh(mesh: Triangulation, path, index_base: int = 0) -> None:
    try:
        Path(path).write_text(mesh_to_json(mesh, index_base))
    except OSError as exc:
        raise MeshIOError(f"cannot write mesh to {path}: {exc}") from exc


def _check_indices(values: np.ndarray, base: int, n_points: int, what: str) -> None:
    bad = values[(values < base) | (values >= base + n_points)]
    if bad.size:
        raise ParseError(
            f"{what} index {int(bad[0])} out of range for index_base={base} "
            f"and {n_points} points"
        )


def mesh_from_dict(data: dict) -> Triangulation:
    if not isinstance(data, dict):
        raise ParseError("mesh file must hold a JSON object")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ParseError(f'mesh file missing "{key}"')
    base = data.get("index_base", 0)
    if base not in (0, 1):
        raise ParseError(f"index_base must be 0 or 1, got {base!r}")
    try:
        points = np.asarray(data["points"], dtype=float)
        triangles = np.asarray(data["triangles"], dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed points or triangles: {exc}") from exc
    if points.ndim != 2 or points.shape[1] != 2:
        raise ParseError(f"points must be an (n, 2) array, got shape {points.shape}")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise ParseError(f"triangles must be an (m, 3) array, got shape {triangles.shape}")
    _check_indices(triangles.ravel(), base, len(points), "triangle")
    boundary = None
    if "boundary_nodes" in data:
        boundary = np.asarray(data["boundary_nodes"], dtype=np.int64).ravel()
        _check_indices(boundary, base, len(points), "boundary node")
        boundary = boundary - base
    try:
        return Triangulation(points, triangles - base, boundary)
    except MeshError as exc:
        raise ParseError(f"invalid mesh: {exc}") from exc


def read_mesh(path) -> Triangulation:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshIOError(f"cannot read mesh {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return mesh_from_dict(data)
