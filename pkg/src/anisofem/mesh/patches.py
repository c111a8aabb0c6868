"""Node patches (element stars) and node classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .triangulation import Triangulation


class Classification(str, enum.Enum):
    ANISOTROPIC = "anisotropic"
    REGULAR = "regular"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class ClassificationParams:
    """Thresholds turning the asymptotic relations into concrete tests.

    ``c_short`` : an edge S is short when ``|S| <= c_short * h_z``.
    ``sigma_ani`` : anisotropic nodes need ``H_z / h_z >= sigma_ani``.
    ``rho`` : member triangles of an anisotropic patch must have
        ``h_T`` and ``H_T`` within a factor ``rho`` of ``h_z`` and ``H_z``.
    ``sigma_reg`` : regular nodes need ``H_T / h_T <= sigma_reg`` throughout.
    """

    c_short: float = 2.0
    sigma_ani: float = 10.0
    rho: float = 3.0
    sigma_reg: float = 5.0


@dataclass(frozen=True)
class NodePatch:
    node_id: int
    omega_triangles: tuple[int, ...]
    S_z: tuple[int, ...]
    gamma_z: tuple[int, ...]
    ring_gamma_z: tuple[int, ...]
    H_z: float
    h_z: float
    area: float
    classification: Classification

    @property
    def long_gamma_z(self) -> tuple[int, ...]:
        ring = set(self.ring_gamma_z)
        return tuple(e for e in self.gamma_z if e not in ring)

    @property
    def aspect(self) -> float:
        return self.H_z / self.h_z

    def is_short(self, edge_id: int) -> bool:
        return edge_id in self.ring_gamma_z


def classify(
    H_z: float,
    h_z: float,
    H_T: np.ndarray,
    h_T: np.ndarray,
    edge_lengths: np.ndarray,
    params: ClassificationParams,
) -> Classification:
    rho = params.rho
    if (
        H_z >= params.sigma_ani * h_z
        and np.all((h_T >= h_z / rho) & (h_T <= rho * h_z))
        and np.all((H_T >= H_z / rho) & (H_T <= rho * H_z))
        and np.count_nonzero(edge_lengths <= params.c_short * h_z) <= 2
    ):
        return Classification.ANISOTROPIC
    if np.all(H_T <= params.sigma_reg * h_T):
        return Classification.REGULAR
    return Classification.UNCLASSIFIED


def node_patch(z: int, mesh: Triangulation, params: ClassificationParams | None = None) -> NodePatch:
    params = params or ClassificationParams()
    tris = mesh.node_to_triangles[z]
    S_z = mesh.node_to_edges[z]
    verts = np.unique(mesh.triangles[list(tris)].ravel())
    H_z = float(pdist(mesh.points[verts]).max())
    area = float(mesh.areas[list(tris)].sum())
    h_z = area / H_z
    gamma = tuple(e for e in S_z if not mesh.edge_is_boundary[e])
    lengths = mesh.edge_lengths
    ring = tuple(e for e in gamma if lengths[e] <= params.c_short * h_z)
    label = classify(
        H_z,
        h_z,
        mesh.max_edges[list(tris)],
        mesh.min_heights[list(tris)],
        lengths[list(S_z)],
        params,
    )
    return NodePatch(
        node_id=z,
        omega_triangles=tuple(tris),
        S_z=tuple(S_z),
        gamma_z=gamma,
        ring_gamma_z=ring,
        H_z=H_z,
        h_z=h_z,
        area=area,
        classification=label,
    )


def build_patches(mesh: Triangulation, params: ClassificationParams | None = None) -> list[NodePatch]:
    params = params or ClassificationParams()
    return [node_patch(z, mesh, params) for z in range(mesh.n_nodes)]


def patch_arrays(patches: list[NodePatch]) -> dict[str, np.ndarray]:
    """Column view of per-node patch quantities, indexed by node id."""
    return {
        "H_z": np.array([p.H_z for p in patches]),
        "h_z": np.array([p.h_z for p in patches]),
        "area": np.array([p.area for p in patches]),
    }
