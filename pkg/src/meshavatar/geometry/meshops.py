"""Triangle mesh container and per-face derived quantities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigurationError

DEGENERATE_CROSS_NORM = 1e-12


@dataclass
class Mesh:
    """Vertices (V,3) float64 tensor, faces (F,3) int64 tensor (shared topology)."""

    vertices: torch.Tensor
    faces: torch.Tensor

    def __post_init__(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ConfigurationError(f"vertices must be (V,3), got {tuple(self.vertices.shape)}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ConfigurationError(f"faces must be (F,3), got {tuple(self.faces.shape)}")

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def detach(self) -> "Mesh":
        return Mesh(self.vertices.detach(), self.faces)


def _edge_vectors(mesh: Mesh) -> tuple[torch.Tensor, torch.Tensor]:
    tri = mesh.vertices[mesh.faces]  # (F,3,3)
    return tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]


def face_normals(mesh: Mesh) -> tuple[torch.Tensor, torch.Tensor]:
    """Unit outward normals (F,3) plus a boolean degenerate flag per face.

    Degenerate faces (cross-product norm below ~1e-12) get a zero normal
    and flag True instead of raising.
    """
    e1, e2 = _edge_vectors(mesh)
    cross = torch.cross(e1, e2, dim=1)
    norm = torch.linalg.norm(cross, dim=1)
    degenerate = norm < DEGENERATE_CROSS_NORM
    safe = torch.where(degenerate, torch.ones_like(norm), norm)
    normals = cross / safe[:, None]
    normals = torch.where(degenerate[:, None], torch.zeros_like(normals), normals)
    return normals, degenerate


def face_areas(mesh: Mesh) -> torch.Tensor:
    """Unsigned triangle areas, 0.5 * |(v2-v1) x (v3-v1)|."""
    e1, e2 = _edge_vectors(mesh)
    return 0.5 * torch.linalg.norm(torch.cross(e1, e2, dim=1), dim=1)


def adjacent_face_pairs(faces) -> np.ndarray:
    """Unordered pairs (j,k) of faces sharing exactly two vertices.

    Non-manifold edges (shared by more than two faces) contribute every
    pairwise combination. Returns an (P,2) int64 array sorted by (j,k).
    """
    faces = np.asarray(faces if not torch.is_tensor(faces) else faces.numpy(), dtype=np.int64)
    edge_map: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(u), int(v)) if u < v else (int(v), int(u))
            edge_map.setdefault(key, []).append(fi)
    pairs = set()
    for members in edge_map.values():
        if len(members) < 2:
            continue
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                pairs.add((members[i], members[j]))
    out = []
    for j, k in pairs:
        shared = len(set(faces[j]) & set(faces[k]))
        if shared == 2:
            out.append((j, k))
    out.sort()
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)
