"""Articulated body model: shape blending, offsets and linear blend skinning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import ConfigurationError, NumericError
from .camera import Camera
from .meshops import Mesh, adjacent_face_pairs

_SMALL_ANGLE_SQ = 1e-16  # |theta| < 1e-8 switches Rodrigues to its Taylor form


@dataclass
class BodyModel:
    """Rest mesh + skeleton + skinning weights + shape blendshape basis.

    keypoint_map maps a keypoint name to ("joint", j) or ("vertex", v).
    Arrays are float64 torch tensors; faces/parents are int64.
    """

    rest_vertices: torch.Tensor  # (V,3)
    faces: torch.Tensor  # (F,3)
    shape_basis: torch.Tensor  # (K,V,3)
    joint_regressor: torch.Tensor  # (J,V)
    parents: torch.Tensor  # (J,)
    skin_weights: torch.Tensor  # (V,J)
    keypoint_map: dict[str, tuple[str, int]] = field(default_factory=dict)
    _adjacency: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    @property
    def num_vertices(self) -> int:
        return self.rest_vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def num_shape_coeffs(self) -> int:
        return self.shape_basis.shape[0]

    def adjacency(self) -> np.ndarray:
        """Cached adjacent-face pairs (immutable after first call)."""
        if self._adjacency is None:
            self._adjacency = adjacent_face_pairs(self.faces)
        return self._adjacency

    def validate(self):
        v, j = self.num_vertices, self.num_joints
        if self.faces.numel() and (int(self.faces.min()) < 0 or int(self.faces.max()) >= v):
            raise ConfigurationError("face index out of range")
        f = self.faces
        if f.numel() and bool(((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any()):
            raise ConfigurationError("degenerate face (repeated vertex index)")
        if self.shape_basis.shape[1:] != (v, 3):
            raise ConfigurationError("shape_basis must be (K,V,3)")
        if self.joint_regressor.shape != (j, v):
            raise ConfigurationError("joint_regressor must be (J,V)")
        if self.skin_weights.shape != (v, j):
            raise ConfigurationError("skin_weights must be (V,J)")
        if bool((self.skin_weights < -1e-12).any()):
            raise ConfigurationError("skin weights must be nonnegative")
        if not torch.allclose(self.skin_weights.sum(dim=1), torch.ones(v, dtype=torch.float64), atol=1e-6):
            raise ConfigurationError("skin weight rows must sum to 1")
        if not torch.allclose(self.joint_regressor.sum(dim=1), torch.ones(j, dtype=torch.float64), atol=1e-6):
            raise ConfigurationError("joint regressor rows must sum to 1")
        if int(self.parents[0]) != -1:
            raise ConfigurationError("joint 0 must be the root (parent -1)")
        for k in range(1, j):
            p = int(self.parents[k])
            if not (0 <= p < k):
                raise ConfigurationError("parents must form a tree with topological joint order")
        for name, (kind, idx) in self.keypoint_map.items():
            if kind == "joint" and not (0 <= idx < j):
                raise ConfigurationError(f"keypoint {name!r}: joint index out of range")
            if kind == "vertex" and not (0 <= idx < v):
                raise ConfigurationError(f"keypoint {name!r}: vertex index out of range")
            if kind not in ("joint", "vertex"):
                raise ConfigurationError(f"keypoint {name!r}: kind must be 'joint' or 'vertex'")


@dataclass
class FramePose:
    """Per-frame articulation and rigid alignment.

    ``rot_vec`` is the axis-angle parameterization of the world-to-camera
    rotation; the orthonormal matrix is materialized on demand so the
    invariant holds by construction.
    """

    theta: torch.Tensor  # (J,3) axis-angle per joint
    rot_vec: torch.Tensor  # (3,) axis-angle extrinsic rotation
    trans: torch.Tensor  # (3,)

    @property
    def rot(self) -> torch.Tensor:
        return rodrigues(self.rot_vec[None])[0]

    def clone(self) -> "FramePose":
        return FramePose(self.theta.detach().clone(), self.rot_vec.detach().clone(), self.trans.detach().clone())


def rodrigues(w: torch.Tensor) -> torch.Tensor:
    """Axis-angle vectors (...,3) to rotation matrices (...,3,3).

    Uses the second-order Taylor expansion of sin/cos factors below
    |theta| = 1e-8 so value and gradient stay finite at zero.
    """
    theta_sq = (w * w).sum(dim=-1)
    small = theta_sq < _SMALL_ANGLE_SQ
    theta = torch.sqrt(theta_sq.clamp_min(_SMALL_ANGLE_SQ))
    a = torch.where(small, 1.0 - theta_sq / 6.0, torch.sin(theta) / theta)
    b = torch.where(small, 0.5 - theta_sq / 24.0, (1.0 - torch.cos(theta)) / theta_sq.clamp_min(_SMALL_ANGLE_SQ))

    zeros = torch.zeros_like(theta_sq)
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    skew = torch.stack(
        [zeros, -wz, wy, wz, zeros, -wx, -wy, wx, zeros], dim=-1
    ).reshape(*w.shape[:-1], 3, 3)
    eye = torch.eye(3, dtype=w.dtype, device=w.device).expand(*w.shape[:-1], 3, 3)
    return eye + a[..., None, None] * skew + b[..., None, None] * (skew @ skew)


def build_rest_mesh(model: BodyModel, beta: torch.Tensor, offsets: torch.Tensor) -> Mesh:
    """Canonical deformed mesh: rest + shape blendshapes + free-form offsets."""
    if beta.shape != (model.num_shape_coeffs,):
        raise ConfigurationError(f"beta must have shape ({model.num_shape_coeffs},), got {tuple(beta.shape)}")
    if offsets.shape != model.rest_vertices.shape:
        raise ConfigurationError("offsets must match rest vertices (V,3)")
    verts = model.rest_vertices + torch.einsum("k,kvc->vc", beta, model.shape_basis) + offsets
    return Mesh(verts, model.faces)


def lbs_pose(
    mesh: Mesh,
    model: BodyModel,
    theta: torch.Tensor,
    rot: torch.Tensor,
    trans: torch.Tensor,
    joint_source: torch.Tensor | None = None,
) -> tuple[Mesh, torch.Tensor]:
    """Pose the canonical mesh by linear blend skinning, then apply extrinsics.

    Joint rest positions come from the regressor on the input vertices by
    default; pass joint_source (V,3) to drive the skeleton from a different
    canonical mesh (the fitting loop uses the shape-only body so free-form
    offsets deform the skin without dragging the skeleton). Returns the posed
    mesh and world-space joint positions (J,3).
    """
    if not bool(torch.isfinite(theta).all()):
        raise NumericError("non-finite pose angles")
    j = model.num_joints
    if theta.shape != (j, 3):
        raise ConfigurationError(f"theta must be ({j},3)")

    joints_rest = model.joint_regressor @ (mesh.vertices if joint_source is None else joint_source)
    local_rot = rodrigues(theta)  # (J,3,3)

    glob_rot: list[torch.Tensor] = [local_rot[0]]
    glob_pos: list[torch.Tensor] = [joints_rest[0]]
    for k in range(1, j):
        p = int(model.parents[k])
        glob_rot.append(glob_rot[p] @ local_rot[k])
        glob_pos.append(glob_rot[p] @ (joints_rest[k] - joints_rest[p]) + glob_pos[p])
    g_rot = torch.stack(glob_rot)  # (J,3,3)
    g_pos = torch.stack(glob_pos)  # (J,3)

    # v' = sum_j w_vj * (G_j (v - j_rest) + j_posed)
    centered = mesh.vertices[:, None, :] - joints_rest[None, :, :]  # (V,J,3)
    rotated = torch.einsum("jab,vjb->vja", g_rot, centered) + g_pos[None, :, :]
    posed = (model.skin_weights[:, :, None] * rotated).sum(dim=1)

    posed = posed @ rot.T + trans
    joints_world = g_pos @ rot.T + trans
    return Mesh(posed, mesh.faces), joints_world


def model_keypoints(
    joints_world: torch.Tensor,
    posed_mesh: Mesh,
    model: BodyModel,
    cam: Camera,
) -> dict[str, tuple[torch.Tensor, bool]]:
    """Project the configured keypoints to pixel coordinates.

    Returns name -> ((2,) tensor, in_front_flag). Points at or behind the
    near plane keep a placeholder position and flag False.
    """
    out: dict[str, tuple[torch.Tensor, bool]] = {}
    for name, (kind, idx) in model.keypoint_map.items():
        if kind == "joint":
            p = joints_world[idx]
        elif kind == "vertex":
            p = posed_mesh.vertices[idx]
        else:  # pragma: no cover - validated at construction
            raise ConfigurationError(f"unknown keypoint kind {kind!r}")
        z = p[2]
        in_front = bool(z > cam.near)
        z_safe = z if in_front else torch.ones_like(z)
        xy = torch.stack([cam.fx * p[0] / z_safe + cam.cx, cam.fy * p[1] / z_safe + cam.cy])
        out[name] = (xy, in_front)
    return out
