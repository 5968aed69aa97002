"""Procedurally generated toy humanoid used by the test suite and demos.

Capsule limbs around a 16-joint skeleton, analytic skinning weights, and a
ring-based joint regressor (each joint owns a vertex ring centered on it, so
the regressor reproduces joint positions exactly). Model space is y-up; the
standard demo extrinsics flip the body into the y-down camera frame.
"""

from __future__ import annotations

import numpy as np
import torch

from .body import BodyModel

JOINT_NAMES = [
    "pelvis", "spine", "chest", "head",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
]

_JOINT_POS = np.array([
    [0.00, 0.95, 0.00],   # pelvis
    [0.00, 1.12, 0.00],   # spine
    [0.00, 1.32, 0.00],   # chest
    [0.00, 1.58, 0.00],   # head
    [+0.10, 0.92, 0.00],  # l_hip
    [+0.12, 0.52, 0.00],  # l_knee
    [+0.13, 0.10, 0.00],  # l_ankle
    [-0.10, 0.92, 0.00],  # r_hip
    [-0.12, 0.52, 0.00],  # r_knee
    [-0.13, 0.10, 0.00],  # r_ankle
    [+0.19, 1.42, 0.00],  # l_shoulder
    [+0.45, 1.42, 0.00],  # l_elbow
    [+0.72, 1.42, 0.00],  # l_wrist
    [-0.19, 1.42, 0.00],  # r_shoulder
    [-0.45, 1.42, 0.00],  # r_elbow
    [-0.72, 1.42, 0.00],  # r_wrist
])

_PARENTS = np.array([-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 2, 10, 11, 2, 13, 14])

# capsule segments: (start joint, end joint, radius, rings, segs)
_CAPSULES = [
    (0, 1, 0.140, 4, 12),
    (1, 2, 0.150, 4, 12),
    (2, 3, 0.060, 4, 8),
    (4, 5, 0.062, 6, 8),
    (5, 6, 0.050, 6, 8),
    (7, 8, 0.062, 6, 8),
    (8, 9, 0.050, 6, 8),
    (10, 11, 0.045, 6, 8),
    (11, 12, 0.038, 6, 8),
    (13, 14, 0.045, 6, 8),
    (14, 15, 0.038, 6, 8),
]

_HEAD_RADIUS = 0.105
_HEAD_CENTER_OFFSET = np.array([0.0, 0.08, 0.0])


def _frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def _ring_weight(t: float, start: int, end: int, prev: int | None) -> dict[int, float]:
    """Skin weights along a bone from joint `start` to joint `end`.

    The bone rigidly follows `start`; the far end blends 50/50 with `end`
    and the near end blends back toward the previous bone's driving joint.
    """
    w: dict[int, float] = {}
    s_end = 0.5 * min(max((t - 0.70) / 0.30, 0.0), 1.0)
    s_prev = 0.5 * min(max((0.30 - t) / 0.30, 0.0), 1.0) if prev is not None else 0.0
    w[end] = s_end
    if prev is not None and s_prev > 0:
        w[prev] = s_prev
    w[start] = 1.0 - s_end - s_prev
    return w


def make_toy_body(nose_name: str = "nose") -> BodyModel:
    """Build the toy humanoid BodyModel (float64 tensors)."""
    verts: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []
    weights: list[dict[int, float]] = []
    joint_rings: dict[int, list[int]] = {}

    driving = {}  # joint -> joint driving the bone that ENDS there
    for a, b, _, _, _ in _CAPSULES:
        driving[b] = a

    for a, b, radius, rings, segs in _CAPSULES:
        pa, pb = _JOINT_POS[a], _JOINT_POS[b]
        axis = pb - pa
        u, v = _frame(axis)
        base = len(verts)
        prev = driving.get(a)
        for ri in range(rings):
            t = ri / (rings - 1)
            center = pa + t * axis
            wmap = _ring_weight(t, a, b, prev)
            ring_ids = []
            for si in range(segs):
                ang = 2.0 * np.pi * si / segs
                verts.append(center + radius * (np.cos(ang) * u + np.sin(ang) * v))
                weights.append(wmap)
                ring_ids.append(len(verts) - 1)
            if ri == 0:
                joint_rings.setdefault(a, ring_ids)
            if ri == rings - 1:
                joint_rings.setdefault(b, ring_ids)
        for ri in range(rings - 1):
            for si in range(segs):
                i0 = base + ri * segs + si
                i1 = base + ri * segs + (si + 1) % segs
                i2 = i0 + segs
                i3 = i1 + segs
                faces.append((i0, i2, i1))
                faces.append((i1, i2, i3))

    # head: closed uv-sphere driven entirely by the head joint
    head_c = _JOINT_POS[3] + _HEAD_CENTER_OFFSET
    lat, lon = 6, 8
    head_base = len(verts)
    verts.append(head_c + np.array([0.0, _HEAD_RADIUS, 0.0]))
    weights.append({3: 1.0})
    for li in range(1, lat):
        phi = np.pi * li / lat
        for si in range(lon):
            ang = 2.0 * np.pi * si / lon
            p = head_c + _HEAD_RADIUS * np.array(
                [np.sin(phi) * np.cos(ang), np.cos(phi), np.sin(phi) * np.sin(ang)]
            )
            verts.append(p)
            weights.append({3: 1.0})
    south = len(verts)
    verts.append(head_c - np.array([0.0, _HEAD_RADIUS, 0.0]))
    weights.append({3: 1.0})
    ring0 = lambda li: head_base + 1 + (li - 1) * lon
    for si in range(lon):
        faces.append((head_base, ring0(1) + si, ring0(1) + (si + 1) % lon))
    for li in range(1, lat - 1):
        for si in range(lon):
            a0 = ring0(li) + si
            a1 = ring0(li) + (si + 1) % lon
            b0 = ring0(li + 1) + si
            b1 = ring0(li + 1) + (si + 1) % lon
            faces.append((a0, b0, a1))
            faces.append((a1, b0, b1))
    for si in range(lon):
        faces.append((south, ring0(lat - 1) + (si + 1) % lon, ring0(lat - 1) + si))

    vertices = np.asarray(verts)
    n_v, n_j = len(vertices), len(JOINT_NAMES)

    regressor = np.zeros((n_j, n_v))
    for j in range(n_j):
        ring = joint_rings.get(j)
        if ring is None:  # head joint: its ring is the neck capsule top
            ring = joint_rings[3]
        regressor[j, ring] = 1.0 / len(ring)

    skin = np.zeros((n_v, n_j))
    for vi, wmap in enumerate(weights):
        for j, w in wmap.items():
            skin[vi, j] = w
    skin /= skin.sum(axis=1, keepdims=True)

    # shape basis: [0] widens the body radially, [1] stretches it vertically
    horiz = vertices - np.array([0.0, 1.0, 0.0]) * vertices[:, 1:2]
    basis0 = 0.25 * horiz
    basis1 = np.zeros_like(vertices)
    basis1[:, 1] = 0.12 * (vertices[:, 1] - vertices[:, 1].min())
    shape_basis = np.stack([basis0, basis1])

    # nose: frontmost head vertex (max z near head height)
    head_ids = np.arange(head_base, len(vertices))
    nose_vertex = int(head_ids[np.argmax(vertices[head_ids, 2])])

    keypoints: dict[str, tuple[str, int]] = {nose_name: ("vertex", nose_vertex)}
    for name in ("l_elbow", "l_wrist", "r_elbow", "r_wrist", "l_knee", "l_ankle", "r_knee", "r_ankle"):
        keypoints[name] = ("joint", JOINT_NAMES.index(name))

    return BodyModel(
        rest_vertices=torch.as_tensor(vertices, dtype=torch.float64),
        faces=torch.as_tensor(np.asarray(faces), dtype=torch.int64),
        shape_basis=torch.as_tensor(shape_basis, dtype=torch.float64),
        joint_regressor=torch.as_tensor(regressor, dtype=torch.float64),
        parents=torch.as_tensor(_PARENTS, dtype=torch.int64),
        skin_weights=torch.as_tensor(skin, dtype=torch.float64),
        keypoint_map=keypoints,
    )
