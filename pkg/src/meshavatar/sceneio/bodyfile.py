"""bodymodel-v1: JSON body-model interchange (row-major flat arrays)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from ..geometry.body import BodyModel

FORMAT = "bodymodel-v1"


def save_body_model(model: BodyModel, path: str | Path):
    doc = {
        "format": FORMAT,
        "vertices": model.rest_vertices.numpy().ravel().tolist(),
        "faces": model.faces.numpy().ravel().tolist(),
        "shape_basis": model.shape_basis.numpy().ravel().tolist(),
        "num_shape_coeffs": model.num_shape_coeffs,
        "joint_regressor": model.joint_regressor.numpy().ravel().tolist(),
        "parents": model.parents.numpy().tolist(),
        "skin_weights": model.skin_weights.numpy().ravel().tolist(),
        "keypoints": {
            name: {kind: idx} for name, (kind, idx) in model.keypoint_map.items()
        },
        # reserved, unloaded by default
        "pose_blendshapes": None,
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_body_model(path: str | Path) -> BodyModel:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read body model {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"malformed body model {path}: {e}") from e
    if doc.get("format") != FORMAT:
        raise DataError(f"{path}: unsupported body model format {doc.get('format')!r}")
    try:
        parents = np.asarray(doc["parents"], dtype=np.int64)
        j = parents.shape[0]
        verts = np.asarray(doc["vertices"], dtype=np.float64).reshape(-1, 3)
        v = verts.shape[0]
        faces = np.asarray(doc["faces"], dtype=np.int64).reshape(-1, 3)
        k = int(doc["num_shape_coeffs"])
        basis = np.asarray(doc["shape_basis"], dtype=np.float64).reshape(k, v, 3)
        regressor = np.asarray(doc["joint_regressor"], dtype=np.float64).reshape(j, v)
        skin = np.asarray(doc["skin_weights"], dtype=np.float64).reshape(v, j)
        keypoints = {}
        for name, spec in doc.get("keypoints", {}).items():
            (kind, idx), = spec.items()
            keypoints[name] = (kind, int(idx))
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: malformed body model field: {e}") from e
    return BodyModel(
        rest_vertices=torch.as_tensor(verts),
        faces=torch.as_tensor(faces),
        shape_basis=torch.as_tensor(basis),
        joint_regressor=torch.as_tensor(regressor),
        parents=torch.as_tensor(parents),
        skin_weights=torch.as_tensor(skin),
        keypoint_map=keypoints,
    )


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
