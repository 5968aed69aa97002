"""checkpoint-v1: a .npz container holding AvatarParams, config and metadata."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from ..geometry.avatar import AvatarParams
from ..geometry.body import BodyModel, FramePose
from ..texfield import HashGridConfig, TextureField

FORMAT = "checkpoint-v1"


def save_checkpoint(
    path: str | Path,
    params: AvatarParams,
    body_hash: str,
    config_dict: dict,
    iteration: int,
    stage: int,
):
    header = {
        "format": FORMAT,
        "body_hash": body_hash,
        "config": config_dict,
        "iteration": iteration,
        "stage": stage,
        "num_frames": len(params.frame_poses),
        "mlp_tensors": len(params.texture.mlp_weights),
    }
    arrays = {
        "beta": params.beta.detach().numpy(),
        "offsets": params.offsets.detach().numpy(),
        "theta": np.stack([fp.theta.detach().numpy() for fp in params.frame_poses]),
        "rot_vecs": np.stack([fp.rot_vec.detach().numpy() for fp in params.frame_poses]),
        "trans": np.stack([fp.trans.detach().numpy() for fp in params.frame_poses]),
        "face_colors": params.face_colors.detach().numpy(),
        "texcoords": params.texture.texcoords.detach().numpy(),
        "domain_min": params.texture.domain_min.numpy(),
        "domain_max": params.texture.domain_max.numpy(),
        "tables": params.texture.tables.detach().numpy(),
    }
    for i, wgt in enumerate(params.texture.mlp_weights):
        arrays[f"mlp_{i}"] = wgt.detach().numpy()
    np.savez(path, header=json.dumps(header), **arrays)


def load_checkpoint(path: str | Path, body: BodyModel) -> tuple[AvatarParams, dict]:
    """Rebuild AvatarParams; returns (params, header). Raises DataError on a
    missing file, wrong format, or a body-model hash mismatch (when the
    header carries one and a hash is provided)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("format") != FORMAT:
                raise DataError(f"{path}: unsupported checkpoint format")
            data = {k: z[k] for k in z.files if k != "header"}
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e

    grid_cfg = header["config"].get("hash_grid", {})
    texture = TextureField(
        config=HashGridConfig(**grid_cfg) if grid_cfg else HashGridConfig(),
        texcoords=torch.as_tensor(data["texcoords"]),
        domain_min=torch.as_tensor(data["domain_min"]),
        domain_max=torch.as_tensor(data["domain_max"]),
        tables=torch.as_tensor(data["tables"]),
        mlp_weights=[torch.as_tensor(data[f"mlp_{i}"]) for i in range(header["mlp_tensors"])],
    )
    poses = [
        FramePose(
            theta=torch.as_tensor(data["theta"][i]),
            rot_vec=torch.as_tensor(data["rot_vecs"][i]),
            trans=torch.as_tensor(data["trans"][i]),
        )
        for i in range(header["num_frames"])
    ]
    params = AvatarParams(
        beta=torch.as_tensor(data["beta"]),
        offsets=torch.as_tensor(data["offsets"]),
        frame_poses=poses,
        texture=texture,
        face_colors=torch.as_tensor(data["face_colors"]),
    )
    params.validate(body)
    return params, header


def verify_body_hash(header: dict, body_hash: str, path: str):
    stored = header.get("body_hash")
    if stored and body_hash and stored != body_hash:
        raise DataError(f"{path}: checkpoint was trained with a different body model")
