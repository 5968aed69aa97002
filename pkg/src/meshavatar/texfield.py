"""Adaptive texture: learned 3D texture coordinates per vertex, a
multi-resolution hash grid, and a small MLP mapping features to RGB."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigurationError
from .raster import kernels


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 16
    table_size: int = 2 ** 19
    n_min: int = 16
    n_max: int = 1024
    feat_dim: int = 2

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigurationError("levels must be >= 1")
        if self.table_size < 1 or self.table_size & (self.table_size - 1):
            raise ConfigurationError("table_size must be a power of two")
        if not (self.n_max >= self.n_min >= 1):
            raise ConfigurationError("need n_max >= n_min >= 1")
        if self.feat_dim < 1:
            raise ConfigurationError("feat_dim must be >= 1")

    @property
    def growth(self) -> float:
        if self.levels == 1:
            return 1.0
        return math.exp((math.log(self.n_max) - math.log(self.n_min)) / (self.levels - 1))

    def resolutions(self) -> np.ndarray:
        # tiny epsilon so floor(n_min * b^l) survives b = exp(...) rounding
        b = self.growth
        return np.array(
            [int(math.floor(self.n_min * b ** lv + 1e-9)) for lv in range(self.levels)],
            dtype=np.int64,
        )

    @property
    def out_dim(self) -> int:
        return self.levels * self.feat_dim

    @classmethod
    def full_scale(cls) -> "HashGridConfig":
        return cls(levels=16, table_size=2 ** 19, n_min=16, n_max=1024, feat_dim=2)

    @classmethod
    def desk_scale(cls) -> "HashGridConfig":
        """Small configuration used by the test suite."""
        return cls(levels=8, table_size=2 ** 14, n_min=16, n_max=256, feat_dim=2)


class _HashEncodeFn(torch.autograd.Function):
    """Trilinear hash-grid lookup with analytic gradients for points and tables."""

    @staticmethod
    def forward(ctx, t01, tables, resolutions):
        t_np = np.ascontiguousarray(t01.detach().numpy())
        tab_np = np.ascontiguousarray(tables.detach().numpy())
        out = kernels.hash_encode_forward(t_np, tab_np, resolutions)
        ctx.saved = (t_np, tab_np, resolutions)
        return torch.from_numpy(out)

    @staticmethod
    def backward(ctx, grad_out):
        t_np, tab_np, resolutions = ctx.saved
        g = np.ascontiguousarray(grad_out.detach().numpy())
        grad_t, grad_tab = kernels.hash_encode_backward(t_np, tab_np, resolutions, g)
        return torch.from_numpy(grad_t), torch.from_numpy(grad_tab), None


@dataclass
class TextureField:
    """Per-vertex 3D texture coordinates + hash tables + MLP weights.

    The domain box maps coordinates into [0,1]^3 (queries outside clamp);
    it is fixed at construction.
    """

    config: HashGridConfig
    texcoords: torch.Tensor  # (V,3)
    domain_min: torch.Tensor  # (3,)
    domain_max: torch.Tensor  # (3,)
    tables: torch.Tensor  # (L,T,F)
    mlp_weights: list[torch.Tensor] = field(default_factory=list)  # [W1,b1,W2,b2,W3,b3]

    @classmethod
    def init_from_vertices(
        cls,
        vertices: torch.Tensor,
        config: HashGridConfig,
        hidden: int = 64,
        seed: int = 0,
    ) -> "TextureField":
        """texcoords start at the rest-pose vertex positions; the domain box
        is their bounding box padded 10% per side."""
        rng = np.random.default_rng(seed)
        v = vertices.detach()
        lo = v.min(dim=0).values
        hi = v.max(dim=0).values
        pad = 0.1 * (hi - lo)
        pad = torch.where(pad <= 0, torch.full_like(pad, 1e-3), pad)
        tables = torch.from_numpy(
            rng.uniform(-1e-4, 1e-4, size=(config.levels, config.table_size, config.feat_dim))
        )
        dims = [config.out_dim, hidden, hidden, 3]
        weights = []
        for din, dout in zip(dims[:-1], dims[1:]):
            bound = 1.0 / math.sqrt(din)
            weights.append(torch.from_numpy(rng.uniform(-bound, bound, size=(din, dout))))
            weights.append(torch.zeros(dout, dtype=torch.float64))
        return cls(
            config=config,
            texcoords=v.clone(),
            domain_min=lo - pad,
            domain_max=hi + pad,
            tables=tables,
            mlp_weights=weights,
        )

    def parameters(self) -> dict[str, torch.Tensor]:
        out = {"texcoords": self.texcoords, "tables": self.tables}
        for i, wgt in enumerate(self.mlp_weights):
            out[f"mlp_{i}"] = wgt
        return out

    def shade(self, face_ids: torch.Tensor, bary: torch.Tensor, faces: torch.Tensor) -> torch.Tensor:
        return sample_color(face_ids, bary, self, faces)


def interpolate_texcoord(bary: torch.Tensor, face_texcoords: torch.Tensor) -> torch.Tensor:
    """Convex combination of the face's three texture coordinates.

    bary (...,3), face_texcoords (...,3,3) -> (...,3).
    """
    return (bary[..., :, None] * face_texcoords).sum(dim=-2)


def hash_encode(t: torch.Tensor, tf: TextureField) -> torch.Tensor:
    """Encode points (N,3) through the domain box and hash grid -> (N, L*F)."""
    span = tf.domain_max - tf.domain_min
    t01 = ((t - tf.domain_min) / span).clamp(0.0, 1.0)
    return _HashEncodeFn.apply(t01, tf.tables, tf.config.resolutions())


def mlp_rgb(features: torch.Tensor, tf: TextureField) -> torch.Tensor:
    """Two rectified hidden layers, sigmoid RGB head.

    Gradient-free evaluation goes through the fused compiled kernel when
    available (the render path); training uses the autograd ops.
    """
    w1, b1, w2, b2, w3, b3 = tf.mlp_weights
    needs_grad = torch.is_grad_enabled() and (
        features.requires_grad or any(w.requires_grad for w in tf.mlp_weights)
    )
    if not needs_grad and kernels.HAVE_COMPILED and w1.shape[1] <= 256 and w2.shape[1] <= 256:
        from . import _core  # type: ignore

        out = np.empty((features.shape[0], w3.shape[1]))
        _core.mlp_forward(
            np.ascontiguousarray(features.detach().numpy()),
            *(np.ascontiguousarray(w.detach().numpy()) for w in tf.mlp_weights),
            out,
        )
        return torch.from_numpy(out)
    hdn = torch.relu(features @ w1 + b1)
    hdn = torch.relu(hdn @ w2 + b2)
    return torch.sigmoid(hdn @ w3 + b3)


def sample_color(face_ids: torch.Tensor, bary: torch.Tensor, tf: TextureField, faces: torch.Tensor) -> torch.Tensor:
    """Full chain: interpolate texcoords, encode, run the MLP."""
    tc = tf.texcoords[faces[face_ids]]  # (N,3,3)
    t = interpolate_texcoord(bary, tc)
    return mlp_rgb(hash_encode(t, tf), tf)


class ProceduralTexture:
    """Shader evaluating an analytic color function of the interpolated
    texture coordinate; used to synthesize ground-truth scenes."""

    def __init__(self, fn, texcoords: torch.Tensor):
        self.fn = fn
        self.texcoords = texcoords.detach()

    def __call__(self, face_ids, bary, faces):
        t = interpolate_texcoord(bary, self.texcoords[faces[face_ids]])
        return self.fn(t)

    shade = __call__
