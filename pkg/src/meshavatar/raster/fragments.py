"""Per-pixel rasterization output shared by the hard branch and shading."""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class FragmentBuffer:
    """face (H,W) int64 with -1 for uncovered pixels; bary (H,W,3)
    perspective-correct barycentrics; depth (H,W) camera z at the fragment."""

    face: torch.Tensor
    bary: torch.Tensor
    depth: torch.Tensor

    @property
    def covered(self) -> torch.Tensor:
        return self.face >= 0


@dataclass
class RenderOutput:
    """rgb (H,W,3) in [0,1]; alpha (H,W) soft foreground weight mass;
    silhouette (H,W) when rendered."""

    rgb: torch.Tensor
    alpha: torch.Tensor | None = None
    silhouette: torch.Tensor | None = None
