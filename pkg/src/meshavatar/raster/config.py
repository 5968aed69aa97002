"""Soft rasterization configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigurationError

# Coverage support cutoff: squared boundary distances beyond SUPPORT_FACTOR*sigma
# contribute sigmoid(-30) < 1e-13 and are skipped.
SUPPORT_FACTOR = 30.0


@dataclass(frozen=True)
class SoftRasterConfig:
    """Face blur sigma (NDC^2), depth-softmax temperature gamma, background logit.

    Defaults follow the usual soft-rasterizer settings; background sits at the
    far plane (eps = 0) and renders black.
    """

    sigma: float = 1e-5
    gamma: float = 1e-4
    background_eps: float = 0.0
    background_color: tuple[float, float, float] = (0.0, 0.0, 0.0)
    tile_size: int = 32

    def __post_init__(self):
        if self.sigma <= 0 or self.gamma <= 0:
            raise ConfigurationError("sigma and gamma must be positive")
        if self.tile_size < 1:
            raise ConfigurationError("tile_size must be >= 1")
