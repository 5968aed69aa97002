"""meshavatar: articulated textured-mesh reconstruction by differentiable rasterization."""

from .errors import ConfigurationError, DataError, MeshAvatarError, NumericError

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataError",
    "MeshAvatarError",
    "NumericError",
    "__version__",
]
