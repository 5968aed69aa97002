from .config import SoftRasterConfig
from .fragments import FragmentBuffer, RenderOutput
from .hard import face_color_shader, hard_silhouette, rasterize_hard, shade_fragments
from .kernels import BACKEND, HAVE_COMPILED, get_num_threads, set_num_threads
from .soft import soft_render, soft_silhouette

__all__ = [
    "BACKEND",
    "FragmentBuffer",
    "HAVE_COMPILED",
    "RenderOutput",
    "SoftRasterConfig",
    "face_color_shader",
    "get_num_threads",
    "hard_silhouette",
    "rasterize_hard",
    "set_num_threads",
    "shade_fragments",
    "soft_render",
    "soft_silhouette",
]
