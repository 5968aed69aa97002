from .config import FitConfig
from .driver import fit, init_params, run_stage1, run_stage2
from .forward import STAGE_BASE_COLOR, STAGE_JOINT, STAGE_TEXTURE, frame_forward, render_frame
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam, ParamGroup, adam_step

__all__ = [
    "Adam",
    "FitConfig",
    "GradCheckReport",
    "ParamGroup",
    "STAGE_BASE_COLOR",
    "STAGE_JOINT",
    "STAGE_TEXTURE",
    "adam_step",
    "fit",
    "frame_forward",
    "grad_check",
    "init_params",
    "render_frame",
    "run_stage1",
    "run_stage2",
]
