from .bodyfile import file_sha256, load_body_model, save_body_model
from .checkpoint import load_checkpoint, save_checkpoint, verify_body_hash
from .images import read_image, write_image
from .losslog import read_loss_log, write_loss_log
from .manifest import load_keypoints, load_scene, write_keypoints
from .metrics import MetricReport, chamfer_p2s, metric_image, psnr, sample_surface, silhouette_iou, ssim
from .objio import export_obj, import_obj
from .scene import FrameObservation, Scene

__all__ = [
    "FrameObservation",
    "MetricReport",
    "Scene",
    "chamfer_p2s",
    "export_obj",
    "file_sha256",
    "import_obj",
    "load_body_model",
    "load_checkpoint",
    "load_keypoints",
    "load_scene",
    "metric_image",
    "psnr",
    "read_image",
    "read_loss_log",
    "sample_surface",
    "save_body_model",
    "save_checkpoint",
    "silhouette_iou",
    "ssim",
    "verify_body_hash",
    "write_image",
    "write_keypoints",
    "write_loss_log",
]
