"""Image and geometry evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import ConfigurationError, DataError
from ..geometry.meshops import Mesh
from ..raster import kernels

PSNR_CAP = 99.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    iou: float | None = None
    chamfer: float | None = None
    p2s: float | None = None


def _as_np(x) -> np.ndarray:
    return x.detach().numpy() if hasattr(x, "detach") else np.asarray(x, dtype=np.float64)


def psnr(pred, gt) -> float:
    pred, gt = _as_np(pred), _as_np(gt)
    if pred.shape != gt.shape:
        raise ConfigurationError("psnr: shape mismatch")
    mse = float(np.mean((pred - gt) ** 2))
    if mse <= 10 ** (-PSNR_CAP / 10.0):
        return PSNR_CAP
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_kernel1d() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


def _filter(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    out = correlate1d(img, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


def ssim(pred, gt) -> float:
    """Gaussian-weighted SSIM (11x11 window, sigma 1.5), channel-averaged.

    The border half-window is cropped before averaging.
    """
    pred, gt = _as_np(pred), _as_np(gt)
    if pred.shape != gt.shape:
        raise ConfigurationError("ssim: shape mismatch")
    if pred.ndim == 2:
        pred, gt = pred[:, :, None], gt[:, :, None]
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    k = _gaussian_kernel1d()
    half = SSIM_WINDOW // 2
    vals = []
    for c in range(pred.shape[2]):
        x, y = pred[:, :, c], gt[:, :, c]
        mu_x, mu_y = _filter(x, k), _filter(y, k)
        xx, yy, xy = _filter(x * x, k), _filter(y * y, k), _filter(x * y, k)
        var_x = xx - mu_x ** 2
        var_y = yy - mu_y ** 2
        cov = xy - mu_x * mu_y
        s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        )
        crop = s[half:-half, half:-half] if min(s.shape) > 2 * half else s
        vals.append(float(crop.mean()))
    return float(np.mean(vals))


def metric_image(pred, gt) -> tuple[float, float]:
    return psnr(pred, gt), ssim(pred, gt)


def silhouette_iou(a, b) -> float:
    a, b = _as_np(a) >= 0.5, _as_np(b) >= 0.5
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def sample_surface(mesh: Mesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-uniform point samples on the triangle surface (seeded)."""
    if n < 1:
        raise ConfigurationError("need at least one sample")
    verts = _as_np(mesh.vertices)
    faces = mesh.faces.numpy()
    tri = verts[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0:
        raise DataError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    face_ids = rng.choice(faces.shape[0], size=n, p=areas / total)
    u = rng.uniform(size=n)
    v = rng.uniform(size=n)
    su = np.sqrt(u)
    w0 = 1.0 - su
    w1 = su * (1.0 - v)
    w2 = su * v
    t = tri[face_ids]
    return w0[:, None] * t[:, 0] + w1[:, None] * t[:, 1] + w2[:, None] * t[:, 2]


def point_mesh_distances(points: np.ndarray, mesh: Mesh) -> np.ndarray:
    tri = _as_np(mesh.vertices)[mesh.faces.numpy()]
    return np.sqrt(kernels.nearest_dist2(np.ascontiguousarray(points), np.ascontiguousarray(tri)))


def chamfer_p2s(mesh_a: Mesh, mesh_b: Mesh, samples: int = 10000, seed: int = 0) -> tuple[float, float]:
    """chamfer = mean of the two directional mean surface distances;
    p2s = mean distance from mesh_a samples to mesh_b's surface."""
    if mesh_a.num_faces == 0 or mesh_b.num_faces == 0:
        raise DataError("chamfer on an empty mesh")
    pa = sample_surface(mesh_a, samples, seed)
    pb = sample_surface(mesh_b, samples, seed + 1)
    d_ab = point_mesh_distances(pa, mesh_b)
    d_ba = point_mesh_distances(pb, mesh_a)
    p2s = float(d_ab.mean())
    chamfer = 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))
    return chamfer, p2s
