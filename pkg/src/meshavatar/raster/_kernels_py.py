"""Pure-numpy kernels: the fallback implementation of the compiled core.

Semantics are identical to meshavatar._core; this path is selected when the
extension is unavailable (or forced via MESHAVATAR_PURE_PY=1). Loops are
face-major and sequential, so results do not depend on the worker count.

Conventions shared with the compiled core:
  - vertex xy and pixel centers (ix+0.5, iy+0.5) live in pixel units;
  - coverage distances are measured in NDC, ndc = (2*px/W - 1, 2*py/H - 1);
  - sigma is an NDC^2 face blur, gamma the depth-softmax temperature;
  - faces are skipped when a vertex is invalid, when their screen area is
    numerically zero, or (soft branch) outside the d^2 <= 30*sigma support.
"""

from __future__ import annotations

import numpy as np

from .config import SUPPORT_FACTOR

_AREA_EPS = 1e-14  # NDC^2; projected faces flatter than this are skipped
_HARD_AREA_EPS = 1e-12  # pixel^2


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _face_bbox_px(xy_f, w, h, pad_x, pad_y):
    """Integer pixel rect [x0,x1) x [y0,y1) covering the face plus padding."""
    x0 = int(np.floor(xy_f[:, 0].min() - pad_x))
    x1 = int(np.ceil(xy_f[:, 0].max() + pad_x)) + 1
    y0 = int(np.floor(xy_f[:, 1].min() - pad_y))
    y1 = int(np.ceil(xy_f[:, 1].max() + pad_y)) + 1
    return max(x0, 0), min(x1, w), max(y0, 0), min(y1, h)


def _pixel_grid(x0, x1, y0, y1):
    ys, xs = np.mgrid[y0:y1, x0:x1]
    return xs.ravel() + 0.5, ys.ravel() + 0.5


def _edge_funcs(px, py, v):
    """Signed twice-areas e_k and A for barycentrics b_k = e_k / A."""
    (x1, y1), (x2, y2), (x3, y3) = v
    e1 = (x2 - px) * (y3 - py) - (y2 - py) * (x3 - px)
    e2 = (x3 - px) * (y1 - py) - (y3 - py) * (x1 - px)
    e3 = (x1 - px) * (y2 - py) - (y1 - py) * (x2 - px)
    area = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)
    return e1, e2, e3, area


def hard_rasterize(xy, z, faces, face_valid, w, h):
    """Depth-tested rasterization in pixel space.

    Returns (face (h,w) int64, bary (h,w,3) perspective-correct, depth (h,w)).
    Uncovered pixels get face -1 and depth/bary 0. Ties in depth keep the
    lower face index (faces processed in order, strict < test).
    """
    face_img = np.full((h, w), -1, dtype=np.int64)
    bary_img = np.zeros((h, w, 3))
    depth_img = np.zeros((h, w))
    zbuf = np.full((h, w), np.inf)

    for fi in range(faces.shape[0]):
        if not face_valid[fi]:
            continue
        idx = faces[fi]
        vxy = xy[idx]
        x0, x1, y0, y1 = _face_bbox_px(vxy, w, h, 0.0, 0.0)
        if x0 >= x1 or y0 >= y1:
            continue
        px, py = _pixel_grid(x0, x1, y0, y1)
        e1, e2, e3, area = _edge_funcs(px, py, vxy)
        if abs(area) < _HARD_AREA_EPS:
            continue
        b = np.stack([e1, e2, e3], axis=1) / area
        inside = (b >= 0.0).all(axis=1)
        if not inside.any():
            continue
        zf = z[idx]
        q = b @ (1.0 / zf)
        depth = 1.0 / q
        wp = (b / zf) * depth[:, None]

        shape = (y1 - y0, x1 - x0)
        inside2 = inside.reshape(shape)
        depth2 = depth.reshape(shape)
        sub_z = zbuf[y0:y1, x0:x1]
        better = inside2 & (depth2 < sub_z)
        if not better.any():
            continue
        sub_z[better] = depth2[better]
        face_img[y0:y1, x0:x1][better] = fi
        depth_img[y0:y1, x0:x1][better] = depth2[better]
        bary_img[y0:y1, x0:x1][better] = wp.reshape(shape + (3,))[better]
    return face_img, bary_img, depth_img


def _ndc_verts(xy, w, h):
    out = np.empty_like(xy)
    out[:, 0] = 2.0 * xy[:, 0] / w - 1.0
    out[:, 1] = 2.0 * xy[:, 1] / h - 1.0
    return out


def _segment_d2(px, py, ax, ay, bx, by):
    """Squared point-segment distance plus the projection parameter t."""
    ux, uy = bx - ax, by - ay
    denom = ux * ux + uy * uy
    if denom < 1e-300:
        t = np.zeros_like(px)
    else:
        t = np.clip(((px - ax) * ux + (py - ay) * uy) / denom, 0.0, 1.0)
    rx = px - (ax + t * ux)
    ry = py - (ay + t * uy)
    return rx * rx + ry * ry, t, rx, ry


def _coverage_block(px, py, v_ndc, sigma):
    """Per-pixel coverage quantities for one face.

    Returns (d2, edge index of the minimizing segment, t on it, sign,
    support mask, D). px/py are NDC pixel centers.
    """
    e1, e2, e3, area = _edge_funcs(px, py, v_ndc)
    b = np.stack([e1, e2, e3], axis=1) / area
    inside = (b >= 0.0).all(axis=1)

    d2s = np.empty((px.shape[0], 3))
    ts = np.empty_like(d2s)
    edges = ((0, 1), (1, 2), (2, 0))
    for k, (i, j) in enumerate(edges):
        d2s[:, k], ts[:, k], _, _ = _segment_d2(
            px, py, v_ndc[i, 0], v_ndc[i, 1], v_ndc[j, 0], v_ndc[j, 1]
        )
    kmin = np.argmin(d2s, axis=1)
    rows = np.arange(px.shape[0])
    d2 = d2s[rows, kmin]
    sign = np.where(inside, 1.0, -1.0)
    support = inside | (d2 <= SUPPORT_FACTOR * sigma)
    cov = _sigmoid(sign * d2 / sigma)
    return b, d2, kmin, ts[rows, kmin], sign, support, cov


def _soft_depth(b, zf, near, far):
    """Clamped-barycentric perspective depth and its normalization."""
    c = np.clip(b, 0.0, 1.0)
    s = c.sum(axis=1)
    wbar = c / s[:, None]
    q = wbar @ (1.0 / zf)
    zp = 1.0 / q
    zt_raw = (far - zp) / (far - near)
    zt = np.clip(zt_raw, 0.0, 1.0)
    return c, s, wbar, q, zp, zt_raw, zt


def _soft_face_iter(xy, z, faces, face_valid, w, h, sigma):
    """Yields per-face blocks: (fi, idx, slices, ndc pixel coords, v_ndc, zf)."""
    ndc = _ndc_verts(xy, w, h)
    pad_x = np.sqrt(SUPPORT_FACTOR * sigma) * w / 2.0
    pad_y = np.sqrt(SUPPORT_FACTOR * sigma) * h / 2.0
    for fi in range(faces.shape[0]):
        if not face_valid[fi]:
            continue
        idx = faces[fi]
        v_ndc = ndc[idx]
        area = (v_ndc[1, 0] - v_ndc[0, 0]) * (v_ndc[2, 1] - v_ndc[0, 1]) - (
            v_ndc[1, 1] - v_ndc[0, 1]
        ) * (v_ndc[2, 0] - v_ndc[0, 0])
        if abs(area) < _AREA_EPS:
            continue
        x0, x1, y0, y1 = _face_bbox_px(xy[idx], w, h, pad_x, pad_y)
        if x0 >= x1 or y0 >= y1:
            continue
        px, py = _pixel_grid(x0, x1, y0, y1)
        pnx = 2.0 * px / w - 1.0
        pny = 2.0 * py / h - 1.0
        yield fi, idx, (slice(y0, y1), slice(x0, x1)), pnx, pny, v_ndc, z[idx]


def soft_forward(xy, z, faces, face_valid, w, h, near, far, sigma, gamma, bg_eps, colors, bg_color):
    """Softmax-aggregated translucent render.

    Returns (rgb (h,w,3), alpha (h,w), m (h,w), denom (h,w)); m and denom are
    the stabilization buffers reused by the backward pass.
    """
    m = np.full((h, w), bg_eps)
    for fi, idx, sl, pnx, pny, v_ndc, zf in _soft_face_iter(xy, z, faces, face_valid, w, h, sigma):
        b, d2, kmin, tmin, sign, support, cov = _coverage_block(pnx, pny, v_ndc, sigma)
        if not support.any():
            continue
        _, _, _, _, _, _, zt = _soft_depth(b, zf, near, far)
        block = np.where(support, zt, -np.inf).reshape(m[sl].shape)
        np.maximum(m[sl], block, out=m[sl])

    num = np.zeros((h, w, 3))
    den = np.zeros((h, w))
    for fi, idx, sl, pnx, pny, v_ndc, zf in _soft_face_iter(xy, z, faces, face_valid, w, h, sigma):
        b, d2, kmin, tmin, sign, support, cov = _coverage_block(pnx, pny, v_ndc, sigma)
        if not support.any():
            continue
        _, _, _, _, _, _, zt = _soft_depth(b, zf, near, far)
        wgt = np.where(support, cov * np.exp(np.minimum(zt - m[sl].ravel(), 0.0) / gamma), 0.0)
        den[sl] += wgt.reshape(den[sl].shape)
        num[sl] += wgt.reshape(den[sl].shape)[:, :, None] * colors[fi]

    bg_w = np.exp((bg_eps - m) / gamma)
    denom = den + bg_w
    rgb = (num + bg_w[:, :, None] * np.asarray(bg_color)) / denom[:, :, None]
    alpha = den / denom
    return rgb, alpha, m, denom


def _accumulate_cov_grad(g_cov, cov, sign, sigma, pnx, pny, v_ndc, kmin, tmin, grad_v):
    """Route dL/dD into the face's three NDC vertex positions."""
    g_d2 = g_cov * cov * (1.0 - cov) * sign / sigma
    edges = ((0, 1), (1, 2), (2, 0))
    for k, (i, j) in enumerate(edges):
        on_k = kmin == k
        if not on_k.any():
            continue
        g = g_d2[on_k]
        t = tmin[on_k]
        px, py = pnx[on_k], pny[on_k]
        ax, ay = v_ndc[i]
        bx, by = v_ndc[j]
        rx = px - (ax + t * (bx - ax))
        ry = py - (ay + t * (by - ay))
        # d d2/da = -2 r (1-t), d d2/db = -2 r t (projection term vanishes)
        grad_v[i, 0] += np.sum(g * (-2.0 * rx * (1.0 - t)))
        grad_v[i, 1] += np.sum(g * (-2.0 * ry * (1.0 - t)))
        grad_v[j, 0] += np.sum(g * (-2.0 * rx * t))
        grad_v[j, 1] += np.sum(g * (-2.0 * ry * t))


def _bary_grad_to_verts(g_b, px, py, v_ndc, b, grad_v):
    """Route dL/db (affine barycentrics) into NDC vertex positions."""
    (x1, y1), (x2, y2), (x3, y3) = v_ndc
    area = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)
    dA = np.array([[y2 - y3, x3 - x2], [y3 - y1, x1 - x3], [y1 - y2, x2 - x1]])
    # de_k/dv as functions of the pixel: e1 pairs (v2,v3), e2 (v3,v1), e3 (v1,v2)
    de = {
        (0, 1): (y3 - py, -(x3 - px)),
        (0, 2): (-(y2 - py), x2 - px),
        (1, 2): (y1 - py, -(x1 - px)),
        (1, 0): (-(y3 - py), x3 - px),
        (2, 0): (y2 - py, -(x2 - px)),
        (2, 1): (-(y1 - py), x1 - px),
    }
    gb_scaled = g_b / area
    for k in range(3):
        gk = gb_scaled[:, k]
        bk = b[:, k]
        for vtx in range(3):
            if (k, vtx) in de:
                dex, dey = de[(k, vtx)]
                grad_v[vtx, 0] += np.sum(gk * (dex - bk * dA[vtx, 0]))
                grad_v[vtx, 1] += np.sum(gk * (dey - bk * dA[vtx, 1]))
            else:
                grad_v[vtx, 0] += np.sum(gk * (-bk * dA[vtx, 0]))
                grad_v[vtx, 1] += np.sum(gk * (-bk * dA[vtx, 1]))


def soft_backward(
    xy, z, faces, face_valid, w, h, near, far, sigma, gamma, bg_eps,
    colors, bg_color, m, denom, rgb, alpha, grad_rgb, grad_alpha,
):
    """Gradients of the soft render w.r.t. projected vertex xy and depth."""
    grad_xy = np.zeros_like(xy)
    grad_z = np.zeros_like(z)
    for fi, idx, sl, pnx, pny, v_ndc, zf in _soft_face_iter(xy, z, faces, face_valid, w, h, sigma):
        b, d2, kmin, tmin, sign, support, cov = _coverage_block(pnx, pny, v_ndc, sigma)
        if not support.any():
            continue
        c, s, wbar, q, zp, zt_raw, zt = _soft_depth(b, zf, near, far)

        m_blk = m[sl].ravel()
        den_blk = denom[sl].ravel()
        rgb_blk = rgb[sl].reshape(-1, 3)
        alpha_blk = alpha[sl].ravel()
        go_rgb = grad_rgb[sl].reshape(-1, 3)
        go_alpha = grad_alpha[sl].ravel()

        e_j = np.where(support, np.exp(np.minimum(zt - m_blk, 0.0) / gamma), 0.0)
        diff = colors[fi][None, :] - rgb_blk
        common = (go_rgb * diff).sum(axis=1) + go_alpha * (1.0 - alpha_blk)
        g_cov = common * e_j / den_blk
        g_zt = common * cov * e_j / (gamma * den_blk)

        grad_v = np.zeros((3, 2))
        _accumulate_cov_grad(g_cov, cov, sign, sigma, pnx, pny, v_ndc, kmin, tmin, grad_v)

        # depth chain: zt -> zp -> (wbar, z)
        live = (zt_raw > 0.0) & (zt_raw < 1.0) & support
        if live.any():
            g_zp = np.where(live, -g_zt / (far - near), 0.0)
            g_q = -(zp ** 2) * g_zp
            g_wbar = g_q[:, None] / zf[None, :]
            grad_z[idx] += np.sum(-g_q[:, None] * wbar / (zf[None, :] ** 2), axis=0)
            inner = (g_wbar * wbar).sum(axis=1)
            g_c = (g_wbar - inner[:, None]) / s[:, None]
            g_b = np.where((b > 0.0) & (b < 1.0), g_c, 0.0)
            _bary_grad_to_verts(g_b, pnx, pny, v_ndc, b, grad_v)

        grad_xy[idx, 0] += grad_v[:, 0] * 2.0 / w
        grad_xy[idx, 1] += grad_v[:, 1] * 2.0 / h
    return grad_xy, grad_z


def silhouette_forward(xy, faces, face_valid, w, h, sigma):
    """Occupancy S = 1 - prod_j (1 - D_j). Returns (sil, survival product)."""
    prod = np.ones((h, w))
    # depth plays no role; reuse the face iterator with dummy z
    zdummy = np.ones(xy.shape[0])
    for fi, idx, sl, pnx, pny, v_ndc, zf in _soft_face_iter(xy, zdummy, faces, face_valid, w, h, sigma):
        b, d2, kmin, tmin, sign, support, cov = _coverage_block(pnx, pny, v_ndc, sigma)
        if not support.any():
            continue
        factor = np.where(support, 1.0 - cov, 1.0)
        prod[sl] *= factor.reshape(prod[sl].shape)
    return 1.0 - prod, prod


def silhouette_backward(xy, faces, face_valid, w, h, sigma, prod, grad_sil):
    grad_xy = np.zeros_like(xy)
    zdummy = np.ones(xy.shape[0])
    for fi, idx, sl, pnx, pny, v_ndc, zf in _soft_face_iter(xy, zdummy, faces, face_valid, w, h, sigma):
        b, d2, kmin, tmin, sign, support, cov = _coverage_block(pnx, pny, v_ndc, sigma)
        if not support.any():
            continue
        go = grad_sil[sl].ravel()
        prod_blk = prod[sl].ravel()
        # dS/dD_j = prod_{k!=j}(1-D_k); support pixels have 1-D >= sigmoid(-30) > 0
        rest = np.where(support, prod_blk / np.maximum(1.0 - cov, 1e-300), 0.0)
        g_cov = go * rest
        grad_v = np.zeros((3, 2))
        _accumulate_cov_grad(g_cov, cov, sign, sigma, pnx, pny, v_ndc, kmin, tmin, grad_v)
        grad_xy[idx, 0] += grad_v[:, 0] * 2.0 / w
        grad_xy[idx, 1] += grad_v[:, 1] * 2.0 / h
    return grad_xy


# ---------------------------------------------------------------------------
# multi-resolution hash encoding

_H2 = np.uint64(2654435761)
_H3 = np.uint64(805459861)


def _corner_hash(cx, cy, cz, table_size):
    """(x1 XOR x2*2654435761 XOR x3*805459861) mod T, in wrapping uint64."""
    h = cx.astype(np.uint64) ^ (cy.astype(np.uint64) * _H2) ^ (cz.astype(np.uint64) * _H3)
    return (h & np.uint64(table_size - 1)).astype(np.int64)


def hash_encode_forward(t01, tables, resolutions):
    """Trilinear multi-level hash encoding of points in [0,1]^3.

    tables: (L,T,F). Returns (N, L*F) features.
    """
    n = t01.shape[0]
    levels, table_size, feat = tables.shape
    out = np.empty((n, levels * feat))
    for lv in range(levels):
        res = int(resolutions[lv])
        xs = t01 * res
        c0 = np.minimum(np.floor(xs), res - 1).astype(np.int64)
        c0 = np.maximum(c0, 0)
        frac = xs - c0
        acc = np.zeros((n, feat))
        for corner in range(8):
            dx, dy, dz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
            wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
            hidx = _corner_hash(c0[:, 0] + dx, c0[:, 1] + dy, c0[:, 2] + dz, table_size)
            acc += (wx * wy * wz)[:, None] * tables[lv][hidx]
        out[:, lv * feat:(lv + 1) * feat] = acc
    return out


def hash_encode_backward(t01, tables, resolutions, grad_out):
    """Gradients w.r.t. the query points and the hash tables."""
    n = t01.shape[0]
    levels, table_size, feat = tables.shape
    grad_t = np.zeros_like(t01)
    grad_tab = np.zeros_like(tables)
    for lv in range(levels):
        res = int(resolutions[lv])
        xs = t01 * res
        c0 = np.minimum(np.floor(xs), res - 1).astype(np.int64)
        c0 = np.maximum(c0, 0)
        frac = xs - c0
        go = grad_out[:, lv * feat:(lv + 1) * feat]
        for corner in range(8):
            dx, dy, dz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
            wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
            sx = 1.0 if dx else -1.0
            sy = 1.0 if dy else -1.0
            sz = 1.0 if dz else -1.0
            hidx = _corner_hash(c0[:, 0] + dx, c0[:, 1] + dy, c0[:, 2] + dz, table_size)
            feat_vals = tables[lv][hidx]
            np.add.at(grad_tab[lv], hidx, (wx * wy * wz)[:, None] * go)
            g_feat = (go * feat_vals).sum(axis=1)
            grad_t[:, 0] += g_feat * sx * wy * wz * res
            grad_t[:, 1] += g_feat * wx * sy * wz * res
            grad_t[:, 2] += g_feat * wx * wy * sz * res
    return grad_t, grad_tab


# ---------------------------------------------------------------------------
# exact point-to-triangle distance (chunked brute force; the compiled core
# uses a BVH instead)


def point_triangle_dist2(points, tri):
    """Squared distance from points (N,3) to a single triangle (3,3)."""
    a, b, c = tri
    ab, ac = b - a, c - a
    ap = points - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = points - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = points - c
    d5 = cp @ ab
    d6 = cp @ ac

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    denom_ab = np.maximum(d1 - d3, 1e-300)
    denom_ac = np.maximum(d2 - d6, 1e-300)
    edge_bc_num = d4 - d3
    edge_bc_den = np.maximum((d4 - d3) + (d5 - d6), 1e-300)

    closest = np.empty_like(points)
    # region vertex A
    mask = (d1 <= 0) & (d2 <= 0)
    closest[mask] = a
    # vertex B
    m2 = (~mask) & (d3 >= 0) & (d4 <= d3)
    closest[m2] = b
    done = mask | m2
    # vertex C
    m3 = (~done) & (d6 >= 0) & (d5 <= d6)
    closest[m3] = c
    done |= m3
    # edge AB
    m4 = (~done) & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = (d1 / denom_ab)[m4]
    closest[m4] = a + t[:, None] * ab
    done |= m4
    # edge AC
    m5 = (~done) & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = (d2 / denom_ac)[m5]
    closest[m5] = a + t[:, None] * ac
    done |= m5
    # edge BC
    m6 = (~done) & (va <= 0) & (edge_bc_num >= 0) & ((d5 - d6) >= 0)
    t = (edge_bc_num / edge_bc_den)[m6]
    closest[m6] = b + t[:, None] * (c - b)
    done |= m6
    # interior
    mi = ~done
    if mi.any():
        denom = np.maximum(va + vb + vc, 1e-300)
        v = (vb / denom)[mi]
        w_ = (vc / denom)[mi]
        closest[mi] = a + v[:, None] * ab + w_[:, None] * ac
    diff = points - closest
    return (diff * diff).sum(axis=1)


def nearest_dist2(points, tri_verts):
    """Min squared distance from each point to any triangle (brute force)."""
    best = np.full(points.shape[0], np.inf)
    for f in range(tri_verts.shape[0]):
        d2 = point_triangle_dist2(points, tri_verts[f])
        np.minimum(best, d2, out=best)
    return best
