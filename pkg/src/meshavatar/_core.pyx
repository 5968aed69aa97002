# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled hot kernels. Semantics mirror meshavatar.raster._kernels_py;
see that module for the conventions (pixel centers, NDC distances, support
cutoff, determinism contract)."""

from libc.math cimport ceil, exp, floor, sqrt, INFINITY
from libc.stdint cimport int64_t, uint64_t, uint8_t

DEF SUPPORT_FACTOR = 30.0
DEF AREA_EPS = 1e-14
DEF HARD_AREA_EPS = 1e-12


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _seg_d2(double px, double py, double ax, double ay,
                           double bx, double by, double* t_out) nogil:
    cdef double ux = bx - ax
    cdef double uy = by - ay
    cdef double denom = ux * ux + uy * uy
    cdef double t, rx, ry
    if denom < 1e-300:
        t = 0.0
    else:
        t = ((px - ax) * ux + (py - ay) * uy) / denom
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    rx = px - (ax + t * ux)
    ry = py - (ay + t * uy)
    t_out[0] = t
    return rx * rx + ry * ry


cdef inline void _edge_funcs(double px, double py,
                             double x1, double y1, double x2, double y2,
                             double x3, double y3, double area,
                             double* b1, double* b2, double* b3) nogil:
    b1[0] = ((x2 - px) * (y3 - py) - (y2 - py) * (x3 - px)) / area
    b2[0] = ((x3 - px) * (y1 - py) - (y3 - py) * (x1 - px)) / area
    b3[0] = ((x1 - px) * (y2 - py) - (y1 - py) * (x2 - px)) / area


cdef inline int _coverage(double px, double py,
                          double x1, double y1, double x2, double y2,
                          double x3, double y3, double area, double sigma,
                          double* b, double* d2_out, int* kmin_out,
                          double* tmin_out, double* sign_out,
                          double* cov_out) nogil:
    """Returns 1 if the pixel is in the face's support, filling outputs."""
    cdef double d2, dk, tk, tmin
    cdef int inside, kmin
    _edge_funcs(px, py, x1, y1, x2, y2, x3, y3, area, &b[0], &b[1], &b[2])
    inside = b[0] >= 0.0 and b[1] >= 0.0 and b[2] >= 0.0

    d2 = _seg_d2(px, py, x1, y1, x2, y2, &tmin)
    kmin = 0
    dk = _seg_d2(px, py, x2, y2, x3, y3, &tk)
    if dk < d2:
        d2 = dk; kmin = 1; tmin = tk
    dk = _seg_d2(px, py, x3, y3, x1, y1, &tk)
    if dk < d2:
        d2 = dk; kmin = 2; tmin = tk

    d2_out[0] = d2
    kmin_out[0] = kmin
    tmin_out[0] = tmin
    sign_out[0] = 1.0 if inside else -1.0
    if (not inside) and d2 > SUPPORT_FACTOR * sigma:
        cov_out[0] = 0.0
        return 0
    cov_out[0] = _sigmoid(sign_out[0] * d2 / sigma)
    return 1


cdef inline void _depth_terms(double* b, double z1, double z2, double z3,
                              double near, double far,
                              double* c, double* s_out, double* wbar,
                              double* zp_out, double* zt_raw_out,
                              double* zt_out) nogil:
    cdef int k
    cdef double s = 0.0, q = 0.0, zp, zt_raw, zt
    cdef double z[3]
    z[0] = z1; z[1] = z2; z[2] = z3
    for k in range(3):
        c[k] = b[k]
        if c[k] < 0.0:
            c[k] = 0.0
        elif c[k] > 1.0:
            c[k] = 1.0
        s += c[k]
    for k in range(3):
        wbar[k] = c[k] / s
        q += wbar[k] / z[k]
    zp = 1.0 / q
    zt_raw = (far - zp) / (far - near)
    zt = zt_raw
    if zt < 0.0:
        zt = 0.0
    elif zt > 1.0:
        zt = 1.0
    s_out[0] = s
    zp_out[0] = zp
    zt_raw_out[0] = zt_raw
    zt_out[0] = zt


cdef inline void _face_ndc(const double[:, ::1] xy, const int64_t[:, ::1] faces,
                           Py_ssize_t fi, int w, int h, double* vx, double* vy,
                           double* area) nogil:
    cdef int k
    for k in range(3):
        vx[k] = 2.0 * xy[faces[fi, k], 0] / w - 1.0
        vy[k] = 2.0 * xy[faces[fi, k], 1] / h - 1.0
    area[0] = (vx[1] - vx[0]) * (vy[2] - vy[0]) - (vy[1] - vy[0]) * (vx[2] - vx[0])


cdef inline void _face_bbox_px(const double[:, ::1] xy, const int64_t[:, ::1] faces,
                               Py_ssize_t fi, int w, int h, double pad_x, double pad_y,
                               int* x0, int* x1, int* y0, int* y1) nogil:
    cdef double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY
    cdef double v
    cdef int k
    for k in range(3):
        v = xy[faces[fi, k], 0]
        if v < xmin: xmin = v
        if v > xmax: xmax = v
        v = xy[faces[fi, k], 1]
        if v < ymin: ymin = v
        if v > ymax: ymax = v
    x0[0] = <int>floor(xmin - pad_x)
    x1[0] = <int>ceil(xmax + pad_x) + 1
    y0[0] = <int>floor(ymin - pad_y)
    y1[0] = <int>ceil(ymax + pad_y) + 1
    if x0[0] < 0: x0[0] = 0
    if y0[0] < 0: y0[0] = 0
    if x1[0] > w: x1[0] = w
    if y1[0] > h: y1[0] = h


def hard_rasterize(const double[:, ::1] xy, const double[::1] z,
                   const int64_t[:, ::1] faces, const uint8_t[::1] face_valid,
                   int w, int h,
                   int64_t[:, ::1] face_img, double[:, :, ::1] bary,
                   double[:, ::1] depth, double[:, ::1] zbuf):
    cdef Py_ssize_t fi, nf = faces.shape[0]
    cdef int x0, x1, y0, y1, ix, iy
    cdef double px, py, area, q, d
    cdef double b[3]
    cdef double vx[3]
    cdef double vy[3]
    cdef double z1, z2, z3
    with nogil:
        for fi in range(nf):
            if not face_valid[fi]:
                continue
            _face_bbox_px(xy, faces, fi, w, h, 0.0, 0.0, &x0, &x1, &y0, &y1)
            if x0 >= x1 or y0 >= y1:
                continue
            vx[0] = xy[faces[fi, 0], 0]; vy[0] = xy[faces[fi, 0], 1]
            vx[1] = xy[faces[fi, 1], 0]; vy[1] = xy[faces[fi, 1], 1]
            vx[2] = xy[faces[fi, 2], 0]; vy[2] = xy[faces[fi, 2], 1]
            area = (vx[1] - vx[0]) * (vy[2] - vy[0]) - (vy[1] - vy[0]) * (vx[2] - vx[0])
            if -HARD_AREA_EPS < area < HARD_AREA_EPS:
                continue
            z1 = z[faces[fi, 0]]; z2 = z[faces[fi, 1]]; z3 = z[faces[fi, 2]]
            for iy in range(y0, y1):
                py = iy + 0.5
                for ix in range(x0, x1):
                    px = ix + 0.5
                    _edge_funcs(px, py, vx[0], vy[0], vx[1], vy[1], vx[2], vy[2], area,
                                &b[0], &b[1], &b[2])
                    if b[0] < 0.0 or b[1] < 0.0 or b[2] < 0.0:
                        continue
                    q = b[0] / z1 + b[1] / z2 + b[2] / z3
                    d = 1.0 / q
                    if d < zbuf[iy, ix]:
                        zbuf[iy, ix] = d
                        face_img[iy, ix] = fi
                        depth[iy, ix] = d
                        bary[iy, ix, 0] = b[0] / z1 * d
                        bary[iy, ix, 1] = b[1] / z2 * d
                        bary[iy, ix, 2] = b[2] / z3 * d


def soft_forward_tiles(Py_ssize_t t0, Py_ssize_t t1, int ntx, int tile,
                       const double[:, ::1] xy, const double[::1] z,
                       const int64_t[:, ::1] faces, const uint8_t[::1] face_valid,
                       int w, int h, double near, double far,
                       double sigma, double gamma,
                       const double[:, ::1] colors,
                       double[:, ::1] m, double[:, :, ::1] num, double[:, ::1] den):
    cdef Py_ssize_t ti, fi, nf = faces.shape[0]
    cdef int tx0, ty0, tx1, ty1, x0, x1, y0, y1, ix, iy, kmin, supp, passno
    cdef double pad_x = sqrt(SUPPORT_FACTOR * sigma) * w / 2.0
    cdef double pad_y = sqrt(SUPPORT_FACTOR * sigma) * h / 2.0
    cdef double px, py, area, d2, tmin, sign, cov, s, zp, zt_raw, zt, e, arg
    cdef double b[3]
    cdef double c[3]
    cdef double wbar[3]
    cdef double vx[3]
    cdef double vy[3]
    cdef double z1, z2, z3
    with nogil:
        for ti in range(t0, t1):
            tx0 = (ti % ntx) * tile
            ty0 = (ti // ntx) * tile
            tx1 = min(tx0 + tile, w)
            ty1 = min(ty0 + tile, h)
            # pass 0: per-pixel max logit; pass 1: weight accumulation
            for passno in range(2):
                for fi in range(nf):
                    if not face_valid[fi]:
                        continue
                    _face_ndc(xy, faces, fi, w, h, vx, vy, &area)
                    if -AREA_EPS < area < AREA_EPS:
                        continue
                    _face_bbox_px(xy, faces, fi, w, h, pad_x, pad_y, &x0, &x1, &y0, &y1)
                    if x0 < tx0: x0 = tx0
                    if y0 < ty0: y0 = ty0
                    if x1 > tx1: x1 = tx1
                    if y1 > ty1: y1 = ty1
                    if x0 >= x1 or y0 >= y1:
                        continue
                    z1 = z[faces[fi, 0]]; z2 = z[faces[fi, 1]]; z3 = z[faces[fi, 2]]
                    for iy in range(y0, y1):
                        py = 2.0 * (iy + 0.5) / h - 1.0
                        for ix in range(x0, x1):
                            px = 2.0 * (ix + 0.5) / w - 1.0
                            supp = _coverage(px, py, vx[0], vy[0], vx[1], vy[1], vx[2], vy[2],
                                             area, sigma, b, &d2, &kmin, &tmin, &sign, &cov)
                            if not supp:
                                continue
                            _depth_terms(b, z1, z2, z3, near, far, c, &s, wbar,
                                         &zp, &zt_raw, &zt)
                            if passno == 0:
                                if zt > m[iy, ix]:
                                    m[iy, ix] = zt
                            else:
                                arg = zt - m[iy, ix]
                                if arg > 0.0:
                                    arg = 0.0
                                e = cov * exp(arg / gamma)
                                den[iy, ix] += e
                                num[iy, ix, 0] += e * colors[fi, 0]
                                num[iy, ix, 1] += e * colors[fi, 1]
                                num[iy, ix, 2] += e * colors[fi, 2]


cdef inline void _cov_grad_to_verts(double g_cov, double cov, double sign, double sigma,
                                    double px, double py, int kmin, double tmin,
                                    double* vx, double* vy, double* gvx, double* gvy) nogil:
    cdef double g_d2 = g_cov * cov * (1.0 - cov) * sign / sigma
    cdef int i = kmin
    cdef int j = (kmin + 1) % 3
    cdef double rx = px - (vx[i] + tmin * (vx[j] - vx[i]))
    cdef double ry = py - (vy[i] + tmin * (vy[j] - vy[i]))
    gvx[i] += g_d2 * (-2.0 * rx * (1.0 - tmin))
    gvy[i] += g_d2 * (-2.0 * ry * (1.0 - tmin))
    gvx[j] += g_d2 * (-2.0 * rx * tmin)
    gvy[j] += g_d2 * (-2.0 * ry * tmin)


cdef inline void _bary_grad_to_verts(double* g_b, double px, double py,
                                     double* vx, double* vy, double area, double* b,
                                     double* gvx, double* gvy) nogil:
    cdef double dAx[3]
    cdef double dAy[3]
    cdef double g, bk
    cdef int k, v
    dAx[0] = vy[1] - vy[2]; dAy[0] = vx[2] - vx[1]
    dAx[1] = vy[2] - vy[0]; dAy[1] = vx[0] - vx[2]
    dAx[2] = vy[0] - vy[1]; dAy[2] = vx[1] - vx[0]
    for k in range(3):
        g = g_b[k] / area
        if g == 0.0:
            continue
        bk = b[k]
        for v in range(3):
            gvx[v] += g * (-bk * dAx[v])
            gvy[v] += g * (-bk * dAy[v])
        # de_k/dv terms: e1 pairs (v2,v3), e2 (v3,v1), e3 (v1,v2)
        if k == 0:
            gvx[1] += g * (vy[2] - py); gvy[1] += g * (-(vx[2] - px))
            gvx[2] += g * (-(vy[1] - py)); gvy[2] += g * (vx[1] - px)
        elif k == 1:
            gvx[2] += g * (vy[0] - py); gvy[2] += g * (-(vx[0] - px))
            gvx[0] += g * (-(vy[2] - py)); gvy[0] += g * (vx[2] - px)
        else:
            gvx[0] += g * (vy[1] - py); gvy[0] += g * (-(vx[1] - px))
            gvx[1] += g * (-(vy[0] - py)); gvy[1] += g * (vx[0] - px)


def soft_backward_faces(Py_ssize_t f0, Py_ssize_t f1,
                        const double[:, ::1] xy, const double[::1] z,
                        const int64_t[:, ::1] faces, const uint8_t[::1] face_valid,
                        int w, int h, double near, double far,
                        double sigma, double gamma,
                        const double[:, ::1] colors,
                        const double[:, ::1] m, const double[:, ::1] denom,
                        const double[:, :, ::1] rgb, const double[:, ::1] alpha,
                        const double[:, :, ::1] grad_rgb, const double[:, ::1] grad_alpha,
                        double[:, :, ::1] part_xy, double[:, ::1] part_z):
    cdef Py_ssize_t fi
    cdef int x0, x1, y0, y1, ix, iy, kmin, supp, k
    cdef double pad_x = sqrt(SUPPORT_FACTOR * sigma) * w / 2.0
    cdef double pad_y = sqrt(SUPPORT_FACTOR * sigma) * h / 2.0
    cdef double px, py, area, d2, tmin, sign, cov, s, zp, zt_raw, zt, e, arg
    cdef double common, g_cov, g_zt, g_zp, g_q, inner
    cdef double b[3]
    cdef double c[3]
    cdef double wbar[3]
    cdef double g_wbar[3]
    cdef double g_b[3]
    cdef double vx[3]
    cdef double vy[3]
    cdef double gvx[3]
    cdef double gvy[3]
    cdef double gz[3]
    cdef double zf[3]
    with nogil:
        for fi in range(f0, f1):
            if not face_valid[fi]:
                continue
            _face_ndc(xy, faces, fi, w, h, vx, vy, &area)
            if -AREA_EPS < area < AREA_EPS:
                continue
            _face_bbox_px(xy, faces, fi, w, h, pad_x, pad_y, &x0, &x1, &y0, &y1)
            if x0 >= x1 or y0 >= y1:
                continue
            for k in range(3):
                zf[k] = z[faces[fi, k]]
                gvx[k] = 0.0; gvy[k] = 0.0; gz[k] = 0.0
            for iy in range(y0, y1):
                py = 2.0 * (iy + 0.5) / h - 1.0
                for ix in range(x0, x1):
                    px = 2.0 * (ix + 0.5) / w - 1.0
                    supp = _coverage(px, py, vx[0], vy[0], vx[1], vy[1], vx[2], vy[2],
                                     area, sigma, b, &d2, &kmin, &tmin, &sign, &cov)
                    if not supp:
                        continue
                    _depth_terms(b, zf[0], zf[1], zf[2], near, far, c, &s, wbar,
                                 &zp, &zt_raw, &zt)
                    arg = zt - m[iy, ix]
                    if arg > 0.0:
                        arg = 0.0
                    e = exp(arg / gamma)
                    common = (grad_rgb[iy, ix, 0] * (colors[fi, 0] - rgb[iy, ix, 0])
                              + grad_rgb[iy, ix, 1] * (colors[fi, 1] - rgb[iy, ix, 1])
                              + grad_rgb[iy, ix, 2] * (colors[fi, 2] - rgb[iy, ix, 2])
                              + grad_alpha[iy, ix] * (1.0 - alpha[iy, ix]))
                    g_cov = common * e / denom[iy, ix]
                    _cov_grad_to_verts(g_cov, cov, sign, sigma, px, py, kmin, tmin,
                                       vx, vy, gvx, gvy)
                    if 0.0 < zt_raw < 1.0:
                        g_zt = common * cov * e / (gamma * denom[iy, ix])
                        g_zp = -g_zt / (far - near)
                        g_q = -(zp * zp) * g_zp
                        inner = 0.0
                        for k in range(3):
                            g_wbar[k] = g_q / zf[k]
                            gz[k] += -g_q * wbar[k] / (zf[k] * zf[k])
                            inner += g_wbar[k] * wbar[k]
                        for k in range(3):
                            if 0.0 < b[k] < 1.0:
                                g_b[k] = (g_wbar[k] - inner) / s
                            else:
                                g_b[k] = 0.0
                        _bary_grad_to_verts(g_b, px, py, vx, vy, area, b, gvx, gvy)
            for k in range(3):
                part_xy[fi, k, 0] = gvx[k] * 2.0 / w
                part_xy[fi, k, 1] = gvy[k] * 2.0 / h
                part_z[fi, k] = gz[k]


def scatter_face_partials(const int64_t[:, ::1] faces,
                          const double[:, :, ::1] part_xy, const double[:, ::1] part_z,
                          double[:, ::1] grad_xy, double[::1] grad_z):
    cdef Py_ssize_t fi, nf = faces.shape[0]
    cdef int k
    cdef int64_t vid
    with nogil:
        for fi in range(nf):
            for k in range(3):
                vid = faces[fi, k]
                grad_xy[vid, 0] += part_xy[fi, k, 0]
                grad_xy[vid, 1] += part_xy[fi, k, 1]
                grad_z[vid] += part_z[fi, k]


def scatter_face_partials_xy(const int64_t[:, ::1] faces,
                             const double[:, :, ::1] part_xy, double[:, ::1] grad_xy):
    cdef Py_ssize_t fi, nf = faces.shape[0]
    cdef int k
    cdef int64_t vid
    with nogil:
        for fi in range(nf):
            for k in range(3):
                vid = faces[fi, k]
                grad_xy[vid, 0] += part_xy[fi, k, 0]
                grad_xy[vid, 1] += part_xy[fi, k, 1]


def silhouette_forward_tiles(Py_ssize_t t0, Py_ssize_t t1, int ntx, int tile,
                             const double[:, ::1] xy,
                             const int64_t[:, ::1] faces, const uint8_t[::1] face_valid,
                             int w, int h, double sigma, double[:, ::1] prod):
    cdef Py_ssize_t ti, fi, nf = faces.shape[0]
    cdef int tx0, ty0, tx1, ty1, x0, x1, y0, y1, ix, iy, kmin, supp
    cdef double pad_x = sqrt(SUPPORT_FACTOR * sigma) * w / 2.0
    cdef double pad_y = sqrt(SUPPORT_FACTOR * sigma) * h / 2.0
    cdef double px, py, area, d2, tmin, sign, cov
    cdef double b[3]
    cdef double vx[3]
    cdef double vy[3]
    with nogil:
        for ti in range(t0, t1):
            tx0 = (ti % ntx) * tile
            ty0 = (ti // ntx) * tile
            tx1 = min(tx0 + tile, w)
            ty1 = min(ty0 + tile, h)
            for fi in range(nf):
                if not face_valid[fi]:
                    continue
                _face_ndc(xy, faces, fi, w, h, vx, vy, &area)
                if -AREA_EPS < area < AREA_EPS:
                    continue
                _face_bbox_px(xy, faces, fi, w, h, pad_x, pad_y, &x0, &x1, &y0, &y1)
                if x0 < tx0: x0 = tx0
                if y0 < ty0: y0 = ty0
                if x1 > tx1: x1 = tx1
                if y1 > ty1: y1 = ty1
                if x0 >= x1 or y0 >= y1:
                    continue
                for iy in range(y0, y1):
                    py = 2.0 * (iy + 0.5) / h - 1.0
                    for ix in range(x0, x1):
                        px = 2.0 * (ix + 0.5) / w - 1.0
                        supp = _coverage(px, py, vx[0], vy[0], vx[1], vy[1], vx[2], vy[2],
                                         area, sigma, b, &d2, &kmin, &tmin, &sign, &cov)
                        if not supp:
                            continue
                        prod[iy, ix] *= (1.0 - cov)


def silhouette_backward_faces(Py_ssize_t f0, Py_ssize_t f1,
                              const double[:, ::1] xy,
                              const int64_t[:, ::1] faces, const uint8_t[::1] face_valid,
                              int w, int h, double sigma,
                              const double[:, ::1] prod, const double[:, ::1] grad_sil,
                              double[:, :, ::1] part_xy):
    cdef Py_ssize_t fi
    cdef int x0, x1, y0, y1, ix, iy, kmin, supp, k
    cdef double pad_x = sqrt(SUPPORT_FACTOR * sigma) * w / 2.0
    cdef double pad_y = sqrt(SUPPORT_FACTOR * sigma) * h / 2.0
    cdef double px, py, area, d2, tmin, sign, cov, rest, denom1, g_cov
    cdef double b[3]
    cdef double vx[3]
    cdef double vy[3]
    cdef double gvx[3]
    cdef double gvy[3]
    with nogil:
        for fi in range(f0, f1):
            if not face_valid[fi]:
                continue
            _face_ndc(xy, faces, fi, w, h, vx, vy, &area)
            if -AREA_EPS < area < AREA_EPS:
                continue
            _face_bbox_px(xy, faces, fi, w, h, pad_x, pad_y, &x0, &x1, &y0, &y1)
            if x0 >= x1 or y0 >= y1:
                continue
            for k in range(3):
                gvx[k] = 0.0; gvy[k] = 0.0
            for iy in range(y0, y1):
                py = 2.0 * (iy + 0.5) / h - 1.0
                for ix in range(x0, x1):
                    px = 2.0 * (ix + 0.5) / w - 1.0
                    supp = _coverage(px, py, vx[0], vy[0], vx[1], vy[1], vx[2], vy[2],
                                     area, sigma, b, &d2, &kmin, &tmin, &sign, &cov)
                    if not supp:
                        continue
                    denom1 = 1.0 - cov
                    if denom1 < 1e-300:
                        denom1 = 1e-300
                    rest = prod[iy, ix] / denom1
                    g_cov = grad_sil[iy, ix] * rest
                    _cov_grad_to_verts(g_cov, cov, sign, sigma, px, py, kmin, tmin,
                                       vx, vy, gvx, gvy)
            for k in range(3):
                part_xy[fi, k, 0] = gvx[k] * 2.0 / w
                part_xy[fi, k, 1] = gvy[k] * 2.0 / h


# ---------------------------------------------------------------------------
# multi-resolution hash encoding

cdef inline int64_t _corner_hash(int64_t cx, int64_t cy, int64_t cz, int64_t table_size) nogil:
    cdef uint64_t hval = (<uint64_t>cx) ^ ((<uint64_t>cy) * <uint64_t>2654435761UL) \
        ^ ((<uint64_t>cz) * <uint64_t>805459861UL)
    return <int64_t>(hval & <uint64_t>(table_size - 1))


def hash_encode_forward(const double[:, ::1] t01, const double[:, :, ::1] tables,
                        const int64_t[::1] resolutions, double[:, ::1] out):
    cdef Py_ssize_t n = t01.shape[0]
    cdef Py_ssize_t levels = tables.shape[0]
    cdef int64_t table_size = tables.shape[1]
    cdef Py_ssize_t feat = tables.shape[2]
    cdef Py_ssize_t i, lv, f
    cdef int corner, dx, dy, dz
    cdef int64_t res, c0x, c0y, c0z, hidx
    cdef double xsx, xsy, xsz, fx, fy, fz, wx, wy, wz, wgt
    with nogil:
        for lv in range(levels):
            res = resolutions[lv]
            for i in range(n):
                xsx = t01[i, 0] * res
                xsy = t01[i, 1] * res
                xsz = t01[i, 2] * res
                c0x = <int64_t>floor(xsx)
                c0y = <int64_t>floor(xsy)
                c0z = <int64_t>floor(xsz)
                if c0x > res - 1: c0x = res - 1
                if c0y > res - 1: c0y = res - 1
                if c0z > res - 1: c0z = res - 1
                if c0x < 0: c0x = 0
                if c0y < 0: c0y = 0
                if c0z < 0: c0z = 0
                fx = xsx - c0x; fy = xsy - c0y; fz = xsz - c0z
                for f in range(feat):
                    out[i, lv * feat + f] = 0.0
                for corner in range(8):
                    dx = corner & 1
                    dy = (corner >> 1) & 1
                    dz = (corner >> 2) & 1
                    wx = fx if dx else 1.0 - fx
                    wy = fy if dy else 1.0 - fy
                    wz = fz if dz else 1.0 - fz
                    wgt = wx * wy * wz
                    hidx = _corner_hash(c0x + dx, c0y + dy, c0z + dz, table_size)
                    for f in range(feat):
                        out[i, lv * feat + f] += wgt * tables[lv, hidx, f]


def hash_encode_backward(const double[:, ::1] t01, const double[:, :, ::1] tables,
                         const int64_t[::1] resolutions, const double[:, ::1] grad_out,
                         double[:, ::1] grad_t, double[:, :, ::1] grad_tab):
    cdef Py_ssize_t n = t01.shape[0]
    cdef Py_ssize_t levels = tables.shape[0]
    cdef int64_t table_size = tables.shape[1]
    cdef Py_ssize_t feat = tables.shape[2]
    cdef Py_ssize_t i, lv, f
    cdef int corner, dx, dy, dz
    cdef int64_t res, c0x, c0y, c0z, hidx
    cdef double xsx, xsy, xsz, fx, fy, fz, wx, wy, wz, wgt
    cdef double sx, sy, sz, g_feat
    with nogil:
        for lv in range(levels):
            res = resolutions[lv]
            for i in range(n):
                xsx = t01[i, 0] * res
                xsy = t01[i, 1] * res
                xsz = t01[i, 2] * res
                c0x = <int64_t>floor(xsx)
                c0y = <int64_t>floor(xsy)
                c0z = <int64_t>floor(xsz)
                if c0x > res - 1: c0x = res - 1
                if c0y > res - 1: c0y = res - 1
                if c0z > res - 1: c0z = res - 1
                if c0x < 0: c0x = 0
                if c0y < 0: c0y = 0
                if c0z < 0: c0z = 0
                fx = xsx - c0x; fy = xsy - c0y; fz = xsz - c0z
                for corner in range(8):
                    dx = corner & 1
                    dy = (corner >> 1) & 1
                    dz = (corner >> 2) & 1
                    wx = fx if dx else 1.0 - fx
                    wy = fy if dy else 1.0 - fy
                    wz = fz if dz else 1.0 - fz
                    sx = 1.0 if dx else -1.0
                    sy = 1.0 if dy else -1.0
                    sz = 1.0 if dz else -1.0
                    wgt = wx * wy * wz
                    hidx = _corner_hash(c0x + dx, c0y + dy, c0z + dz, table_size)
                    g_feat = 0.0
                    for f in range(feat):
                        grad_tab[lv, hidx, f] += wgt * grad_out[i, lv * feat + f]
                        g_feat += grad_out[i, lv * feat + f] * tables[lv, hidx, f]
                    grad_t[i, 0] += g_feat * sx * wy * wz * res
                    grad_t[i, 1] += g_feat * wx * sy * wz * res
                    grad_t[i, 2] += g_feat * wx * wy * sz * res


# ---------------------------------------------------------------------------
# exact nearest point-triangle distance over a BVH

cdef inline double _pt_tri_d2(double px, double py, double pz,
                              const double[:, :, ::1] tris, Py_ssize_t f) nogil:
    cdef double ax = tris[f, 0, 0], ay = tris[f, 0, 1], az = tris[f, 0, 2]
    cdef double bx = tris[f, 1, 0], by = tris[f, 1, 1], bz = tris[f, 1, 2]
    cdef double cx = tris[f, 2, 0], cy = tris[f, 2, 1], cz = tris[f, 2, 2]
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double bpx = px - bx, bpy = py - by, bpz = pz - bz
    cdef double cpx = px - cx, cpy = py - cy, cpz = pz - cz
    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double d3 = abx * bpx + aby * bpy + abz * bpz
    cdef double d4 = acx * bpx + acy * bpy + acz * bpz
    cdef double d5 = abx * cpx + aby * cpy + abz * cpz
    cdef double d6 = acx * cpx + acy * cpy + acz * cpz
    cdef double va = d3 * d6 - d5 * d4
    cdef double vb = d5 * d2 - d1 * d6
    cdef double vc = d1 * d4 - d3 * d2
    cdef double qx, qy, qz, v, w_, denom, dx, dy, dz

    if d1 <= 0.0 and d2 <= 0.0:
        qx = ax; qy = ay; qz = az
    elif d3 >= 0.0 and d4 <= d3:
        qx = bx; qy = by; qz = bz
    elif d6 >= 0.0 and d5 <= d6:
        qx = cx; qy = cy; qz = cz
    elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx = ax + v * abx; qy = ay + v * aby; qz = az + v * abz
    elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        v = d2 / (d2 - d6)
        qx = ax + v * acx; qy = ay + v * acy; qz = az + v * acz
    elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        v = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bx + v * (cx - bx); qy = by + v * (cy - by); qz = bz + v * (cz - bz)
    else:
        denom = va + vb + vc
        if denom < 1e-300:
            denom = 1e-300
        v = vb / denom
        w_ = vc / denom
        qx = ax + v * abx + w_ * acx
        qy = ay + v * aby + w_ * acy
        qz = az + v * abz + w_ * acz
    dx = px - qx; dy = py - qy; dz = pz - qz
    return dx * dx + dy * dy + dz * dz


cdef inline double _box_d2(double px, double py, double pz,
                           const double[:, ::1] node_min, const double[:, ::1] node_max,
                           Py_ssize_t node) nogil:
    cdef double d = 0.0, t
    t = node_min[node, 0] - px
    if t > 0: d += t * t
    t = px - node_max[node, 0]
    if t > 0: d += t * t
    t = node_min[node, 1] - py
    if t > 0: d += t * t
    t = py - node_max[node, 1]
    if t > 0: d += t * t
    t = node_min[node, 2] - pz
    if t > 0: d += t * t
    t = pz - node_max[node, 2]
    if t > 0: d += t * t
    return d


def bvh_nearest_dist2(const double[:, ::1] points, const double[:, :, ::1] tris,
                      const double[:, ::1] node_min, const double[:, ::1] node_max,
                      const int64_t[::1] node_left, const int64_t[::1] node_right,
                      const int64_t[::1] node_start, const int64_t[::1] node_count,
                      const int64_t[::1] tri_order, double[::1] out):
    cdef Py_ssize_t i, n = points.shape[0]
    cdef double px, py, pz, best, d, dl, dr
    cdef int64_t stack[128]
    cdef int sp
    cdef int64_t node, left, right, k
    with nogil:
        for i in range(n):
            px = points[i, 0]; py = points[i, 1]; pz = points[i, 2]
            best = INFINITY
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if _box_d2(px, py, pz, node_min, node_max, node) >= best:
                    continue
                left = node_left[node]
                if left < 0:
                    for k in range(node_start[node], node_start[node] + node_count[node]):
                        d = _pt_tri_d2(px, py, pz, tris, tri_order[k])
                        if d < best:
                            best = d
                else:
                    right = node_right[node]
                    dl = _box_d2(px, py, pz, node_min, node_max, left)
                    dr = _box_d2(px, py, pz, node_min, node_max, right)
                    if dl <= dr:
                        if dr < best and sp < 127:
                            stack[sp] = right; sp += 1
                        if dl < best and sp < 127:
                            stack[sp] = left; sp += 1
                    else:
                        if dl < best and sp < 127:
                            stack[sp] = left; sp += 1
                        if dr < best and sp < 127:
                            stack[sp] = right; sp += 1
            out[i] = best


# ---------------------------------------------------------------------------
# fused MLP forward (two rectified hidden layers + sigmoid head) for
# gradient-free shading; the training path uses the autograd ops

def mlp_forward(const double[:, ::1] x,
                const double[:, ::1] w1, const double[::1] b1,
                const double[:, ::1] w2, const double[::1] b2,
                const double[:, ::1] w3, const double[::1] b3,
                double[:, ::1] out):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d_in = x.shape[1]
    cdef Py_ssize_t h1 = w1.shape[1]
    cdef Py_ssize_t h2 = w2.shape[1]
    cdef Py_ssize_t d_out = w3.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    cdef double buf1[256]
    cdef double buf2[256]
    if h1 > 256 or h2 > 256:
        raise ValueError("fused mlp supports hidden width <= 256")
    with nogil:
        for i in range(n):
            for j in range(h1):
                acc = b1[j]
                for k in range(d_in):
                    acc += x[i, k] * w1[k, j]
                buf1[j] = acc if acc > 0.0 else 0.0
            for j in range(h2):
                acc = b2[j]
                for k in range(h1):
                    acc += buf1[k] * w2[k, j]
                buf2[j] = acc if acc > 0.0 else 0.0
            for j in range(d_out):
                acc = b3[j]
                for k in range(h2):
                    acc += buf2[k] * w3[k, j]
                out[i, j] = _sigmoid(acc)
