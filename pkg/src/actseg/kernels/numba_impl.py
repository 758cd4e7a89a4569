"""Numba-jitted implementations of the hot kernels.

Loop bodies mirror the expressions in numpy_impl so the two backends agree
numerically (same evaluation order, float64 throughout).
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def bilinear_resize(img, out_h, out_w):
    h, w, c = img.shape
    out = np.empty((out_h, out_w, c), dtype=np.float64)
    for oy in range(out_h):
        sy = (oy + 0.5) * (h / out_h) - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1.0:
            sy = h - 1.0
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for ox in range(out_w):
            sx = (ox + 0.5) * (w / out_w) - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1.0:
                sx = w - 1.0
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for ch in range(c):
                top = (1.0 - fx) * img[y0, x0, ch] + fx * img[y0, x1, ch]
                bot = (1.0 - fx) * img[y1, x0, ch] + fx * img[y1, x1, ch]
                out[oy, ox, ch] = (1.0 - fy) * top + fy * bot
    return out


@njit(cache=True)
def im2col3x3(x):
    n, c, h, w = x.shape
    cols = np.zeros((n, c * 9, h * w), dtype=x.dtype)
    for i in range(n):
        for ci in range(c):
            for ky in range(3):
                for kx in range(3):
                    row = ci * 9 + ky * 3 + kx
                    for y in range(h):
                        sy = y + ky - 1
                        if sy < 0 or sy >= h:
                            continue
                        for xx in range(w):
                            sx = xx + kx - 1
                            if 0 <= sx < w:
                                cols[i, row, y * w + xx] = x[i, ci, sy, sx]
    return cols


@njit(cache=True)
def col2im3x3(cols, h, w):
    n = cols.shape[0]
    c = cols.shape[1] // 9
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    for i in range(n):
        for ci in range(c):
            for ky in range(3):
                for kx in range(3):
                    row = ci * 9 + ky * 3 + kx
                    for y in range(h):
                        sy = y + ky - 1
                        if sy < 0 or sy >= h:
                            continue
                        for xx in range(w):
                            sx = xx + kx - 1
                            if 0 <= sx < w:
                                out[i, ci, sy, sx] += cols[i, row, y * w + xx]
    return out


@njit(cache=True)
def maxpool2x2(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    out = np.empty((n, c, h2, w2), dtype=x.dtype)
    arg = np.empty((n, c, h2, w2), dtype=np.uint8)
    for i in range(n):
        for ci in range(c):
            for y in range(h2):
                for xx in range(w2):
                    best = x[i, ci, 2 * y, 2 * xx]
                    bq = 0
                    for q in range(1, 4):
                        v = x[i, ci, 2 * y + q // 2, 2 * xx + q % 2]
                        if v > best:
                            best = v
                            bq = q
                    out[i, ci, y, xx] = best
                    arg[i, ci, y, xx] = bq
    return out, arg


@njit(cache=True)
def maxpool2x2_backward(grad, arg, h, w):
    n, c, h2, w2 = grad.shape
    out = np.zeros((n, c, h, w), dtype=grad.dtype)
    for i in range(n):
        for ci in range(c):
            for y in range(h2):
                for xx in range(w2):
                    q = arg[i, ci, y, xx]
                    out[i, ci, 2 * y + q // 2, 2 * xx + q % 2] = grad[i, ci, y, xx]
    return out


@njit(cache=True, parallel=True)
def gaussian_logpdf(z, mean, chol):
    n, d = z.shape
    log_det = 0.0
    for j in range(d):
        log_det += np.log(chol[j, j])
    log_det *= 2.0
    const = d * np.log(2.0 * np.pi)
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):  # rows are independent; parallel stays deterministic
        u = np.empty(d, dtype=np.float64)
        maha = 0.0
        for j in range(d):
            s = z[i, j] - mean[j]
            for k in range(j):
                s -= chol[j, k] * u[k]
            u[j] = s / chol[j, j]
            maha += u[j] * u[j]
        out[i] = -0.5 * (const + log_det + maha)
    return out


@njit(cache=True)
def accumulate_votes(x0s, y0s, ws, hs, cxs, cys, labels, risks,
                     n_labels, height, width, weight_mode):
    label_weight = np.zeros((n_labels, height, width), dtype=np.float64)
    min_dist = np.full((n_labels, height, width), np.inf, dtype=np.float64)
    risk_num = np.zeros((height, width), dtype=np.float64)
    risk_den = np.zeros((height, width), dtype=np.float64)
    for p in range(len(x0s)):
        x0 = max(int(x0s[p]), 0)
        y0 = max(int(y0s[p]), 0)
        x1 = min(int(x0s[p]) + int(ws[p]), width)
        y1 = min(int(y0s[p]) + int(hs[p]), height)
        if x1 <= x0 or y1 <= y0:
            continue
        r_cap = max(ws[p], hs[p]) / 2.0 + 1.0
        lab = int(labels[p])
        risk = risks[p]
        for y in range(y0, y1):
            dy = abs(y - cys[p])
            for xx in range(x0, x1):
                dx = abs(xx - cxs[p])
                d = dy if dy > dx else dx
                if weight_mode == 1:
                    wgt = 1.0
                elif weight_mode == 2:
                    wgt = np.exp(-2.0 * (d / r_cap) ** 2)
                else:
                    wgt = 1.0 - d / r_cap
                    if wgt < 0.0:
                        wgt = 0.0
                label_weight[lab, y, xx] += wgt
                if d < min_dist[lab, y, xx]:
                    min_dist[lab, y, xx] = d
                risk_num[y, xx] += wgt * risk
                risk_den[y, xx] += wgt
    return label_weight, min_dist, risk_num, risk_den
