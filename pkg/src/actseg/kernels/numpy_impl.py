"""Vectorized numpy implementations of the hot kernels.

These are the fallback path used when numba is unavailable or when
ACTSEG_KERNELS=numpy is set. Accumulation loops run in the same patch /
element order as the numba variants so both backends stay numerically
aligned.
"""

import numpy as np
from scipy.linalg import solve_triangular


def bilinear_resize(img, out_h, out_w):
    """Resize an (H, W, C) float64 image with half-pixel bilinear sampling."""
    h, w, _ = img.shape
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    v00 = img[y0[:, None], x0[None, :]]
    v01 = img[y0[:, None], x1[None, :]]
    v10 = img[y1[:, None], x0[None, :]]
    v11 = img[y1[:, None], x1[None, :]]
    top = (1.0 - fx) * v00 + fx * v01
    bot = (1.0 - fx) * v10 + fx * v11
    return (1.0 - fy) * top + fy * bot


def im2col3x3(x):
    """Unfold (N, C, H, W) into (N, C*9, H*W) patches for 3x3 same conv."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    views = [xp[:, :, ky:ky + h, kx:kx + w] for ky in range(3) for kx in range(3)]
    cols = np.stack(views, axis=2)  # (N, C, 9, H, W)
    return np.ascontiguousarray(cols.reshape(n, c * 9, h * w))


def col2im3x3(cols, h, w):
    """Scatter-add inverse of im2col3x3; returns (N, C, H, W)."""
    n = cols.shape[0]
    c = cols.shape[1] // 9
    cols = cols.reshape(n, c, 9, h, w)
    xp = np.zeros((n, c, h + 2, w + 2), dtype=cols.dtype)
    k = 0
    for ky in range(3):
        for kx in range(3):
            xp[:, :, ky:ky + h, kx:kx + w] += cols[:, :, k]
            k += 1
    return xp[:, :, 1:-1, 1:-1].copy()


def maxpool2x2(x):
    """2x2 max pooling with stride 2. Returns (pooled, quadrant argmax)."""
    n, c, h, w = x.shape
    r = x.reshape(n, c, h // 2, 2, w // 2, 2)
    quads = r.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = quads.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(quads, arg[..., None].astype(np.int64), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2x2_backward(grad, arg, h, w):
    """Route pooled gradients back to the argmax positions."""
    n, c, h2, w2 = grad.shape
    gx = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
    np.put_along_axis(gx, arg[..., None].astype(np.int64), grad[..., None], axis=-1)
    gx = gx.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(gx.reshape(n, c, h, w))


def gaussian_logpdf(z, mean, chol):
    """Log density of rows of z under N(mean, L L^T) given lower Cholesky L."""
    d = mean.shape[0]
    diff = (z - mean[None, :]).T  # (D, N)
    u = solve_triangular(chol, diff, lower=True)
    maha = np.einsum("dn,dn->n", u, u)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det + maha)


def accumulate_votes(x0s, y0s, ws, hs, cxs, cys, labels, risks,
                     n_labels, height, width, weight_mode):
    """Accumulate per-pixel weighted votes from patch predictions.

    weight_mode: 0 linear decay 1 - d/R, 1 uniform, 2 gaussian exp(-2 (d/R)^2)
    with d the Chebyshev distance to the patch center and R = max(w, h)/2 + 1.

    Returns (label_weight (L,H,W), min_dist (L,H,W), risk_num (H,W),
    risk_den (H,W)).
    """
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
        ys = np.arange(y0, y1, dtype=np.float64)
        xs = np.arange(x0, x1, dtype=np.float64)
        d = np.maximum(np.abs(ys - cys[p])[:, None], np.abs(xs - cxs[p])[None, :])
        if weight_mode == 1:
            wgt = np.ones_like(d)
        elif weight_mode == 2:
            wgt = np.exp(-2.0 * (d / r_cap) ** 2)
        else:
            wgt = np.maximum(0.0, 1.0 - d / r_cap)
        lab = int(labels[p])
        label_weight[lab, y0:y1, x0:x1] += wgt
        np.minimum(min_dist[lab, y0:y1, x0:x1], d, out=min_dist[lab, y0:y1, x0:x1])
        risk_num[y0:y1, x0:x1] += wgt * risks[p]
        risk_den[y0:y1, x0:x1] += wgt
    return label_weight, min_dist, risk_num, risk_den
