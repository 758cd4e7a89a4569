"""A compact convolutional feature extractor with explicit backward passes.

Five conv blocks (3x3 same conv, batch norm, relu, 2x2 max pool), global
average pooling, a linear head, and a hard L2 normalization layer so every
embedding is unit length. Batch normalization is what keeps the
contrastive objective from collapsing the feature rank: once all samples
look alike the per-batch variance shrinks and the normalization re-amplifies
their differences, so the collapse point is repelling rather than
absorbing. Inference uses running statistics and is deterministic per
sample. The first conv accepts the 6-channel foreground+background
tensors. Forward/backward run on the shared kernels module, so the
numba/numpy backend switch applies here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .. import kernels
from ..errors import ShapeMismatch

DEFAULT_CHANNELS = (16, 32, 64, 64, 64)

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1


@dataclass(eq=False)
class EncoderParams:
    """Parameter snapshot of the feature extractor; immutable by convention.

    bn_mean / bn_var are running inference statistics, updated during
    training forward passes, not by the optimizer.
    """

    conv_w: List[np.ndarray]
    conv_b: List[np.ndarray]
    bn_gamma: List[np.ndarray]
    bn_beta: List[np.ndarray]
    bn_mean: List[np.ndarray]
    bn_var: List[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray
    embedding_dim: int
    sample_size: int
    channels: Tuple[int, ...]
    version: int = 1
    rng_seed: int = 0

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            conv_w=[w.copy() for w in self.conv_w],
            conv_b=[b.copy() for b in self.conv_b],
            bn_gamma=[g.copy() for g in self.bn_gamma],
            bn_beta=[b.copy() for b in self.bn_beta],
            bn_mean=[m.copy() for m in self.bn_mean],
            bn_var=[v.copy() for v in self.bn_var],
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
            embedding_dim=self.embedding_dim,
            sample_size=self.sample_size,
            channels=self.channels,
            version=self.version,
            rng_seed=self.rng_seed,
        )

    def tensors(self) -> List[np.ndarray]:
        """Trainable tensors in optimizer order (running stats excluded)."""
        return (self.conv_w + self.conv_b + self.bn_gamma + self.bn_beta
                + [self.head_w, self.head_b])


def init_params(sample_size: int, embedding_dim: int,
                channels: Tuple[int, ...] = DEFAULT_CHANNELS,
                seed: int = 0, dtype=np.float32) -> EncoderParams:
    if sample_size % (2 ** len(channels)) != 0:
        raise ValueError(
            f"sample_size {sample_size} must be divisible by {2 ** len(channels)} "
            f"for {len(channels)} pooling stages"
        )
    rng = np.random.default_rng(seed)
    conv_w, conv_b, gammas, betas, means, variances = [], [], [], [], [], []
    c_in = 6
    for c_out in channels:
        fan_in = c_in * 9
        conv_w.append((rng.standard_normal((c_out, c_in, 3, 3)) *
                       np.sqrt(2.0 / fan_in)).astype(dtype))
        conv_b.append(np.zeros(c_out, dtype=dtype))
        gammas.append(np.ones(c_out, dtype=dtype))
        betas.append(np.zeros(c_out, dtype=dtype))
        means.append(np.zeros(c_out, dtype=dtype))
        variances.append(np.ones(c_out, dtype=dtype))
        c_in = c_out
    head_w = (rng.standard_normal((embedding_dim, c_in)) *
              np.sqrt(1.0 / c_in)).astype(dtype)
    head_b = np.zeros(embedding_dim, dtype=dtype)
    return EncoderParams(
        conv_w=conv_w, conv_b=conv_b, bn_gamma=gammas, bn_beta=betas,
        bn_mean=means, bn_var=variances, head_w=head_w, head_b=head_b,
        embedding_dim=embedding_dim, sample_size=sample_size,
        channels=tuple(channels), version=1, rng_seed=seed,
    )


@dataclass
class _Cache:
    block_cols: list = field(default_factory=list)
    block_xhat: list = field(default_factory=list)
    block_inv_sd: list = field(default_factory=list)
    block_relu_mask: list = field(default_factory=list)
    block_pool_arg: list = field(default_factory=list)
    block_in_hw: list = field(default_factory=list)
    gap_hw: Tuple[int, int] = (0, 0)
    feat: Optional[np.ndarray] = None
    z_raw: Optional[np.ndarray] = None
    z_norm: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None


def forward(params: EncoderParams, x: np.ndarray, want_cache: bool = False,
            training: bool = False):
    """Map (N, 6, s, s) inputs to unit-norm (N, D) embeddings.

    training=True normalizes with batch statistics and updates the running
    ones; inference uses the stored running statistics. Returns (z, cache);
    cache is None unless want_cache.
    """
    cache = _Cache() if want_cache else None
    n = x.shape[0]
    cur = x
    for i, (w, b) in enumerate(zip(params.conv_w, params.conv_b)):
        h, wd = cur.shape[2], cur.shape[3]
        cols = kernels.im2col3x3(np.ascontiguousarray(cur))
        w2d = w.reshape(w.shape[0], -1)
        pre = np.matmul(w2d[None, :, :], cols) + b[None, :, None]
        pre = pre.reshape(n, w.shape[0], h, wd)
        if training:
            mu = pre.mean(axis=(0, 2, 3))
            var = pre.var(axis=(0, 2, 3))
            params.bn_mean[i] += _BN_MOMENTUM * (mu.astype(params.bn_mean[i].dtype)
                                                 - params.bn_mean[i])
            params.bn_var[i] += _BN_MOMENTUM * (var.astype(params.bn_var[i].dtype)
                                                - params.bn_var[i])
        else:
            mu = params.bn_mean[i]
            var = params.bn_var[i]
        inv_sd = 1.0 / np.sqrt(var + _BN_EPS)
        xhat = ((pre - mu[None, :, None, None]) *
                inv_sd[None, :, None, None]).astype(cur.dtype)
        normed = params.bn_gamma[i][None, :, None, None] * xhat \
            + params.bn_beta[i][None, :, None, None]
        mask = normed > 0
        act = np.where(mask, normed, 0.0).astype(cur.dtype)
        pooled, arg = kernels.maxpool2x2(np.ascontiguousarray(act))
        if want_cache:
            cache.block_cols.append(cols)
            cache.block_xhat.append(xhat)
            cache.block_inv_sd.append(inv_sd)
            cache.block_relu_mask.append(mask)
            cache.block_pool_arg.append(arg)
            cache.block_in_hw.append((h, wd))
        cur = pooled
    gh, gw = cur.shape[2], cur.shape[3]
    feat = cur.mean(axis=(2, 3))
    z_raw = feat @ params.head_w.T + params.head_b
    norms = np.sqrt((z_raw * z_raw).sum(axis=1, keepdims=True))
    norms = np.maximum(norms, np.finfo(z_raw.dtype).tiny)
    z = z_raw / norms
    if want_cache:
        cache.gap_hw = (gh, gw)
        cache.feat = feat
        cache.z_raw = z_raw
        cache.z_norm = norms
        cache.z = z
    return z, cache


def backward(params: EncoderParams, cache: _Cache, dz: np.ndarray):
    """Gradients of all trainable tensors given dLoss/dz.

    Returns (conv_wg, conv_bg, bn_gg, bn_bg, head_wg, head_bg); assumes the
    cached forward ran with training=True (batch statistics).
    """
    z, norms = cache.z, cache.z_norm
    # through z = z_raw / ||z_raw||
    inner = (z * dz).sum(axis=1, keepdims=True)
    dz_raw = (dz - z * inner) / norms
    head_wg = dz_raw.T @ cache.feat
    head_bg = dz_raw.sum(axis=0)
    dfeat = dz_raw @ params.head_w
    gh, gw = cache.gap_hw
    n = dfeat.shape[0]
    dcur = np.broadcast_to(
        dfeat[:, :, None, None] / (gh * gw), (n, dfeat.shape[1], gh, gw)
    ).astype(dfeat.dtype)
    blocks = len(params.conv_w)
    conv_wg = [None] * blocks
    conv_bg = [None] * blocks
    bn_gg = [None] * blocks
    bn_bg = [None] * blocks
    for i in range(blocks - 1, -1, -1):
        h, wd = cache.block_in_hw[i]
        dact = kernels.maxpool2x2_backward(
            np.ascontiguousarray(dcur), cache.block_pool_arg[i], h, wd
        )
        dnorm = np.where(cache.block_relu_mask[i], dact, 0.0).astype(dact.dtype)
        xhat = cache.block_xhat[i]
        bn_gg[i] = (dnorm * xhat).sum(axis=(0, 2, 3))
        bn_bg[i] = dnorm.sum(axis=(0, 2, 3))
        dxhat = dnorm * params.bn_gamma[i][None, :, None, None]
        mean_dxhat = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        dpre = ((dxhat - mean_dxhat - xhat * mean_dxhat_xhat) *
                cache.block_inv_sd[i][None, :, None, None]).astype(dact.dtype)
        dpre2 = dpre.reshape(n, dpre.shape[1], h * wd)
        cols = cache.block_cols[i]
        conv_wg[i] = np.einsum("ncp,nkp->ck", dpre2, cols).reshape(params.conv_w[i].shape)
        conv_bg[i] = dpre2.sum(axis=(0, 2))
        if i > 0:
            w2d = params.conv_w[i].reshape(params.conv_w[i].shape[0], -1)
            dcols = np.matmul(w2d.T[None, :, :], dpre2)
            dcur = kernels.col2im3x3(np.ascontiguousarray(dcols), h, wd)
    return conv_wg, conv_bg, bn_gg, bn_bg, head_wg, head_bg


def _to_nchw(tensors: np.ndarray, sample_size: int, dtype) -> np.ndarray:
    t = np.asarray(tensors)
    if t.ndim == 3:
        t = t[None]
    if t.ndim != 4 or t.shape[1] != sample_size or t.shape[2] != sample_size or t.shape[3] != 6:
        raise ShapeMismatch(
            f"expected (n, {sample_size}, {sample_size}, 6) sample tensors, got {t.shape}"
        )
    return np.ascontiguousarray(t.transpose(0, 3, 1, 2).astype(dtype))


def encode_batch(params: EncoderParams, tensors: np.ndarray) -> np.ndarray:
    """Embed (N, s, s, 6) sample tensors; rows are exactly unit norm (float64)."""
    x = _to_nchw(tensors, params.sample_size, params.conv_w[0].dtype)
    z, _ = forward(params, x)
    z = z.astype(np.float64)
    z /= np.sqrt((z * z).sum(axis=1, keepdims=True))
    return z


def encode(params: EncoderParams, tensor: np.ndarray) -> np.ndarray:
    """Embed a single (s, s, 6) sample tensor into a unit-norm vector."""
    return encode_batch(params, tensor)[0]
