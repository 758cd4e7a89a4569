"""Contrastive training of the feature extractor.

Positive / negative embeddings are recomputed from pixels at every step;
nothing is cached across steps, so per-step memory stays at the batch size
(one query, one positive, n negatives). SGD with momentum and a cosine
learning-rate schedule keeps runs reproducible under a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..dataset import DatasetManifest, FrameAnnotationSet, validate_training_set
from ..errors import NoTrainableFrames
from ..sampler import SamplerConfig, make_batch
from . import network
from .losses import info_nce_gradients, info_nce_loss


@dataclass
class TrainConfig:
    temperature: float = 0.5
    learning_rate: float = 0.001  # momentum 0.9 makes this ~0.01 effective
    momentum: float = 0.9
    steps: int = 2000
    queries_per_anchor_per_epoch: int = 1
    embedding_dim: int = 64
    channels: Tuple[int, ...] = network.DEFAULT_CHANNELS
    rng_seed: int = 0
    fine_tune: bool = False

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


StepHook = Callable[[int, float, str, int], None]


def _training_pairs(manifest: DatasetManifest) -> List[Tuple[str, int]]:
    report = validate_training_set(manifest)
    trainable = set(report.trainable_frame_ids)
    pairs = []
    for fid in manifest.annotated_frame_ids():
        if fid not in trainable:
            continue
        for idx in range(len(manifest.annotations[fid].anchors)):
            pairs.append((fid, idx))
    return pairs


def _cosine_lr(base: float, step: int, total: int) -> float:
    return 0.5 * base * (1.0 + math.cos(math.pi * step / max(1, total)))


def _run_sgd(params: network.EncoderParams, manifest: DatasetManifest,
             sampler_cfg: SamplerConfig, cfg: TrainConfig,
             log_path=None, step_hook: Optional[StepHook] = None) -> network.EncoderParams:
    pairs = _training_pairs(manifest)
    if not pairs:
        raise NoTrainableFrames("no frame provides both positive and negative anchors")
    rng = np.random.default_rng(cfg.rng_seed)
    frames = {fid: manifest.get_frame(fid) for fid, _ in dict.fromkeys(pairs)}

    params = params.copy()
    tensors = params.tensors()
    velocity = [np.zeros_like(t) for t in tensors]

    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        step = 0
        while step < cfg.steps:
            order = rng.permutation(len(pairs))
            for j in range(len(order) * cfg.queries_per_anchor_per_epoch):
                if step >= cfg.steps:
                    break
                fid, anchor_idx = pairs[order[j % len(order)]]
                ann = manifest.annotations[fid]
                batch = make_batch(frames[fid], ann, ann.anchors[anchor_idx],
                                   sampler_cfg, rng)
                x = network._to_nchw(batch.stacked(), params.sample_size,
                                     params.conv_w[0].dtype)
                z, cache = network.forward(params, x, want_cache=True,
                                           training=True)
                loss, dq, dp, dn = info_nce_gradients(
                    z[0], z[1], z[2:], cfg.temperature
                )
                dz = np.concatenate([dq[None], dp[None], dn]).astype(z.dtype)
                conv_wg, conv_bg, bn_gg, bn_bg, head_wg, head_bg = \
                    network.backward(params, cache, dz)
                grads = conv_wg + conv_bg + bn_gg + bn_bg + [head_wg, head_bg]
                lr = _cosine_lr(cfg.learning_rate, step, cfg.steps)
                for t, v, g in zip(tensors, velocity, grads):
                    v *= cfg.momentum
                    v -= lr * g.astype(t.dtype)
                    t += v
                if log_file:
                    log_file.write(json.dumps(
                        {"step": step, "loss": loss, "frame_id": fid}) + "\n")
                if step_hook:
                    step_hook(step, loss, fid, z.shape[0])
                step += 1
    finally:
        if log_file:
            log_file.close()
    return params


def train(manifest: DatasetManifest, sampler_cfg: SamplerConfig, cfg: TrainConfig,
          log_path=None, step_hook: Optional[StepHook] = None) -> network.EncoderParams:
    """Train a fresh encoder on the manifest's anchor annotations."""
    params = network.init_params(
        sample_size=sampler_cfg.sample_size,
        embedding_dim=cfg.embedding_dim,
        channels=cfg.channels,
        seed=cfg.rng_seed,
    )
    return _run_sgd(params, manifest, sampler_cfg, cfg, log_path, step_hook)


def fine_tune(params: network.EncoderParams,
              supplemental: Sequence[FrameAnnotationSet],
              manifest: DatasetManifest, sampler_cfg: SamplerConfig,
              cfg: TrainConfig, log_path=None,
              step_hook: Optional[StepHook] = None) -> network.EncoderParams:
    """Continue optimization on the supplemental annotation pool only.

    `manifest` must resolve the supplemental frame ids to images. The
    returned snapshot carries version + 1 even for zero steps.
    """
    if not supplemental:
        raise NoTrainableFrames("supplemental annotation pool is empty")
    wanted = {s.frame_id for s in supplemental}
    sub = DatasetManifest(
        dataset_id=manifest.dataset_id + "+supplemental",
        frames=[f for f in manifest.frames if f.frame_id in wanted],
        annotations={s.frame_id: s for s in supplemental},
        granularity_tag=manifest.granularity_tag,
        root=manifest.root,
    )
    if cfg.steps > 0:
        out = _run_sgd(params, sub, sampler_cfg, replace(cfg, fine_tune=True),
                       log_path, step_hook)
    else:
        if not _training_pairs(sub):
            raise NoTrainableFrames("no trainable supplemental frame")
        out = params.copy()
    out.version = params.version + 1
    return out


def evaluate_loss(params: network.EncoderParams, manifest: DatasetManifest,
                  sampler_cfg: SamplerConfig, temperature: float,
                  seed: int = 0) -> float:
    """Mean contrastive loss with every anchor serving as query once."""
    pairs = _training_pairs(manifest)
    if not pairs:
        raise NoTrainableFrames("nothing to evaluate")
    rng = np.random.default_rng(seed)
    frames = {fid: manifest.get_frame(fid) for fid, _ in dict.fromkeys(pairs)}
    losses = []
    for fid, anchor_idx in pairs:
        ann = manifest.annotations[fid]
        batch = make_batch(frames[fid], ann, ann.anchors[anchor_idx], sampler_cfg, rng)
        z = network.encode_batch(params, batch.stacked())
        losses.append(info_nce_loss(z[0], z[1], z[2:], temperature))
    return float(np.mean(losses))


def checkpoint_path(directory, version: int) -> Path:
    return Path(directory) / f"encoder_v{version}.ckpt"


def save_checkpoint(params: network.EncoderParams, path,
                    train_cfg: Optional[TrainConfig] = None) -> None:
    """Single-archive checkpoint: tensors plus a JSON metadata record."""
    meta = {
        "embedding_dim": params.embedding_dim,
        "sample_size": params.sample_size,
        "channels": list(params.channels),
        "version": params.version,
        "rng_seed": params.rng_seed,
        "train_config": asdict(train_cfg) if train_cfg else None,
    }
    arrays: Dict[str, np.ndarray] = {"meta": np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    per_block = {
        "conv_w": params.conv_w, "conv_b": params.conv_b,
        "bn_gamma": params.bn_gamma, "bn_beta": params.bn_beta,
        "bn_mean": params.bn_mean, "bn_var": params.bn_var,
    }
    for name, tensors in per_block.items():
        for i, t in enumerate(tensors):
            arrays[f"{name}_{i}"] = t
    arrays["head_w"] = params.head_w
    arrays["head_b"] = params.head_b
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> Tuple[network.EncoderParams, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        n_blocks = len(meta["channels"])

        def block(name):
            return [data[f"{name}_{i}"] for i in range(n_blocks)]

        params = network.EncoderParams(
            conv_w=block("conv_w"),
            conv_b=block("conv_b"),
            bn_gamma=block("bn_gamma"),
            bn_beta=block("bn_beta"),
            bn_mean=block("bn_mean"),
            bn_var=block("bn_var"),
            head_w=data["head_w"],
            head_b=data["head_b"],
            embedding_dim=int(meta["embedding_dim"]),
            sample_size=int(meta["sample_size"]),
            channels=tuple(meta["channels"]),
            version=int(meta["version"]),
            rng_seed=int(meta["rng_seed"]),
        )
    return params, meta
