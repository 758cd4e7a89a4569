"""Sliding-window segmentation with risk-gated cluster assignment.

Each window is embedded, matched to its most likely Gaussian cluster and
gated: a patch whose risk (one minus the best cluster's density) exceeds
the fitted risk bound gets the unknown label. Unknown is encoded as label
0 in every map; cluster k becomes label k. Overlapping windows vote per
pixel with weights that decay with distance from the patch center.

Risks can be negative: densities above one are legal and the bound is an
empirical quantile on the same scale, so the gate stays consistent.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from . import kernels
from .dataset import ImageFrame, PatchRegion
from .errors import FrameTooSmall, UncoveredPixel, UnknownRefiner
from .gmm import CategoryModel
from .sampler import SamplerConfig, compose_fg_bg

UNKNOWN_LABEL = 0

WEIGHT_MODES = {"linear": 0, "uniform": 1, "gaussian": 2}


@dataclass
class SlidingWindowConfig:
    patch_size: int = 64
    stride: int = 32
    encode_batch_size: int = 64
    weight_mode: str = "linear"
    weighted_densities: bool = False  # use mixing weights in the argmax

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.stride > self.patch_size:
            raise ValueError("stride must not exceed patch_size (overlapped voting)")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {sorted(WEIGHT_MODES)}")


@dataclass
class PatchPrediction:
    region: PatchRegion
    label: int  # 0 = unknown, else cluster index 1..m
    risk: float
    best_cluster: int  # 1..m regardless of gating


@dataclass(eq=False)
class SegmentationResult:
    frame_id: str
    label_map: np.ndarray  # (H, W) int32, 0 = unknown
    risk_map: np.ndarray  # (H, W) float64, weight-averaged patch risk
    patch_predictions: List[PatchPrediction]
    frame_risk: float


def _axis_offsets(length: int, patch: int, stride: int) -> List[int]:
    if length < patch:
        raise FrameTooSmall(f"axis of {length} px cannot host a {patch} px window")
    last = length - patch
    offsets = list(range(0, last + 1, stride))
    if offsets[-1] != last:
        if len(offsets) >= 2 and last - offsets[-2] <= patch:
            offsets[-1] = last  # snap the final window to the edge
        else:
            offsets.append(last)  # snapping would open a gap; add a window
    return offsets


def generate_windows(height: int, width: int,
                     cfg: SlidingWindowConfig) -> List[PatchRegion]:
    """Regular stride grid, final row/column snapped to the image edge."""
    p = cfg.patch_size
    xs = _axis_offsets(width, p, cfg.stride)
    ys = _axis_offsets(height, p, cfg.stride)
    return [
        PatchRegion(x0 + p / 2.0, y0 + p / 2.0, p, p)
        for y0 in ys
        for x0 in xs
    ]


def classify_embeddings(Z: np.ndarray, model: CategoryModel,
                        weighted: bool = False):
    """Vectorized gate for many embeddings; returns (best, risk, label) arrays.

    `best` is 1-based; density ties resolve to the lowest cluster index.
    The risk always uses the raw density of the winning cluster; `weighted`
    only switches the argmax to weight-scaled densities (posterior mode).
    """
    if model.risk_bound is None:
        raise ValueError("category model has no fitted risk bound")
    logp = model.log_densities(Z)
    if weighted:
        scores = logp + np.log([c.weight for c in model.clusters])[None, :]
    else:
        scores = logp
    best0 = scores.argmax(axis=1)
    best_logp = logp[np.arange(logp.shape[0]), best0]
    # exp clamp: regularized high-dim densities can be astronomically large;
    # saturating keeps risks finite and preserves the gate ordering
    risk = 1.0 - np.exp(np.minimum(best_logp, 700.0))
    label = np.where(risk <= model.risk_bound, best0 + 1, UNKNOWN_LABEL)
    return best0 + 1, risk, label


def classify_patch(z: np.ndarray, model: CategoryModel,
                   weighted: bool = False) -> Tuple[int, float, int]:
    """Single-embedding classification: (best_cluster, risk, label)."""
    best, risk, label = classify_embeddings(np.atleast_2d(z), model, weighted)
    return int(best[0]), float(risk[0]), int(label[0])


def vote_pixels(predictions: Sequence[PatchPrediction], height: int, width: int,
                weight_mode: str = "linear") -> Tuple[np.ndarray, np.ndarray]:
    """Per-pixel weighted voting over overlapping patch predictions.

    Each covering patch votes for its label with weight max(0, 1 - d/R)
    (linear mode), d the Chebyshev distance to the patch center and
    R = patch_side/2 + 1. The heaviest label wins; exact weight ties go to
    the label whose contributing patch center is nearest, then to the lower
    label. The risk map is the weight-averaged patch risk.
    """
    if not predictions:
        raise UncoveredPixel("no predictions to vote with")
    n = len(predictions)
    x0s = np.empty(n, dtype=np.int64)
    y0s = np.empty(n, dtype=np.int64)
    ws = np.empty(n, dtype=np.int64)
    hs = np.empty(n, dtype=np.int64)
    cxs = np.empty(n, dtype=np.float64)
    cys = np.empty(n, dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    risks = np.empty(n, dtype=np.float64)
    for i, p in enumerate(predictions):
        x0, y0, _, _ = p.region.bounds()
        x0s[i], y0s[i] = x0, y0
        ws[i], hs[i] = p.region.width, p.region.height
        cxs[i], cys[i] = p.region.center_x, p.region.center_y
        labels[i] = p.label
        risks[i] = p.risk
    n_labels = int(labels.max()) + 1
    label_weight, min_dist, risk_num, risk_den = kernels.accumulate_votes(
        x0s, y0s, ws, hs, cxs, cys, labels, risks,
        n_labels, height, width, WEIGHT_MODES[weight_mode],
    )
    if np.any(risk_den == 0.0):
        raise UncoveredPixel("some pixels receive no patch prediction")
    max_w = label_weight.max(axis=0)
    tied_dist = np.where(label_weight == max_w[None, :, :], min_dist, np.inf)
    label_map = tied_dist.argmin(axis=0).astype(np.int32)
    risk_map = risk_num / risk_den
    return label_map, risk_map


def segment_frame(frame: ImageFrame, model: CategoryModel,
                  sw_cfg: SlidingWindowConfig, sampler_cfg: SamplerConfig,
                  encode_fn: Callable[[np.ndarray], np.ndarray]) -> SegmentationResult:
    """Full sliding-window pass over one frame.

    `encode_fn` maps a stack of (n, s, s, 6) sample tensors to (n, D)
    unit-norm embeddings (see encoder.encode_batch).
    """
    windows = generate_windows(frame.height, frame.width, sw_cfg)
    tensors = np.stack([
        compose_fg_bg(frame, region, sampler_cfg).tensor for region in windows
    ])
    chunks = []
    for start in range(0, len(windows), sw_cfg.encode_batch_size):
        chunks.append(encode_fn(tensors[start:start + sw_cfg.encode_batch_size]))
    Z = np.concatenate(chunks, axis=0)
    best, risk, label = classify_embeddings(Z, model, sw_cfg.weighted_densities)
    predictions = [
        PatchPrediction(region=w, label=int(label[i]), risk=float(risk[i]),
                        best_cluster=int(best[i]))
        for i, w in enumerate(windows)
    ]
    label_map, risk_map = vote_pixels(predictions, frame.height, frame.width,
                                      sw_cfg.weight_mode)
    phi = int((label == UNKNOWN_LABEL).sum())
    return SegmentationResult(
        frame_id=frame.frame_id,
        label_map=label_map,
        risk_map=risk_map,
        patch_predictions=predictions,
        frame_risk=phi / len(predictions),
    )


# Optional post-processing refiners (e.g. dense CRF) plug in by name; none
# ship with the package and the default hook is the identity.
_REFINERS: Dict[str, Callable[[SegmentationResult, ImageFrame], SegmentationResult]] = {}


def register_refiner(name: str, fn) -> None:
    _REFINERS[name] = fn


def unregister_refiner(name: str) -> None:
    _REFINERS.pop(name, None)


def crf_refine_hook(result: SegmentationResult, frame: ImageFrame,
                    refiner: Optional[str] = None) -> SegmentationResult:
    if refiner is None:
        return result
    if refiner not in _REFINERS:
        raise UnknownRefiner(f"no refiner registered under {refiner!r}")
    return _REFINERS[refiner](result, frame)


def save_segmentation(result: SegmentationResult, out_dir,
                      model: CategoryModel) -> Tuple[Path, Path, Path]:
    """Write label PNG, float32 risk map and the JSON sidecar; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    label_path = out_dir / f"{result.frame_id}_labels.png"
    Image.fromarray(result.label_map.astype(np.uint8), mode="L").save(label_path)
    risk_path = out_dir / f"{result.frame_id}_risk.bin"
    save_risk_map(result.risk_map, risk_path)
    phi = sum(1 for p in result.patch_predictions if p.label == UNKNOWN_LABEL)
    sidecar = {
        "frame_id": result.frame_id,
        "frame_risk": result.frame_risk,
        "m": model.n_clusters,
        "r_sigma": model.risk_bound,
        "patch_count": len(result.patch_predictions),
        "phi_count": phi,
    }
    sidecar_path = out_dir / f"{result.frame_id}_labels.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return label_path, risk_path, sidecar_path


def save_risk_map(risk_map: np.ndarray, path) -> None:
    h, w = risk_map.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", h, w))
        f.write(np.ascontiguousarray(risk_map, dtype="<f4").tobytes())


def load_risk_map(path) -> np.ndarray:
    with open(path, "rb") as f:
        h, w = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(4 * h * w), dtype="<f4")
    return data.reshape(h, w).astype(np.float64)
