"""Contrastive sample construction from per-image anchor annotations.

A sample is a 6-channel tensor: the annotated patch (foreground, channels
0-2) stacked with a larger co-centered context crop (background, channels
3-5), both resized to the configured sample size. Positives and negatives
are drawn from neighbor regions of same-frame anchors, never across frames.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np

from . import kernels
from .dataset import AnchorAnnotation, FrameAnnotationSet, ImageFrame, PatchRegion, extract_patch
from .errors import EmptyNegativeSet

ROLE_QUERY = "query"
ROLE_POSITIVE = "positive"
ROLE_NEGATIVE = "negative"

# Rec. 601 luma weights, used by greyscale and saturation jitter
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class SamplerConfig:
    sample_size: int = 64
    bg_scale: float = 2.0
    negatives_per_query: int = 16
    greyscale_prob: float = 0.2
    flip_prob: float = 0.5
    brightness_range: Tuple[float, float] = (0.8, 1.2)
    contrast_range: Tuple[float, float] = (0.8, 1.2)
    saturation_range: Tuple[float, float] = (0.8, 1.2)
    rng_seed: int = 0

    def __post_init__(self):
        if self.bg_scale <= 1.0:
            raise ValueError("bg_scale must be > 1")
        if self.negatives_per_query < 1:
            raise ValueError("negatives_per_query must be >= 1")
        for name in ("greyscale_prob", "flip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("brightness_range", "contrast_range", "saturation_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0.0:
                raise ValueError(f"{name} must be an ordered non-negative (lo, hi) pair")


@dataclass
class ContrastiveSample:
    tensor: np.ndarray  # (s, s, 6) float32 in [0, 1]
    source_region: PatchRegion
    role: str

    def __post_init__(self):
        if self.tensor.ndim != 3 or self.tensor.shape[2] != 6:
            raise ValueError(f"sample tensor must be (s, s, 6), got {self.tensor.shape}")
        if self.tensor.shape[0] != self.tensor.shape[1]:
            raise ValueError("sample tensor must be square")


@dataclass
class ContrastiveBatch:
    query: ContrastiveSample
    positive: ContrastiveSample
    negatives: List[ContrastiveSample]
    frame_id: str

    def __post_init__(self):
        if len(self.negatives) < 1:
            raise ValueError("batch needs at least one negative")

    def stacked(self) -> np.ndarray:
        """All tensors as one (n+2, s, s, 6) array: query, positive, negatives."""
        return np.stack(
            [self.query.tensor, self.positive.tensor] + [s.tensor for s in self.negatives]
        )


def partition_anchors(
    annotations: FrameAnnotationSet, query: AnchorAnnotation
) -> Tuple[List[AnchorAnnotation], List[AnchorAnnotation]]:
    """Split the frame's other anchors into positives (same label) and negatives."""
    q_idx = None
    for i, anchor in enumerate(annotations.anchors):
        if anchor is query:
            q_idx = i
            break
    if q_idx is None:
        try:
            q_idx = annotations.anchors.index(query)
        except ValueError:
            raise ValueError("query anchor is not part of the annotation set") from None
    positives, negatives = [], []
    for i, anchor in enumerate(annotations.anchors):
        if i == q_idx:
            continue
        if anchor.group_label == query.group_label:
            positives.append(anchor)
        else:
            negatives.append(anchor)
    if not negatives:
        raise EmptyNegativeSet(
            f"frame {annotations.frame_id!r} has no anchor with a label other than "
            f"{query.group_label}"
        )
    return positives, negatives


def sample_neighbor(region: PatchRegion, image_bounds: Tuple[int, int],
                    rng: np.random.Generator) -> PatchRegion:
    """Same-size region whose center is uniform over the source rectangle.

    Nearby regions are assumed to share semantics, so a patch re-centered
    anywhere inside the annotated rectangle keeps its label. The result is
    shifted, if needed, so the rectangle stays on the image.
    """
    img_w, img_h = image_bounds
    x0, y0, x1, y1 = region.bounds()
    cx = rng.uniform(x0, x1)
    cy = rng.uniform(y0, y1)
    if region.width == 1 and region.height == 1:
        cx, cy = region.center_x, region.center_y
    half_w, half_h = region.width / 2.0, region.height / 2.0
    cx = min(max(cx, half_w), max(img_w - half_w, half_w))
    cy = min(max(cy, half_h), max(img_h - half_h, half_h))
    return PatchRegion(cx, cy, region.width, region.height)


def compose_fg_bg(frame: ImageFrame, region: PatchRegion,
                  config: SamplerConfig) -> ContrastiveSample:
    """Build the 6-channel foreground+context tensor for one region."""
    s = config.sample_size
    fg = extract_patch(frame, region).astype(np.float64) / 255.0
    bg = extract_patch(frame, region.scaled(config.bg_scale)).astype(np.float64) / 255.0
    fg_r = kernels.bilinear_resize(np.ascontiguousarray(fg), s, s)
    bg_r = kernels.bilinear_resize(np.ascontiguousarray(bg), s, s)
    tensor = np.concatenate([fg_r, bg_r], axis=2).astype(np.float32)
    return ContrastiveSample(tensor=tensor, source_region=region, role=ROLE_QUERY)


def augment(sample: ContrastiveSample, config: SamplerConfig,
            rng: np.random.Generator) -> ContrastiveSample:
    """Random greyscale / horizontal flip / photometric jitter.

    Foreground and background channel groups receive the same flip decision
    and the same jitter factors so the patch keeps its illumination relation
    to its context. Draw order is fixed for determinism.
    """
    t = sample.tensor.astype(np.float64)
    do_grey = rng.random() < config.greyscale_prob
    do_flip = rng.random() < config.flip_prob
    b = rng.uniform(*config.brightness_range)
    c = rng.uniform(*config.contrast_range)
    sat = rng.uniform(*config.saturation_range)
    if do_flip:
        t = t[:, ::-1, :]
    out = np.empty_like(t)
    for lo in (0, 3):
        group = t[:, :, lo:lo + 3]
        grey = group @ _LUMA
        if do_grey:
            group = np.repeat(grey[:, :, None], 3, axis=2)
        elif sat != 1.0:
            group = grey[:, :, None] + (group - grey[:, :, None]) * sat
        if b != 1.0:
            group = group * b
        if c != 1.0:
            mean = group.mean()
            group = (group - mean) * c + mean
        out[:, :, lo:lo + 3] = group
    out = np.clip(out, 0.0, 1.0)
    return ContrastiveSample(
        tensor=out.astype(np.float32),
        source_region=sample.source_region,
        role=sample.role,
    )


def make_batch(frame: ImageFrame, annotations: FrameAnnotationSet,
               query_anchor: AnchorAnnotation, config: SamplerConfig,
               rng: np.random.Generator) -> ContrastiveBatch:
    """Assemble one query / positive / n-negatives batch from a single frame."""
    positives, negatives = partition_anchors(annotations, query_anchor)
    bounds = (frame.width, frame.height)

    query = augment(compose_fg_bg(frame, query_anchor.region, config), config, rng)
    query = replace(query, role=ROLE_QUERY)

    if positives:
        pos_anchor = positives[int(rng.integers(len(positives)))]
    else:
        # the query's label is unique in this frame: fall back to a neighbor
        # of the query itself (locality assumption)
        pos_anchor = query_anchor
    pos_region = sample_neighbor(pos_anchor.region, bounds, rng)
    positive = augment(compose_fg_bg(frame, pos_region, config), config, rng)
    positive = replace(positive, role=ROLE_POSITIVE)

    neg_samples = []
    for _ in range(config.negatives_per_query):
        neg_anchor = negatives[int(rng.integers(len(negatives)))]
        neg_region = sample_neighbor(neg_anchor.region, bounds, rng)
        neg = augment(compose_fg_bg(frame, neg_region, config), config, rng)
        neg_samples.append(replace(neg, role=ROLE_NEGATIVE))

    return ContrastiveBatch(
        query=query, positive=positive, negatives=neg_samples,
        frame_id=annotations.frame_id,
    )
