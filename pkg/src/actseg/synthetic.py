"""Procedural terrain-like scenes with ground truth, plus a scripted annotator.

Frames are horizontal bands of textured terrain with wavy boundaries; each
band carries one texture class. The scripted annotator mimics a human: it
drops rectangular anchors on pure areas and assigns group labels that only
mean something within the frame (the class-to-group mapping is reshuffled
per frame).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import (
    AnchorAnnotation,
    DatasetManifest,
    FrameAnnotationSet,
    FrameEntry,
    ImageFrame,
    PatchRegion,
)

# base color, stripe angle, stripe period, stripe strength, noise sigma
TEXTURES: List[dict] = [
    {"rgb": (152, 112, 72), "angle": 0.0, "period": 11, "amp": 18, "noise": 7},   # packed earth
    {"rgb": (62, 138, 64), "angle": 1.2, "period": 6, "amp": 26, "noise": 10},    # vegetation
    {"rgb": (168, 168, 172), "angle": 0.6, "period": 4, "amp": 30, "noise": 12},  # gravel
    {"rgb": (196, 176, 124), "angle": 2.2, "period": 14, "amp": 14, "noise": 6},  # dry sand
    {"rgb": (70, 92, 158), "angle": 0.3, "period": 9, "amp": 20, "noise": 8},     # standing water
]


def texture_patch(class_id: int, height: int, width: int,
                  rng: np.random.Generator) -> np.ndarray:
    spec = TEXTURES[class_id]
    ys, xs = np.mgrid[0:height, 0:width]
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(
        2 * np.pi * (xs * np.cos(spec["angle"]) + ys * np.sin(spec["angle"]))
        / spec["period"] + phase
    )
    base = np.array(spec["rgb"], dtype=np.float64)
    img = base[None, None, :] + spec["amp"] * wave[:, :, None]
    img += rng.normal(0.0, spec["noise"], size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def scene(classes: Sequence[int], height: int, width: int,
          rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Banded scene of the given classes; returns (image, class mask)."""
    k = len(classes)
    image = np.zeros((height, width, 3), dtype=np.uint8)
    mask = np.zeros((height, width), dtype=np.uint8)
    xs = np.arange(width)
    boundaries = []
    for i in range(1, k):
        base = height * i / k
        amp = rng.uniform(4, 10)
        freq = rng.uniform(0.5, 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        boundaries.append(base + amp * np.sin(2 * np.pi * freq * xs / width + phase))
    ys = np.arange(height)[:, None]
    band_idx = np.zeros((height, width), dtype=np.int64)
    for b in boundaries:
        band_idx += ys >= b[None, :]
    for i, cls in enumerate(classes):
        tex = texture_patch(cls, height, width, rng)
        sel = band_idx == i
        image[sel] = tex[sel]
        mask[sel] = cls
    return image, mask


@dataclass
class SyntheticFrame:
    frame: ImageFrame
    mask: np.ndarray
    classes: Tuple[int, ...]


def make_frames(n_frames: int, class_pool: Sequence[int], height: int, width: int,
                seed: int, prefix: str, start_sequence: int = 0,
                bands: int = 2, force_class: Optional[int] = None) -> List[SyntheticFrame]:
    """Generate frames whose bands draw from `class_pool`.

    `force_class` guarantees one band of that class in every frame (used for
    the domain-shift stream).
    """
    out = []
    for i in range(n_frames):
        rng = np.random.default_rng((seed, i))
        pool = list(class_pool)
        if force_class is not None:
            pool = [c for c in pool if c != force_class]
        chosen = list(rng.choice(pool, size=min(bands, len(pool)), replace=False))
        if force_class is not None:
            chosen[int(rng.integers(len(chosen)))] = force_class
        img, mask = scene(chosen, height, width, rng)
        fid = f"{prefix}{i:04d}"
        out.append(SyntheticFrame(
            frame=ImageFrame(fid, start_sequence + i, img),
            mask=mask,
            classes=tuple(int(c) for c in chosen),
        ))
    return out


def annotate_from_mask(frame: ImageFrame, mask: np.ndarray,
                       rng: np.random.Generator, anchors_per_class: int = 2,
                       anchor_size: int = 24) -> Optional[FrameAnnotationSet]:
    """Scripted weak annotation: pure rectangles, per-frame group labels.

    Returns None when fewer than two classes could be anchored (the frame
    would be useless for contrastive training).
    """
    present = [int(c) for c in np.unique(mask) if c != 255]
    groups = rng.permutation(len(present))
    anchors = []
    half = anchor_size // 2
    h, w = mask.shape
    for order, cls in enumerate(present):
        found = 0
        for _ in range(60):
            cy = int(rng.integers(half, h - half))
            cx = int(rng.integers(half, w - half))
            window = mask[cy - half:cy + half, cx - half:cx + half]
            if window.size and np.all(window == cls):
                anchors.append(AnchorAnnotation(
                    PatchRegion(float(cx), float(cy), anchor_size, anchor_size),
                    int(groups[order]),
                ))
                found += 1
                if found >= anchors_per_class:
                    break
        # classes too thin to host a pure rectangle are simply not annotated
    labels = {a.group_label for a in anchors}
    if len(labels) < 2:
        return None
    return FrameAnnotationSet(frame_id=frame.frame_id, anchors=anchors)


def build_training_manifest(n_frames: int, class_pool: Sequence[int],
                            height: int = 192, width: int = 192,
                            seed: int = 0, bands: int = 2,
                            anchors_per_class: int = 2,
                            anchor_size: int = 24,
                            dataset_id: str = "synthetic-train") -> Tuple[DatasetManifest, Dict[str, np.ndarray]]:
    """In-memory manifest of annotated frames plus ground-truth masks."""
    frames = make_frames(n_frames, class_pool, height, width, seed,
                         prefix="train", bands=bands)
    entries, annotations, masks = [], {}, {}
    for i, sf in enumerate(frames):
        rng = np.random.default_rng((seed, 7000 + i))
        ann = annotate_from_mask(sf.frame, sf.mask, rng,
                                 anchors_per_class, anchor_size)
        entries.append(FrameEntry(sf.frame.frame_id, sf.frame.sequence_index,
                                  image=sf.frame.image))
        masks[sf.frame.frame_id] = sf.mask
        if ann is not None:
            annotations[ann.frame_id] = ann
    manifest = DatasetManifest(
        dataset_id=dataset_id,
        frames=entries,
        annotations=annotations,
        granularity_tag="synthetic",
    )
    return manifest, masks
