"""Optional adapter for a locally downloaded Freiburg Forest (DeepScene) copy.

The dataset is not bundled; point ACTSEG_DEEPSCENE_DIR (or the loader
argument) at a directory containing the standard `train/` and `test/`
splits with `rgb/` and `GT_color/` subfolders. Ground-truth color masks are
converted to the 5-class index scheme discussed alongside the published
results; patch-based weak annotations are synthesized from the masks the
same way the scripted annotator does for synthetic scenes, so the pipeline
still never trains on dense labels.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from .dataset import DatasetManifest, FrameEntry, ImageFrame
from .synthetic import annotate_from_mask

# RGB -> class index; 255 stays "ignore". Obstacle maps to ignore: it covers
# ~0.3% of pixels and cannot earn anchors from a handful of frames.
COLOR_CLASSES: List[Tuple[Tuple[int, int, int], int]] = [
    ((170, 170, 170), 0),  # road
    ((0, 255, 0), 1),      # grass
    ((102, 102, 51), 2),   # vegetation
    ((0, 60, 0), 2),       # tree -> vegetation
    ((0, 120, 255), 3),    # sky
    ((0, 0, 0), 255),      # void
]

N_CLASSES = 4


def dataset_root(explicit=None) -> Optional[Path]:
    root = explicit or os.environ.get("ACTSEG_DEEPSCENE_DIR")
    if not root:
        return None
    root = Path(root)
    return root if root.exists() else None


def color_mask_to_classes(mask_rgb: np.ndarray) -> np.ndarray:
    out = np.full(mask_rgb.shape[:2], 255, dtype=np.uint8)
    for color, cls in COLOR_CLASSES:
        match = np.all(mask_rgb == np.array(color, dtype=np.uint8), axis=2)
        out[match] = cls
    return out


def _split_files(root: Path, split: str) -> List[Tuple[Path, Path]]:
    rgb_dir = root / split / "rgb"
    gt_dir = root / split / "GT_color"
    pairs = []
    if not rgb_dir.exists():
        return pairs
    for rgb in sorted(rgb_dir.iterdir()):
        stem = rgb.name.split(".")[0].replace("_Clipped", "")
        candidates = list(gt_dir.glob(f"{stem}*")) if gt_dir.exists() else []
        if candidates:
            pairs.append((rgb, candidates[0]))
    return pairs


def load_frames(root: Path, split: str, limit: Optional[int] = None,
                resize_to: Optional[Tuple[int, int]] = None):
    """Yield (ImageFrame, class mask) pairs from one split."""
    pairs = _split_files(root, split)
    if limit is not None:
        pairs = pairs[:limit]
    for seq, (rgb_path, gt_path) in enumerate(pairs):
        img = Image.open(rgb_path).convert("RGB")
        gt = Image.open(gt_path).convert("RGB")
        if resize_to is not None:
            img = img.resize(resize_to, Image.BILINEAR)
            gt = gt.resize(resize_to, Image.NEAREST)
        frame = ImageFrame(f"{split}{seq:04d}", seq, np.asarray(img), str(rgb_path))
        yield frame, color_mask_to_classes(np.asarray(gt))


def weak_manifest(root: Path, split: str, n_frames: int, seed: int = 0,
                  anchors_per_class: int = 2, anchor_size: int = 48,
                  resize_to: Optional[Tuple[int, int]] = (384, 192)) -> Tuple[DatasetManifest, Dict[str, np.ndarray]]:
    """Manifest of weakly annotated frames synthesized from dense GT masks."""
    entries, annotations, masks = [], {}, {}
    rng = np.random.default_rng(seed)
    for frame, mask in load_frames(root, split, limit=n_frames, resize_to=resize_to):
        ann = annotate_from_mask(frame, mask, rng, anchors_per_class, anchor_size)
        entries.append(FrameEntry(frame.frame_id, frame.sequence_index,
                                  image=frame.image, path=frame.source_path))
        masks[frame.frame_id] = mask
        if ann is not None:
            annotations[ann.frame_id] = ann
    manifest = DatasetManifest(
        dataset_id=f"deepscene-{split}",
        frames=entries,
        annotations=annotations,
        granularity_tag="deepscene",
    )
    return manifest, masks
