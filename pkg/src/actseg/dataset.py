"""Frames, patch geometry, per-image anchor annotations and dataset manifests.

Anchor group labels are per-image contrastive IDs: equality is meaningful only
between anchors of the same frame. Reference masks are evaluation-only and
never feed training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from .errors import EmptyRegion, MalformedManifest, MissingFrame, ShapeMismatch

IGNORE_VALUE = 255


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class PatchRegion:
    """Rectangular patch stored as center + size in pixel units."""

    center_x: float
    center_y: float
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("patch width/height must be positive")

    def bounds(self):
        """Integer (x0, y0, x1, y1) half-open bounds before clamping."""
        x0 = _round_half_up(self.center_x - self.width / 2.0)
        y0 = _round_half_up(self.center_y - self.height / 2.0)
        return x0, y0, x0 + self.width, y0 + self.height

    def clamped_bounds(self, img_w: int, img_h: int):
        x0, y0, x1, y1 = self.bounds()
        return max(x0, 0), max(y0, 0), min(x1, img_w), min(y1, img_h)

    def scaled(self, factor: float) -> "PatchRegion":
        """Same center, side lengths multiplied by factor (at least 1 px)."""
        return PatchRegion(
            self.center_x,
            self.center_y,
            max(1, _round_half_up(self.width * factor)),
            max(1, _round_half_up(self.height * factor)),
        )


@dataclass(frozen=True)
class AnchorAnnotation:
    region: PatchRegion
    group_label: int

    def __post_init__(self):
        if self.group_label < 0:
            raise ValueError("group_label must be >= 0")


@dataclass
class FrameAnnotationSet:
    frame_id: str
    anchors: List[AnchorAnnotation] = field(default_factory=list)

    def distinct_labels(self):
        return sorted({a.group_label for a in self.anchors})

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "anchors": [
                {
                    "cx": a.region.center_x,
                    "cy": a.region.center_y,
                    "w": a.region.width,
                    "h": a.region.height,
                    "label": a.group_label,
                }
                for a in self.anchors
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FrameAnnotationSet":
        try:
            anchors = [
                AnchorAnnotation(
                    PatchRegion(float(a["cx"]), float(a["cy"]), int(a["w"]), int(a["h"])),
                    int(a["label"]),
                )
                for a in data["anchors"]
            ]
            return cls(frame_id=str(data["frame_id"]), anchors=anchors)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedManifest(f"bad annotation set: {exc}") from exc


@dataclass(eq=False)
class ImageFrame:
    """A single RGB frame; `sequence_index` is its position in the stream."""

    frame_id: str
    sequence_index: int
    image: np.ndarray
    source_path: str = ""

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"frame {self.frame_id}: expected HxWx3 image, got {img.shape}")
        if img.shape[0] < 1 or img.shape[1] < 1:
            raise ValueError(f"frame {self.frame_id}: empty image")
        if img.dtype != np.uint8:
            raise ValueError(f"frame {self.frame_id}: expected uint8 pixels, got {img.dtype}")
        if self.sequence_index < 0:
            raise ValueError("sequence_index must be >= 0")
        self.image = img

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


@dataclass(eq=False)
class FrameEntry:
    """Manifest row for one frame; pixels load lazily from `path` when unset."""

    frame_id: str
    sequence_index: int
    path: str = ""
    image: Optional[np.ndarray] = None


@dataclass(eq=False)
class DatasetManifest:
    dataset_id: str
    frames: List[FrameEntry] = field(default_factory=list)
    annotations: Dict[str, FrameAnnotationSet] = field(default_factory=dict)
    reference_masks: Dict[str, object] = field(default_factory=dict)  # path or array
    granularity_tag: str = ""
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.validate()

    def validate(self):
        ids = [f.frame_id for f in self.frames]
        if len(set(ids)) != len(ids):
            raise MalformedManifest("duplicate frame_id in manifest")
        seq = [f.sequence_index for f in self.frames]
        if len(set(seq)) != len(seq):
            raise MalformedManifest("sequence_index values must be unique")
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise MalformedManifest("frames must be strictly ordered by sequence_index")
        known = set(ids)
        for fid in self.annotations:
            if fid not in known:
                raise MissingFrame(f"annotation references unknown frame {fid!r}")
        for fid in self.reference_masks:
            if fid not in known:
                raise MissingFrame(f"reference mask references unknown frame {fid!r}")

    def frame_entry(self, frame_id: str) -> FrameEntry:
        for entry in self.frames:
            if entry.frame_id == frame_id:
                return entry
        raise MissingFrame(f"unknown frame {frame_id!r}")

    def get_frame(self, frame_id: str) -> ImageFrame:
        entry = self.frame_entry(frame_id)
        if entry.image is not None:
            return ImageFrame(entry.frame_id, entry.sequence_index, entry.image, entry.path)
        path = self.root / entry.path
        try:
            img = np.asarray(Image.open(path).convert("RGB"))
        except (OSError, ValueError) as exc:
            raise MalformedManifest(f"cannot read image for frame {frame_id!r}: {exc}") from exc
        return ImageFrame(entry.frame_id, entry.sequence_index, img, str(path))

    def get_reference_mask(self, frame_id: str) -> np.ndarray:
        if frame_id not in self.reference_masks:
            raise MissingFrame(f"no reference mask for frame {frame_id!r}")
        stored = self.reference_masks[frame_id]
        if isinstance(stored, np.ndarray):
            return stored
        mask = np.asarray(Image.open(self.root / str(stored)))
        if mask.ndim != 2:
            raise MalformedManifest(f"reference mask for {frame_id!r} must be single-channel")
        return mask

    def annotated_frame_ids(self) -> List[str]:
        order = {f.frame_id: f.sequence_index for f in self.frames}
        return sorted(self.annotations, key=order.__getitem__)

    def to_dict(self) -> dict:
        out = {
            "dataset_id": self.dataset_id,
            "frames": [
                {"frame_id": f.frame_id, "sequence_index": f.sequence_index, "path": f.path}
                for f in self.frames
            ],
            "annotations": [
                self.annotations[fid].to_dict() for fid in self.annotated_frame_ids()
            ],
            "granularity_tag": self.granularity_tag,
        }
        if self.reference_masks:
            out["reference_masks"] = [
                {"frame_id": fid, "path": str(p)}
                for fid, p in sorted(self.reference_masks.items())
                if not isinstance(p, np.ndarray)
            ]
        return out


def load_manifest(path) -> DatasetManifest:
    """Load and validate a JSON dataset manifest."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedManifest(f"cannot parse manifest {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedManifest("manifest root must be a JSON object")
    try:
        frames = [
            FrameEntry(str(f["frame_id"]), int(f["sequence_index"]), str(f["path"]))
            for f in raw["frames"]
        ]
        dataset_id = str(raw["dataset_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedManifest(f"bad manifest fields: {exc}") from exc
    annotations = {}
    for entry in raw.get("annotations", []):
        ann = FrameAnnotationSet.from_dict(entry)
        annotations[ann.frame_id] = ann
    masks = {}
    for entry in raw.get("reference_masks", []):
        try:
            masks[str(entry["frame_id"])] = str(entry["path"])
        except (KeyError, TypeError) as exc:
            raise MalformedManifest(f"bad reference_masks entry: {exc}") from exc
    manifest = DatasetManifest(
        dataset_id=dataset_id,
        frames=frames,
        annotations=annotations,
        reference_masks=masks,
        granularity_tag=str(raw.get("granularity_tag", "")),
        root=path.parent,
    )
    _check_mask_shapes(manifest)
    return manifest


def _check_mask_shapes(manifest: DatasetManifest):
    for fid, stored in manifest.reference_masks.items():
        entry = manifest.frame_entry(fid)
        if isinstance(stored, np.ndarray):
            mask_size = stored.shape[1], stored.shape[0]
        else:
            with Image.open(manifest.root / str(stored)) as im:
                mask_size = im.size
        if entry.image is not None:
            frame_size = entry.image.shape[1], entry.image.shape[0]
        else:
            with Image.open(manifest.root / entry.path) as im:
                frame_size = im.size
        if mask_size != frame_size:
            raise ShapeMismatch(
                f"reference mask for {fid!r} is {mask_size}, frame is {frame_size}"
            )


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def extract_patch(frame: ImageFrame, region: PatchRegion) -> np.ndarray:
    """Pixels of `region` clamped to the frame; raises EmptyRegion on no overlap."""
    x0, y0, x1, y1 = region.clamped_bounds(frame.width, frame.height)
    if x1 <= x0 or y1 <= y0:
        raise EmptyRegion(
            f"region centered ({region.center_x}, {region.center_y}) "
            f"size {region.width}x{region.height} does not overlap the image"
        )
    return frame.image[y0:y1, x0:x1].copy()


@dataclass
class FrameValidation:
    frame_id: str
    n_anchors: int
    distinct_labels: List[int]
    anchors_without_positive: List[int]
    anchors_without_negative: List[int]

    @property
    def trainable(self) -> bool:
        # negatives are mandatory; an empty positive set falls back to
        # neighbor-of-query sampling
        return self.n_anchors > 0 and not self.anchors_without_negative


@dataclass
class ValidationReport:
    frames: Dict[str, FrameValidation] = field(default_factory=dict)

    @property
    def trainable_frame_ids(self) -> List[str]:
        return [fid for fid, v in self.frames.items() if v.trainable]

    @property
    def any_trainable(self) -> bool:
        return bool(self.trainable_frame_ids)


def validate_training_set(manifest: DatasetManifest) -> ValidationReport:
    """Check, per annotated frame, that each anchor has usable contrastive sets."""
    report = ValidationReport()
    for fid in manifest.annotated_frame_ids():
        ann = manifest.annotations[fid]
        labels = [a.group_label for a in ann.anchors]
        counts = {}
        for lab in labels:
            counts[lab] = counts.get(lab, 0) + 1
        no_pos = [i for i, lab in enumerate(labels) if counts[lab] < 2]
        no_neg = [i for i, lab in enumerate(labels) if len(labels) - counts[lab] == 0]
        report.frames[fid] = FrameValidation(
            frame_id=fid,
            n_anchors=len(labels),
            distinct_labels=sorted(counts),
            anchors_without_positive=no_pos,
            anchors_without_negative=no_neg,
        )
    return report
