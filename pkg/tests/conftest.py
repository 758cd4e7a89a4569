import zlib

import numpy as np
import pytest

from actseg.dataset import (
    AnchorAnnotation,
    DatasetManifest,
    FrameAnnotationSet,
    FrameEntry,
    ImageFrame,
    PatchRegion,
)


def flat_frame(frame_id="f0", seq=0, h=64, w=64, value=128):
    img = np.full((h, w, 3), value, dtype=np.uint8)
    return ImageFrame(frame_id, seq, img)


def anchor(cx, cy, size, label):
    return AnchorAnnotation(PatchRegion(float(cx), float(cy), size, size), label)


def two_texture_frame(frame_id="f0", seq=0, h=96, w=96):
    """Left half red vertical stripes, right half green diagonal stripes."""
    rng = np.random.default_rng(zlib.crc32(frame_id.encode()))
    ys, xs = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w, 3), dtype=np.float64)
    half = w // 2
    left_wave = 25 * np.sin(xs[:, :half] * 1.1)
    img[:, :half] = np.stack(
        [170 + left_wave, 60 + 0.6 * left_wave, np.full((h, half), 50.0)], axis=2)
    right_wave = 28 * np.sin((xs[:, half:] + ys[:, half:]) * 0.8)
    img[:, half:] = np.stack(
        [np.full((h, w - half), 50.0), 160 + right_wave, 70 + 0.5 * right_wave],
        axis=2)
    img += rng.normal(0, 5, size=img.shape)
    return ImageFrame(frame_id, seq, np.clip(img, 0, 255).astype(np.uint8))


def two_texture_manifest(n_frames=2):
    frames, annotations = [], {}
    for i in range(n_frames):
        fid = f"f{i}"
        frame = two_texture_frame(fid, i)
        frames.append(FrameEntry(fid, i, image=frame.image))
        annotations[fid] = FrameAnnotationSet(fid, [
            anchor(22, 30, 32, 0),
            anchor(24, 66, 32, 0),
            anchor(70, 30, 32, 1),
            anchor(74, 66, 32, 1),
        ])
    return DatasetManifest(dataset_id="two-texture", frames=frames,
                           annotations=annotations)


@pytest.fixture
def manifest2():
    return two_texture_manifest()
