"""Active-learning orchestration: offline learning, online segmentation with
risk tracking, hard-frame selection, annotation ingestion and model update.

One owner serializes all state transitions; segmentation itself is pure and
can run against a frozen bundle while an annotation batch is open. Session
state is persisted after every transition so a loop can resume.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from . import encoder as enc
from . import gmm, risk
from .dataset import (
    DatasetManifest,
    FrameAnnotationSet,
    FrameEntry,
    ImageFrame,
    validate_training_set,
)
from .errors import (
    EmptySupplementalPool,
    InvalidAnnotation,
    NoTrainableFrames,
    NoTriggeredState,
    UnknownRequest,
    UnresolvedRequests,
)
from .sampler import SamplerConfig, compose_fg_bg, sample_neighbor
from .segmenter import SegmentationResult, SlidingWindowConfig, segment_frame

logger = logging.getLogger(__name__)

STATUS_PENDING = "pending"
STATUS_ANNOTATED = "annotated"
STATUS_SKIPPED = "skipped"


@dataclass
class SessionConfig:
    batch_size: int = 20  # annotation requests per active-learning round
    min_spacing: int = 5  # required sequence-index gap between selected frames
    modeling_samples_per_anchor: int = 8  # neighbor samples embedded per anchor
    modeling_seed: int = 1234


@dataclass(eq=False)
class ModelBundle:
    encoder_params: enc.EncoderParams
    category_model: gmm.CategoryModel
    risk_bound: float
    version: int
    provenance: dict

    def encode_fn(self):
        params = self.encoder_params
        return lambda tensors: enc.encode_batch(params, tensors)


@dataclass
class AnnotationRequest:
    request_id: str
    frame_id: str
    frame_risk: float
    sequence_index: int
    status: str = STATUS_PENDING
    created_at: float = field(default_factory=time.time)


@dataclass(eq=False)
class SessionState:
    bundle: ModelBundle
    series: risk.RiskSeries
    config: SessionConfig
    manifest: DatasetManifest
    sampler_cfg: SamplerConfig
    sw_cfg: SlidingWindowConfig
    train_cfg: enc.TrainConfig
    em_cfg: gmm.EMConfig
    risk_cfg: risk.RiskBoundConfig
    requests: Dict[str, AnnotationRequest] = field(default_factory=dict)
    pool: Dict[str, FrameAnnotationSet] = field(default_factory=dict)  # supplemental
    frame_store: Dict[str, ImageFrame] = field(default_factory=dict)
    recent: List[Tuple[str, int, float]] = field(default_factory=list)  # id, seq, flr
    skipped_at: Dict[str, int] = field(default_factory=dict)
    lineage: List[dict] = field(default_factory=list)
    frames_seen: int = 0
    annotation_open: bool = False

    def open_requests(self) -> List[AnnotationRequest]:
        return [r for r in self.requests.values() if r.status == STATUS_PENDING]


def embed_training_patches(params: enc.EncoderParams, manifest: DatasetManifest,
                           sampler_cfg: SamplerConfig, samples_per_anchor: int,
                           seed: int) -> Tuple[np.ndarray, List[str]]:
    """Embeddings of every training anchor patch plus seeded neighbor samples.

    The neighbor samples widen the modeling pool the same way the sampler
    widens training data; no photometric augmentation is applied.
    """
    report = validate_training_set(manifest)
    rng = np.random.default_rng(seed)
    tensors, owners = [], []
    for fid in manifest.annotated_frame_ids():
        if fid not in report.trainable_frame_ids:
            continue
        frame = manifest.get_frame(fid)
        bounds = (frame.width, frame.height)
        for anchor in manifest.annotations[fid].anchors:
            tensors.append(compose_fg_bg(frame, anchor.region, sampler_cfg).tensor)
            owners.append(fid)
            for _ in range(samples_per_anchor):
                region = sample_neighbor(anchor.region, bounds, rng)
                tensors.append(compose_fg_bg(frame, region, sampler_cfg).tensor)
                owners.append(fid)
    if not tensors:
        raise NoTrainableFrames("manifest has no trainable annotated frame")
    stack = np.stack(tensors)
    chunks = [
        enc.encode_batch(params, stack[i:i + 256]) for i in range(0, len(stack), 256)
    ]
    return np.concatenate(chunks, axis=0), owners


def _fit_categories_and_bound(params, manifest, supplemental_manifest,
                              sampler_cfg, session_cfg, em_cfg, risk_cfg):
    Z, _ = embed_training_patches(
        params, manifest, sampler_cfg,
        session_cfg.modeling_samples_per_anchor, session_cfg.modeling_seed,
    )
    if supplemental_manifest is not None:
        Z_sup, _ = embed_training_patches(
            params, supplemental_manifest, sampler_cfg,
            session_cfg.modeling_samples_per_anchor, session_cfg.modeling_seed + 1,
        )
        Z = np.concatenate([Z, Z_sup], axis=0)
    model = gmm.select_model(Z, cfg=em_cfg)
    logp = model.log_densities(Z)
    risks = 1.0 - np.exp(np.minimum(logp.max(axis=1), 700.0))  # same clamp as the gate
    bound = risk.estimate_risk_bound(risks, risk_cfg.confidence)
    model.risk_bound = bound
    return model, bound, len(Z)


def offline_learn(manifest: DatasetManifest, sampler_cfg: SamplerConfig,
                  train_cfg: enc.TrainConfig, em_cfg: Optional[gmm.EMConfig] = None,
                  risk_cfg: Optional[risk.RiskBoundConfig] = None,
                  session_cfg: Optional[SessionConfig] = None,
                  log_path=None) -> ModelBundle:
    """Initial bundle: train encoder, discover categories, fit the risk bound."""
    em_cfg = em_cfg or gmm.EMConfig()
    risk_cfg = risk_cfg or risk.RiskBoundConfig()
    session_cfg = session_cfg or SessionConfig()
    params = enc.train(manifest, sampler_cfg, train_cfg, log_path=log_path)
    model, bound, n_patches = _fit_categories_and_bound(
        params, manifest, None, sampler_cfg, session_cfg, em_cfg, risk_cfg,
    )
    model.version = params.version
    return ModelBundle(
        encoder_params=params,
        category_model=model,
        risk_bound=bound,
        version=params.version,
        provenance={
            "manifest_id": manifest.dataset_id,
            "parent_version": None,
            "supplemental_frame_ids": [],
            "modeled_patches": n_patches,
        },
    )


def select_hard_frames(frame_risks: Sequence[Tuple[int, float]], batch_size: int,
                       min_spacing: int) -> List[int]:
    """Exact risk-sum-maximizing spaced subset of frame indices.

    Dynamic programming over (position, picks); any two chosen indices must
    differ by more than `min_spacing`. If fewer than `batch_size` frames can
    be spaced, the largest feasible count is used (with a warning). Ties
    resolve to the lexicographically smallest index list.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    items = sorted(frame_risks, key=lambda t: t[0])
    if not items:
        return []
    idxs = [int(i) for i, _ in items]
    vals = [float(v) for _, v in items]
    n = len(items)
    nxt = [bisect_right(idxs, idxs[i] + min_spacing) for i in range(n)]

    # largest achievable pick count (greedy earliest is optimal for spacing)
    feasible, cursor = 0, 0
    while cursor < n:
        feasible += 1
        cursor = nxt[cursor]
    target = min(batch_size, feasible)
    if target < batch_size:
        logger.warning(
            "only %d of %d requested frames satisfy spacing > %d",
            target, batch_size, min_spacing,
        )

    neg_inf = float("-inf")
    # dp[i][b]: best sum picking exactly b from positions i.. ; walk backwards
    dp = [[neg_inf] * (target + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dp[i][0] = 0.0
    for i in range(n - 1, -1, -1):
        for b in range(1, target + 1):
            skip = dp[i + 1][b]
            take = neg_inf
            sub = dp[nxt[i]][b - 1]
            if sub > neg_inf:
                take = vals[i] + sub
            dp[i][b] = take if take >= skip else skip

    chosen: List[int] = []
    i, b = 0, target
    while b > 0:
        sub = dp[nxt[i]][b - 1]
        take = vals[i] + sub if sub > neg_inf else neg_inf
        if take >= dp[i + 1][b]:  # prefer taking earlier indices on ties
            chosen.append(idxs[i])
            i, b = nxt[i], b - 1
        else:
            i += 1
    return chosen


def start_session(bundle: ModelBundle, manifest: DatasetManifest,
                  sampler_cfg: SamplerConfig, sw_cfg: SlidingWindowConfig,
                  train_cfg: enc.TrainConfig, em_cfg: gmm.EMConfig,
                  risk_cfg: risk.RiskBoundConfig, session_cfg: SessionConfig,
                  series: Optional[risk.RiskSeries] = None) -> SessionState:
    state = SessionState(
        bundle=bundle,
        series=series or risk.RiskSeries(),
        config=session_cfg,
        manifest=manifest,
        sampler_cfg=sampler_cfg,
        sw_cfg=sw_cfg,
        train_cfg=train_cfg,
        em_cfg=em_cfg,
        risk_cfg=risk_cfg,
    )
    state.lineage.append(dict(bundle.provenance, version=bundle.version))
    return state


def run_online(frames: Iterable[ImageFrame], state: SessionState,
               on_result=None) -> Iterator[SegmentationResult]:
    """Segment a frame stream, tracking risks and the trigger.

    While an annotation batch is open the series keeps recording but the
    trigger cannot latch; the current bundle stays frozen until update_model
    swaps it atomically.
    """
    encode_fn = state.bundle.encode_fn()
    bundle_version = state.bundle.version
    for frame in frames:
        if state.bundle.version != bundle_version:  # hot-swapped bundle
            encode_fn = state.bundle.encode_fn()
            bundle_version = state.bundle.version
        result = segment_frame(frame, state.bundle.category_model, state.sw_cfg,
                               state.sampler_cfg, encode_fn)
        _record_frame(state, frame, result.frame_risk)
        if on_result is not None:
            on_result(frame, result)
        yield result


def _record_frame(state: SessionState, frame: ImageFrame, flr: float) -> None:
    state.frames_seen += 1
    state.frame_store[frame.frame_id] = frame
    state.recent.append((frame.frame_id, frame.sequence_index, flr))
    if len(state.recent) > state.series.window:
        evicted = state.recent.pop(0)
        keep = {fid for fid, _, _ in state.recent}
        fid = evicted[0]
        if fid not in keep and fid not in state.pool and not any(
            r.frame_id == fid for r in state.requests.values()
        ):
            state.frame_store.pop(fid, None)
    state.series = risk.update_trigger(state.series, frame.frame_id, flr)
    if state.annotation_open and state.series.triggered:
        state.series = risk.acknowledge(state.series)


def open_annotation_batch(state: SessionState) -> List[AnnotationRequest]:
    """Turn a latched trigger into spaced annotation requests over the window."""
    if not state.series.triggered:
        raise NoTriggeredState("no latched trigger; nothing to annotate")
    open_frames = {r.frame_id for r in state.requests.values()
                   if r.status == STATUS_PENDING}
    window = state.series.window
    candidates = []
    meta = {}
    for fid, seq, flr in state.recent[-window:]:
        if flr <= state.series.risk_level:
            continue  # only risky frames are informative to relabel
        if fid in open_frames or fid in state.pool:
            continue
        skipped = state.skipped_at.get(fid)
        if skipped is not None and state.frames_seen - skipped <= window:
            continue
        candidates.append((seq, flr))
        meta[seq] = (fid, flr)
    picked = select_hard_frames(candidates, state.config.batch_size,
                                state.config.min_spacing)
    if len(picked) < state.config.batch_size:
        logger.warning("annotation batch smaller than requested: %d < %d",
                       len(picked), state.config.batch_size)
    requests = []
    for seq in sorted(picked):
        fid, flr = meta[seq]
        req = AnnotationRequest(
            request_id=uuid.uuid4().hex,
            frame_id=fid,
            frame_risk=flr,
            sequence_index=seq,
        )
        state.requests[req.request_id] = req
        requests.append(req)
    state.annotation_open = True
    state.series = risk.acknowledge(state.series)
    return requests


def _request_for_frame(state: SessionState, frame_id: str) -> AnnotationRequest:
    matches = [r for r in state.requests.values() if r.frame_id == frame_id]
    if not matches:
        raise UnknownRequest(f"no annotation request exists for frame {frame_id!r}")
    matches.sort(key=lambda r: r.created_at)
    return matches[-1]


def ingest_annotations(state: SessionState,
                       submissions: Sequence[FrameAnnotationSet]) -> SessionState:
    """Validate and absorb operator submissions into the supplemental pool.

    Re-submitting a frame replaces its previous annotation (the pool is
    keyed by frame), so duplicate submissions are idempotent.
    """
    for ann in submissions:
        req = _request_for_frame(state, ann.frame_id)
        if len(set(a.group_label for a in ann.anchors)) < 2:
            raise InvalidAnnotation(
                f"frame {ann.frame_id!r}: need at least two distinct group labels"
            )
        frame = state.frame_store.get(ann.frame_id)
        if frame is not None:
            for i, anchor in enumerate(ann.anchors):
                x0, y0, x1, y1 = anchor.region.clamped_bounds(frame.width, frame.height)
                if x1 <= x0 or y1 <= y0:
                    raise InvalidAnnotation(
                        f"frame {ann.frame_id!r}: anchor {i} lies outside the image"
                    )
        state.pool[ann.frame_id] = ann
        req.status = STATUS_ANNOTATED
    return state


def skip_request(state: SessionState, request_id: str) -> AnnotationRequest:
    req = state.requests.get(request_id)
    if req is None:
        raise UnknownRequest(f"unknown request {request_id!r}")
    req.status = STATUS_SKIPPED
    state.skipped_at[req.frame_id] = state.frames_seen
    return req


def _supplemental_manifest(state: SessionState) -> DatasetManifest:
    entries = []
    for fid in state.pool:
        frame = state.frame_store.get(fid)
        if frame is None:
            raise EmptySupplementalPool(
                f"image for annotated frame {fid!r} is no longer available"
            )
        entries.append(FrameEntry(fid, frame.sequence_index, image=frame.image))
    entries.sort(key=lambda e: e.sequence_index)
    return DatasetManifest(
        dataset_id=state.manifest.dataset_id + "+supplemental",
        frames=entries,
        annotations=dict(state.pool),
        granularity_tag=state.manifest.granularity_tag,
    )


def update_model(state: SessionState, log_path=None) -> ModelBundle:
    """Fine-tune on the supplemental pool, refit categories and the bound.

    The category model is refitted on the union of original training
    anchors and the supplemental anchors so earlier scenes stay covered.
    The rolling risk window is cleared: old frame risks measured the old
    bundle and would re-latch the trigger immediately.
    """
    if not state.pool:
        raise EmptySupplementalPool("no supplemental annotations ingested")
    if state.open_requests():
        raise UnresolvedRequests(
            f"{len(state.open_requests())} annotation requests still pending"
        )
    sup_manifest = _supplemental_manifest(state)
    params = enc.fine_tune(
        state.bundle.encoder_params,
        list(state.pool.values()),
        sup_manifest,
        state.sampler_cfg,
        state.train_cfg,
        log_path=log_path,
    )
    model, bound, n_patches = _fit_categories_and_bound(
        params, state.manifest, sup_manifest, state.sampler_cfg,
        state.config, state.em_cfg, state.risk_cfg,
    )
    model.version = params.version
    bundle = ModelBundle(
        encoder_params=params,
        category_model=model,
        risk_bound=bound,
        version=params.version,
        provenance={
            "manifest_id": state.manifest.dataset_id,
            "parent_version": state.bundle.version,
            "supplemental_frame_ids": sorted(state.pool),
            "modeled_patches": n_patches,
        },
    )
    state.bundle = bundle
    state.lineage.append(dict(bundle.provenance, version=bundle.version))
    state.annotation_open = False
    state.series = replace(state.series, frame_risks=(), sequence_risk_value=0.0,
                           triggered=False)
    return bundle


# ---------------------------------------------------------------------------
# session persistence

def save_session(state: SessionState, directory, manifest_path=None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames_dir = directory / "frames"
    frames_dir.mkdir(exist_ok=True)
    stored_frames = {}
    for fid, frame in state.frame_store.items():
        png = frames_dir / f"{fid}.png"
        if not png.exists():
            Image.fromarray(frame.image).save(png)
        stored_frames[fid] = frame.sequence_index
    enc.save_checkpoint(state.bundle.encoder_params,
                        enc.checkpoint_path(directory, state.bundle.version),
                        state.train_cfg)
    gmm.save_category_model(state.bundle.category_model,
                            gmm.category_model_path(directory, state.bundle.version))
    doc = {
        "version": state.bundle.version,
        "provenance": state.bundle.provenance,
        "lineage": state.lineage,
        "manifest_path": str(manifest_path) if manifest_path else None,
        "series": {
            "frame_risks": list(map(list, state.series.frame_risks)),
            "risk_level": state.series.risk_level,
            "window": state.series.window,
            "trigger_threshold": state.series.trigger_threshold,
            "sequence_risk_value": state.series.sequence_risk_value,
            "triggered": state.series.triggered,
        },
        "requests": [vars(r) for r in state.requests.values()],
        "pool": [ann.to_dict() for ann in state.pool.values()],
        "skipped_at": state.skipped_at,
        "frames_seen": state.frames_seen,
        "annotation_open": state.annotation_open,
        "recent": list(map(list, state.recent)),
        "stored_frames": stored_frames,
        "config": vars(state.config),
    }
    (directory / "session.json").write_text(
        json.dumps(doc, indent=2) + "\n", encoding="utf-8"
    )


def load_session(directory, manifest: DatasetManifest, sampler_cfg: SamplerConfig,
                 sw_cfg: SlidingWindowConfig, train_cfg: enc.TrainConfig,
                 em_cfg: gmm.EMConfig, risk_cfg: risk.RiskBoundConfig) -> SessionState:
    directory = Path(directory)
    doc = json.loads((directory / "session.json").read_text(encoding="utf-8"))
    params, _ = enc.load_checkpoint(enc.checkpoint_path(directory, doc["version"]))
    model = gmm.load_category_model(
        gmm.category_model_path(directory, doc["version"])
    )
    bundle = ModelBundle(
        encoder_params=params,
        category_model=model,
        risk_bound=model.risk_bound,
        version=doc["version"],
        provenance=doc["provenance"],
    )
    series = risk.RiskSeries(
        frame_risks=tuple((fid, flr) for fid, flr in doc["series"]["frame_risks"]),
        risk_level=doc["series"]["risk_level"],
        window=doc["series"]["window"],
        trigger_threshold=doc["series"]["trigger_threshold"],
        sequence_risk_value=doc["series"]["sequence_risk_value"],
        triggered=doc["series"]["triggered"],
    )
    state = SessionState(
        bundle=bundle, series=series, config=SessionConfig(**doc["config"]),
        manifest=manifest, sampler_cfg=sampler_cfg, sw_cfg=sw_cfg,
        train_cfg=train_cfg, em_cfg=em_cfg, risk_cfg=risk_cfg,
    )
    state.lineage = doc["lineage"]
    state.requests = {
        r["request_id"]: AnnotationRequest(**r) for r in doc["requests"]
    }
    state.pool = {
        ann["frame_id"]: FrameAnnotationSet.from_dict(ann) for ann in doc["pool"]
    }
    state.skipped_at = {k: int(v) for k, v in doc["skipped_at"].items()}
    state.frames_seen = doc["frames_seen"]
    state.annotation_open = doc["annotation_open"]
    state.recent = [(fid, int(seq), float(flr)) for fid, seq, flr in doc["recent"]]
    frames_dir = directory / "frames"
    for fid, seq in doc["stored_frames"].items():
        png = frames_dir / f"{fid}.png"
        if png.exists():
            img = np.asarray(Image.open(png).convert("RGB"))
            state.frame_store[fid] = ImageFrame(fid, int(seq), img, str(png))
    return state
