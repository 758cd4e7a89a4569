"""End-to-end synthetic rehearsal of the passive/active learning loop.

Builds a weakly annotated synthetic training set, learns the initial
bundle, streams in-distribution frames (expecting quiet risk), streams
domain-shifted frames until the trigger fires, answers the annotation
batch with the scripted annotator, updates the model and measures the
before/after risk and pixel metrics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import loop, metrics, risk, synthetic
from .config import RunConfig
from .segmenter import segment_frame

logger = logging.getLogger(__name__)


@dataclass
class SimulationSpec:
    n_train_frames: int = 20
    train_classes: Tuple[int, ...] = (0, 1, 2, 3)
    shift_class: int = 4
    height: int = 192
    width: int = 192
    bands: int = 2
    anchors_per_class: int = 2
    anchor_size: int = 24
    n_indist_stream: int = 60
    n_shift_stream: int = 60
    n_eval_frames: int = 16
    seed: int = 0


def augmentation_similarity_check(bundle: loop.ModelBundle,
                                  manifest, run_cfg: RunConfig,
                                  seed: int = 0) -> dict:
    """For each anchor: do two augmented views of the same patch stay more
    similar than the median similarity to same-frame negative neighbors?"""
    from .encoder import encode, similarity
    from .sampler import augment, compose_fg_bg, sample_neighbor

    rng = np.random.default_rng(seed)
    cfg = run_cfg.sampler
    ok = total = 0
    for fid in manifest.annotated_frame_ids():
        frame = manifest.get_frame(fid)
        anchors = manifest.annotations[fid].anchors
        for query in anchors:
            negatives = [a for a in anchors if a.group_label != query.group_label]
            if not negatives:
                continue
            base = compose_fg_bg(frame, query.region, cfg)
            va = encode(bundle.encoder_params, augment(base, cfg, rng).tensor)
            vb = encode(bundle.encoder_params, augment(base, cfg, rng).tensor)
            neg_sims = []
            for neg in negatives:
                for _ in range(4):
                    region = sample_neighbor(neg.region, (frame.width, frame.height), rng)
                    z = encode(bundle.encoder_params,
                               compose_fg_bg(frame, region, cfg).tensor)
                    neg_sims.append(similarity(va, z))
            ok += similarity(va, vb) > float(np.median(neg_sims))
            total += 1
    return {"ok": ok, "total": total, "fraction": ok / max(1, total)}


def evaluate_bundle(bundle: loop.ModelBundle, frames: Sequence[synthetic.SyntheticFrame],
                    run_cfg: RunConfig) -> Tuple[metrics.EvalReport, List[float]]:
    """Segment ground-truthed frames and score them."""
    encode_fn = bundle.encode_fn()
    preds, refs, flrs = [], [], []
    for sf in frames:
        result = segment_frame(sf.frame, bundle.category_model,
                               run_cfg.sliding_window, run_cfg.sampler, encode_fn)
        preds.append(result.label_map)
        refs.append(sf.mask)
        flrs.append(result.frame_risk)
    report = metrics.evaluate_segmentations(
        preds, refs, flrs, run_cfg.series.risk_level
    )
    return report, flrs


def scripted_annotation_round(state: loop.SessionState,
                              masks: Dict[str, np.ndarray],
                              spec: SimulationSpec) -> Tuple[int, int]:
    """Answer every open request from ground truth; returns (annotated, skipped)."""
    requests = loop.open_annotation_batch(state)
    annotated, skipped = 0, 0
    submissions = []
    for i, req in enumerate(requests):
        frame = state.frame_store[req.frame_id]
        rng = np.random.default_rng((spec.seed, 550_000 + i))
        ann = synthetic.annotate_from_mask(
            frame, masks[req.frame_id], rng,
            spec.anchors_per_class, spec.anchor_size,
        )
        if ann is None:
            loop.skip_request(state, req.request_id)
            skipped += 1
        else:
            submissions.append(ann)
            annotated += 1
    loop.ingest_annotations(state, submissions)
    return annotated, skipped


def run_simulation(spec: SimulationSpec, run_cfg: RunConfig,
                   out_dir=None) -> dict:
    report: dict = {"spec": vars(spec)}

    manifest, _ = synthetic.build_training_manifest(
        spec.n_train_frames, spec.train_classes, spec.height, spec.width,
        seed=spec.seed, bands=spec.bands,
        anchors_per_class=spec.anchors_per_class, anchor_size=spec.anchor_size,
    )
    logger.info("offline learning on %d annotated frames", spec.n_train_frames)
    bundle = loop.offline_learn(
        manifest, run_cfg.sampler, run_cfg.train,
        em_cfg=run_cfg.em, risk_cfg=run_cfg.risk_bound,
        session_cfg=run_cfg.session,
    )
    report["offline"] = {
        "m": bundle.category_model.n_clusters,
        "risk_bound": bundle.risk_bound,
        "bic_curve": bundle.category_model.fit_stats.get("bic_curve"),
        "augmented_view_similarity": augmentation_similarity_check(
            bundle, manifest, run_cfg, seed=spec.seed + 17),
    }

    eval_indist = synthetic.make_frames(
        spec.n_eval_frames, spec.train_classes, spec.height, spec.width,
        seed=spec.seed + 101, prefix="evalA", bands=spec.bands,
    )
    indist_report, _ = evaluate_bundle(bundle, eval_indist, run_cfg)
    report["indist_eval"] = indist_report.to_dict()

    state = loop.start_session(
        bundle, manifest, run_cfg.sampler, run_cfg.sliding_window,
        run_cfg.train, run_cfg.em, run_cfg.risk_bound, run_cfg.session,
        series=run_cfg.series.make_series(),
    )

    # quiet phase: frames drawn from the training distribution
    indist_stream = synthetic.make_frames(
        spec.n_indist_stream, spec.train_classes, spec.height, spec.width,
        seed=spec.seed + 202, prefix="streamA", bands=spec.bands,
    )
    triggered_early = False
    for _ in loop.run_online((sf.frame for sf in indist_stream), state):
        triggered_early = triggered_early or state.series.triggered
    report["indist_stream"] = {
        "frames": spec.n_indist_stream,
        "triggered": triggered_early,
        "mean_flr": float(np.mean([r for _, r in state.series.frame_risks])),
    }

    # domain shift: a new texture class enters the scenes
    shift_classes = tuple(spec.train_classes) + (spec.shift_class,)
    shift_stream = synthetic.make_frames(
        spec.n_shift_stream, shift_classes, spec.height, spec.width,
        seed=spec.seed + 303, prefix="streamB", bands=spec.bands,
        start_sequence=spec.n_indist_stream,
        force_class=spec.shift_class,
    )
    masks = {sf.frame.frame_id: sf.mask for sf in shift_stream}
    masks.update({sf.frame.frame_id: sf.mask for sf in indist_stream})
    # the trigger latches, so the whole shifted sequence can stream before the
    # annotation batch opens over the trailing window
    trigger_after: Optional[int] = None
    for i, _ in enumerate(loop.run_online((sf.frame for sf in shift_stream), state)):
        if trigger_after is None and state.series.triggered:
            trigger_after = i + 1
    report["shift_stream"] = {"trigger_after_frames": trigger_after}

    eval_shift = synthetic.make_frames(
        spec.n_eval_frames, shift_classes, spec.height, spec.width,
        seed=spec.seed + 404, prefix="evalB", bands=spec.bands,
        force_class=spec.shift_class,
    )
    pre_report, pre_flrs = evaluate_bundle(bundle, eval_shift, run_cfg)
    report["shift_eval_pre"] = pre_report.to_dict()

    if trigger_after is None:
        report["active_round"] = None
        return report

    annotated, skipped = scripted_annotation_round(state, masks, spec)
    new_bundle = loop.update_model(state)
    report["active_round"] = {
        "annotated": annotated,
        "skipped": skipped,
        "new_version": new_bundle.version,
        "m": new_bundle.category_model.n_clusters,
        "risk_bound": new_bundle.risk_bound,
    }

    post_report, post_flrs = evaluate_bundle(new_bundle, eval_shift, run_cfg)
    report["shift_eval_post"] = post_report.to_dict()
    pre_mean = float(np.mean(pre_flrs))
    post_mean = float(np.mean(post_flrs))
    report["flr_change"] = {
        "pre_mean": pre_mean,
        "post_mean": post_mean,
        "relative_drop": (pre_mean - post_mean) / pre_mean if pre_mean else 0.0,
    }

    if out_dir is not None:
        loop.save_session(state, out_dir)
    return report
