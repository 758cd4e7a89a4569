"""Command line entry points: train, segment, serve, evaluate, simulate-loop."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import loop, metrics, risk
from .config import load_run_config
from .dataset import load_manifest
from .segmenter import save_segmentation, segment_frame
from .simulate import SimulationSpec, run_simulation

logger = logging.getLogger(__name__)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML/JSON run config")
@click.option("--seed", type=int, default=None, help="override every rng seed")
@click.option("-v", "--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx, config_path, seed, verbose):
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    ctx.obj = load_run_config(config_path, seed)


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="session directory to create")
@click.pass_obj
def train(cfg, manifest_path, out_dir):
    """Offline learning: encoder, category discovery, risk bound."""
    manifest = load_manifest(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = loop.offline_learn(
        manifest, cfg.sampler, cfg.train, em_cfg=cfg.em,
        risk_cfg=cfg.risk_bound, session_cfg=cfg.session,
        log_path=out / "train_log.jsonl",
    )
    state = loop.start_session(
        bundle, manifest, cfg.sampler, cfg.sliding_window, cfg.train,
        cfg.em, cfg.risk_bound, cfg.session, series=cfg.series.make_series(),
    )
    loop.save_session(state, out, manifest_path)
    click.echo(json.dumps({
        "version": bundle.version,
        "clusters": bundle.category_model.n_clusters,
        "risk_bound": bundle.risk_bound,
        "session_dir": str(out),
    }, indent=2))


def _load_state(cfg, session_dir, manifest_path=None):
    session_dir = Path(session_dir)
    doc = json.loads((session_dir / "session.json").read_text(encoding="utf-8"))
    manifest_path = manifest_path or doc.get("manifest_path")
    if manifest_path is None:
        raise click.ClickException("session has no manifest path; pass --manifest")
    manifest = load_manifest(manifest_path)
    return loop.load_session(session_dir, manifest, cfg.sampler,
                             cfg.sliding_window, cfg.train, cfg.em,
                             cfg.risk_bound), manifest_path


@main.command()
@click.option("--session", "session_dir", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="manifest of frames to segment (defaults to the session's)")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--frame", "frame_ids", multiple=True,
              help="segment only these frame ids")
@click.pass_obj
def segment(cfg, session_dir, manifest_path, out_dir, frame_ids):
    """Segment frames with the session's current bundle."""
    state, _ = _load_state(cfg, session_dir, manifest_path)
    manifest = state.manifest if manifest_path is None else load_manifest(manifest_path)
    bundle = state.bundle
    encode_fn = bundle.encode_fn()
    ids = list(frame_ids) or [f.frame_id for f in manifest.frames]
    out = Path(out_dir)
    series = cfg.series.make_series()
    for fid in ids:
        frame = manifest.get_frame(fid)
        result = segment_frame(frame, bundle.category_model, cfg.sliding_window,
                               cfg.sampler, encode_fn)
        save_segmentation(result, out, bundle.category_model)
        series = risk.update_trigger(series, fid, result.frame_risk)
        click.echo(f"{fid}: frame_risk={result.frame_risk:.3f}")
    risk.export_risk_series(series, out / "risk_series.jsonl")
    click.echo(f"wrote {len(ids)} segmentations to {out}")


@main.command()
@click.option("--session", "session_dir", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True, type=int)
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None,
              help="static console bundle (defaults to bundled frontend/dist)")
@click.pass_obj
def serve(cfg, session_dir, manifest_path, host, port, frontend_dir):
    """Serve the annotation console API (and UI when built)."""
    import uvicorn

    from .server import SessionRuntime, create_app

    state, mpath = _load_state(cfg, session_dir, manifest_path)
    runtime = SessionRuntime(state, session_dir=session_dir, manifest_path=mpath)
    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = candidate if candidate.exists() else None
    app = create_app(runtime, frontend_dir)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--pred-dir", type=click.Path(exists=True), required=True,
              help="directory with <id>_labels.png and <id>_labels.json")
@click.option("--ref-dir", type=click.Path(exists=True), required=True,
              help="directory with <id>.png reference masks")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
def evaluate(cfg, pred_dir, ref_dir, out_path):
    """Score predictions against reference masks."""
    pred_dir, ref_dir = Path(pred_dir), Path(ref_dir)
    preds, refs, flrs = [], [], []
    for label_png in sorted(pred_dir.glob("*_labels.png")):
        fid = label_png.name[:-len("_labels.png")]
        ref_png = ref_dir / f"{fid}.png"
        if not ref_png.exists():
            logger.warning("no reference mask for %s; skipped", fid)
            continue
        preds.append(np.asarray(Image.open(label_png)).astype(np.int64))
        refs.append(np.asarray(Image.open(ref_png)).astype(np.int64))
        sidecar = label_png.with_suffix(".json")
        if sidecar.exists():
            flrs.append(json.loads(sidecar.read_text())["frame_risk"])
    if not preds:
        raise click.ClickException("no prediction/reference pairs found")
    report = metrics.evaluate_segmentations(
        preds, refs, flrs or None, cfg.series.risk_level
    )
    Path(out_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                              encoding="utf-8")
    click.echo(json.dumps({
        "pixel_accuracy": report.pixel_accuracy,
        "miou": report.miou,
        "frames": len(preds),
    }, indent=2))


def _quick_sim_config(cfg):
    from dataclasses import replace

    from .config import RunConfig, SeriesConfig
    from .encoder import TrainConfig
    from .gmm import EMConfig
    from .loop import SessionConfig
    from .sampler import SamplerConfig
    from .segmenter import SlidingWindowConfig

    quick = RunConfig(
        sampler=SamplerConfig(sample_size=32, negatives_per_query=8,
                              rng_seed=cfg.sampler.rng_seed),
        train=TrainConfig(temperature=0.3, learning_rate=0.002, steps=600,
                          embedding_dim=16, channels=(16, 32, 32, 32, 32),
                          rng_seed=cfg.train.rng_seed),
        sliding_window=SlidingWindowConfig(patch_size=32, stride=16),
        series=SeriesConfig(risk_level=0.3, window=24, trigger_threshold=0.5),
        session=SessionConfig(batch_size=8, min_spacing=2,
                              modeling_samples_per_anchor=8),
        em=EMConfig(max_clusters=8, n_restarts=5, rng_seed=cfg.em.rng_seed),
    )
    return replace(quick, risk_bound=replace(quick.risk_bound, confidence=0.92))


@main.command("simulate-loop")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="persist the final session here")
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--quick", is_flag=True,
              help="small scenes, compact encoder, fewer steps (overrides config)")
@click.pass_obj
def simulate_loop(cfg, out_dir, report_path, quick):
    """Run the synthetic offline→online→active-learning rehearsal."""
    spec = SimulationSpec(anchor_size=32, anchors_per_class=3)
    if quick:
        cfg = _quick_sim_config(cfg)
        spec = SimulationSpec(n_train_frames=10, n_indist_stream=16,
                              n_shift_stream=24, n_eval_frames=6,
                              anchor_size=32, anchors_per_class=3)
    report = run_simulation(spec, cfg, out_dir)
    text = json.dumps(report, indent=2, default=str)
    if report_path:
        Path(report_path).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


if __name__ == "__main__":
    main()
