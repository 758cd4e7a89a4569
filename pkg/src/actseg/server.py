"""HTTP API for the annotation console.

Handlers call into a lock-serialized SessionRuntime owner; segmentation of
individual frames for display runs against the frozen current bundle. A
model update runs as a background job and swaps the bundle atomically when
it finishes.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import threading
import time
import uuid
from importlib import resources
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from jsonschema import ValidationError, validate
from PIL import Image

from . import loop
from .dataset import FrameAnnotationSet
from .errors import (
    ActsegError,
    InvalidAnnotation,
    MissingFrame,
    NoTriggeredState,
    UnknownRequest,
)
from .segmenter import SegmentationResult, segment_frame

logger = logging.getLogger(__name__)


def annotation_schema() -> dict:
    ref = resources.files("actseg.schemas") / "annotation_set.schema.json"
    return json.loads(ref.read_text(encoding="utf-8"))


class SessionRuntime:
    """Serialized owner of the session state used by the API handlers."""

    def __init__(self, state: loop.SessionState, session_dir=None,
                 manifest_path=None):
        self.state = state
        self.session_dir = session_dir
        self.manifest_path = manifest_path
        self.lock = threading.RLock()
        self.jobs: Dict[str, dict] = {}
        self._results: Dict[str, SegmentationResult] = {}
        self._schema = annotation_schema()

    # -- persistence -------------------------------------------------------
    def _persist(self):
        if self.session_dir is not None:
            loop.save_session(self.state, self.session_dir, self.manifest_path)

    # -- reads ---------------------------------------------------------------
    def session_summary(self) -> dict:
        with self.lock:
            st = self.state
            statuses = [r.status for r in st.requests.values()]
            return {
                "bundle_version": st.bundle.version,
                "m": st.bundle.category_model.n_clusters,
                "risk_bound": st.bundle.risk_bound,
                "sequence_risk": st.series.sequence_risk_value,
                "triggered": st.series.triggered,
                "annotation_open": st.annotation_open,
                "queue": {
                    "pending": statuses.count(loop.STATUS_PENDING),
                    "annotated": statuses.count(loop.STATUS_ANNOTATED),
                    "skipped": statuses.count(loop.STATUS_SKIPPED),
                },
                "frames_seen": st.frames_seen,
            }

    def queue(self) -> list:
        with self.lock:
            reqs = sorted(self.state.open_requests(),
                          key=lambda r: (-r.frame_risk, r.sequence_index))
            return [vars(r) for r in reqs]

    def _get_frame(self, frame_id: str):
        st = self.state
        frame = st.frame_store.get(frame_id)
        if frame is None:
            try:
                frame = st.manifest.get_frame(frame_id)
            except MissingFrame:
                raise HTTPException(status_code=404,
                                    detail=f"unknown frame {frame_id!r}")
        return frame

    def frame_image_png(self, frame_id: str) -> bytes:
        with self.lock:
            frame = self._get_frame(frame_id)
        buf = io.BytesIO()
        Image.fromarray(frame.image).save(buf, format="PNG")
        return buf.getvalue()

    def _segment(self, frame_id: str) -> SegmentationResult:
        with self.lock:
            cached = self._results.get(frame_id)
            if cached is not None and cached.frame_id == frame_id:
                return cached
            frame = self._get_frame(frame_id)
            st = self.state
            bundle = st.bundle
        result = segment_frame(frame, bundle.category_model, st.sw_cfg,
                               st.sampler_cfg, bundle.encode_fn())
        with self.lock:
            self._results[frame_id] = result
            if len(self._results) > 256:
                self._results.pop(next(iter(self._results)))
        return result

    def frame_risk_payload(self, frame_id: str) -> dict:
        result = self._segment(frame_id)
        risk32 = np.ascontiguousarray(result.risk_map, dtype="<f4")
        return {
            "frame_id": frame_id,
            "frame_risk": result.frame_risk,
            "height": int(result.risk_map.shape[0]),
            "width": int(result.risk_map.shape[1]),
            "risk_b64": base64.b64encode(risk32.tobytes()).decode("ascii"),
        }

    def segmentation_payload(self, frame_id: str) -> dict:
        result = self._segment(frame_id)
        buf = io.BytesIO()
        Image.fromarray(result.label_map.astype(np.uint8), mode="L").save(
            buf, format="PNG")
        phi = sum(1 for p in result.patch_predictions if p.label == 0)
        with self.lock:
            model = self.state.bundle.category_model
        return {
            "frame_id": frame_id,
            "frame_risk": result.frame_risk,
            "m": model.n_clusters,
            "r_sigma": model.risk_bound,
            "patch_count": len(result.patch_predictions),
            "phi_count": phi,
            "label_png_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
        }

    def risk_series(self, window: Optional[int] = None) -> dict:
        with self.lock:
            series = self.state.series
            entries = series.frame_risks[-(window or series.window):]
            return {
                "series": [{"frame_id": fid, "flr": flr} for fid, flr in entries],
                "phi_s": series.sequence_risk_value,
                "epsilon": series.risk_level,
                "window": series.window,
                "threshold": series.trigger_threshold,
                "triggered": series.triggered,
                "bundle_version": self.state.bundle.version,
            }

    # -- transitions ---------------------------------------------------------
    def submit_annotations(self, payload: dict) -> dict:
        try:
            validate(payload, self._schema)
        except ValidationError as exc:
            raise HTTPException(status_code=422,
                                detail=f"schema violation: {exc.message}")
        ann = FrameAnnotationSet.from_dict(payload)
        with self.lock:
            try:
                loop.ingest_annotations(self.state, [ann])
            except UnknownRequest as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            except InvalidAnnotation as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            req = loop._request_for_frame(self.state, ann.frame_id)
            self._persist()
            return {"request_id": req.request_id, "frame_id": req.frame_id,
                    "status": req.status}

    def skip(self, request_id: str) -> dict:
        with self.lock:
            try:
                req = loop.skip_request(self.state, request_id)
            except UnknownRequest as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            self._persist()
            return {"request_id": req.request_id, "status": req.status}

    def open_batch(self) -> list:
        with self.lock:
            try:
                reqs = loop.open_annotation_batch(self.state)
            except NoTriggeredState as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            self._persist()
            return [vars(r) for r in reqs]

    def start_update(self) -> str:
        with self.lock:
            if any(j["status"] == "running" for j in self.jobs.values()):
                raise HTTPException(status_code=409,
                                    detail="a model update is already running")
            if not self.state.pool:
                raise HTTPException(status_code=409,
                                    detail="no supplemental annotations ingested")
            if self.state.open_requests():
                raise HTTPException(status_code=409,
                                    detail="annotation requests still pending")
            job_id = uuid.uuid4().hex
            self.jobs[job_id] = {"status": "running", "started_at": time.time(),
                                 "new_version": None, "error": None}
        thread = threading.Thread(target=self._run_update, args=(job_id,),
                                  daemon=True)
        thread.start()
        return job_id

    def _run_update(self, job_id: str):
        try:
            bundle = loop.update_model(self.state)
            with self.lock:
                self._results.clear()
                self.jobs[job_id].update(status="done", new_version=bundle.version)
                self._persist()
        except ActsegError as exc:
            logger.exception("model update failed")
            with self.lock:
                self.jobs[job_id].update(status="failed", error=str(exc))

    def job(self, job_id: str) -> dict:
        with self.lock:
            if job_id not in self.jobs:
                raise HTTPException(status_code=404, detail="unknown job")
            return dict(self.jobs[job_id], job_id=job_id)


def create_app(runtime: SessionRuntime, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="actseg annotation console")

    @app.get("/api/session")
    def get_session():
        return runtime.session_summary()

    @app.get("/api/queue")
    def get_queue():
        return runtime.queue()

    @app.get("/api/frames/{frame_id}/image")
    def get_frame_image(frame_id: str):
        return Response(content=runtime.frame_image_png(frame_id),
                        media_type="image/png")

    @app.get("/api/frames/{frame_id}/risk")
    def get_frame_risk(frame_id: str):
        return runtime.frame_risk_payload(frame_id)

    @app.get("/api/frames/{frame_id}/segmentation")
    def get_frame_segmentation(frame_id: str):
        return runtime.segmentation_payload(frame_id)

    @app.post("/api/annotations")
    def post_annotations(payload: dict = Body(...)):
        return runtime.submit_annotations(payload)

    @app.post("/api/requests/{request_id}/skip")
    def post_skip(request_id: str):
        return runtime.skip(request_id)

    @app.post("/api/batch/open")
    def post_open_batch():
        return runtime.open_batch()

    @app.post("/api/model/update")
    def post_update():
        return {"job_id": runtime.start_update()}

    @app.get("/api/model/update/{job_id}")
    def get_update(job_id: str):
        return runtime.job(job_id)

    @app.get("/api/risk-series")
    def get_risk_series(window: Optional[int] = None):
        return runtime.risk_series(window)

    if frontend_dir is not None and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True),
                  name="console")
    return app
