import base64
import io
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from actseg import loop, risk
from actseg.server import SessionRuntime, annotation_schema, create_app

from conftest import anchor, two_texture_manifest
from test_loop import _session, _shift_frame, tiny_cfgs


@pytest.fixture(scope="module")
def triggered_runtime(tmp_path_factory):
    manifest = two_texture_manifest()
    sampler, train, em, rb, scfg, sw = tiny_cfgs()
    bundle = loop.offline_learn(manifest, sampler, train, em_cfg=em,
                                risk_cfg=rb, session_cfg=scfg)
    state = _session((manifest, bundle))
    for _ in loop.run_online(iter([_shift_frame(f"s{i}", i) for i in range(8)]),
                             state):
        pass
    runtime = SessionRuntime(state, session_dir=tmp_path_factory.mktemp("session"))
    return runtime


@pytest.fixture(scope="module")
def client(triggered_runtime):
    return TestClient(create_app(triggered_runtime))


def test_session_summary(client):
    body = client.get("/api/session").json()
    assert body["bundle_version"] == 1
    assert body["triggered"] is True
    assert body["queue"] == {"pending": 0, "annotated": 0, "skipped": 0}
    assert body["frames_seen"] == 8


def test_risk_series_endpoint(client):
    body = client.get("/api/risk-series?window=4").json()
    assert len(body["series"]) == 4
    assert body["triggered"] is True
    assert body["epsilon"] == 0.5
    assert all(entry["flr"] == 1.0 for entry in body["series"])


def test_frame_image_and_segmentation(client):
    png = client.get("/api/frames/s7/image")
    assert png.status_code == 200
    img = Image.open(io.BytesIO(png.content))
    assert img.size == (96, 96)

    seg = client.get("/api/frames/s7/segmentation").json()
    assert seg["frame_id"] == "s7"
    assert seg["patch_count"] == 9
    label_img = Image.open(io.BytesIO(base64.b64decode(seg["label_png_b64"])))
    assert label_img.size == (96, 96)

    riskbody = client.get("/api/frames/s7/risk").json()
    assert riskbody["height"] == 96 and riskbody["width"] == 96
    data = np.frombuffer(base64.b64decode(riskbody["risk_b64"]), dtype="<f4")
    assert data.shape == (96 * 96,)
    assert riskbody["frame_risk"] == 1.0


def test_unknown_frame_404(client):
    assert client.get("/api/frames/nope/image").status_code == 404


def test_annotation_flow(client, triggered_runtime):
    queue = client.get("/api/queue").json()
    assert queue == []

    opened = client.post("/api/batch/open")
    assert opened.status_code == 200
    requests = opened.json()
    assert len(requests) >= 2
    # queue now sorted by frame risk descending
    queue = client.get("/api/queue").json()
    assert [q["request_id"] for q in queue]
    risks = [q["frame_risk"] for q in queue]
    assert risks == sorted(risks, reverse=True)

    # schema violations are rejected before touching state
    bad = client.post("/api/annotations", json={"frame_id": "x"})
    assert bad.status_code == 422
    bad2 = client.post("/api/annotations", json={
        "frame_id": queue[0]["frame_id"],
        "anchors": [{"cx": 1, "cy": 1, "w": 0, "h": 4, "label": 0}],
    })
    assert bad2.status_code == 422

    # single group label passes the schema but fails validation
    single = client.post("/api/annotations", json={
        "frame_id": queue[0]["frame_id"],
        "anchors": [{"cx": 20, "cy": 20, "w": 8, "h": 8, "label": 0},
                    {"cx": 40, "cy": 40, "w": 8, "h": 8, "label": 0}],
    })
    assert single.status_code == 422

    unknown = client.post("/api/annotations", json={
        "frame_id": "not-requested",
        "anchors": [{"cx": 20, "cy": 20, "w": 8, "h": 8, "label": 0},
                    {"cx": 40, "cy": 40, "w": 8, "h": 8, "label": 1}],
    })
    assert unknown.status_code == 404

    payload = {
        "frame_id": queue[0]["frame_id"],
        "anchors": [
            {"cx": 22, "cy": 30, "w": 32, "h": 32, "label": 0},
            {"cx": 24, "cy": 66, "w": 32, "h": 32, "label": 0},
            {"cx": 70, "cy": 30, "w": 32, "h": 32, "label": 1},
            {"cx": 74, "cy": 66, "w": 32, "h": 32, "label": 1},
        ],
    }
    ok = client.post("/api/annotations", json=payload)
    assert ok.status_code == 200
    assert ok.json()["status"] == "annotated"

    for q in queue[1:]:
        payload2 = dict(payload, frame_id=q["frame_id"])
        assert client.post("/api/annotations", json=payload2).status_code == 200

    skipped = client.post(f"/api/requests/{queue[0]['request_id']}/skip")
    assert skipped.status_code == 200
    assert client.post("/api/requests/zzz/skip").status_code == 404

    job = client.post("/api/model/update")
    assert job.status_code == 200
    job_id = job.json()["job_id"]
    for _ in range(600):
        body = client.get(f"/api/model/update/{job_id}").json()
        if body["status"] != "running":
            break
        time.sleep(0.1)
    assert body["status"] == "done"
    assert body["new_version"] == 2
    assert client.get("/api/session").json()["bundle_version"] == 2
    # session persisted after the update
    session_file = triggered_runtime.session_dir / "session.json"
    assert json.loads(session_file.read_text())["version"] == 2


def test_annotation_schema_is_valid_jsonschema():
    schema = annotation_schema()
    assert schema["title"] == "FrameAnnotationSet"
    from jsonschema import Draft7Validator
    Draft7Validator.check_schema(schema)
