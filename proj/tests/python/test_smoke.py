import json
import math
import os
import pathlib
import shutil

import numpy as np
import pytest

import slm


@pytest.fixture
def scratch(tmp_path):
    base = os.environ.get("SLM_TEST_TMP")
    if not base:
        return tmp_path
    d = pathlib.Path(base) / "python_smoke"
    shutil.rmtree(d, ignore_errors=True)
    d.mkdir(parents=True)
    return d


def test_projection_round_trip():
    cam = slm.Camera()
    cam.intrinsics.fx = cam.intrinsics.fy = 800.0
    cam.intrinsics.cx, cam.intrinsics.cy = 319.5, 239.5
    cam.intrinsics.width, cam.intrinsics.height = 640, 480
    cam.world_from_camera = slm.look_at(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]))
    rng = np.random.default_rng(0)
    for _ in range(100):
        px = rng.uniform([0, 0], [640, 480])
        p = slm.unproject(px, rng.uniform(0.5, 4.0), cam)
        back, depth = slm.project(p, cam)
        assert np.allclose(back, px, atol=1e-9)
        assert depth > 0
    with pytest.raises(slm.BehindCameraError):
        slm.project(np.array([0.0, 1.0, 3.0]), cam)


def test_tiles_and_iou():
    assert len(slm.tile(4000, 6000)) == 247
    assert slm.iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)


def test_soft_nms_decay():
    dets = [
        {"det_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9},
        {"det_id": 2, "bbox": [0, 0, 10, 10], "score": 0.8},
    ]
    out = slm.soft_nms(dets, 0.5, 0.0)
    assert [d["det_id"] for d in out] == [1, 2]
    assert round(out[1]["score"], 4) == 0.1083


def test_evaluate_fixture():
    def box(x, y, s):
        return {"det_id": int(x + y), "bbox": [x, y, 10, 10], "score": s}

    gts = {"img": [box(0, 0, 1), box(100, 0, 1), box(200, 0, 1)]}
    dets = {"img": [box(0, 0, 0.9), box(50, 50, 0.8), box(100, 0, 0.7)]}
    r = slm.evaluate(dets, gts)
    assert r["map50"] == pytest.approx(5 / 9)
    with pytest.raises(slm.InputError):
        slm.evaluate({"other": []}, gts)


def test_clustering_and_geometry():
    pts = [np.array(p, dtype=float) for p in ([0, 0, 0], [0.01, 0, 0], [0, 0.01, 0], [1, 1, 1])]
    clusters, rejected = slm.cluster_points(pts, 0.02, 3)
    assert clusters == [[0, 1, 2]]
    assert rejected == [[3]]
    a = slm.make_icosphere(4, 1.0)
    b = slm.make_icosphere(4, 1.1)
    hmax, hmean = slm.hausdorff(a, b, 20000, 1)
    assert hmean == pytest.approx(0.1, rel=0.05)
    assert slm.hausdorff(a, a, 2000)[0] == 0.0
    d = slm.geodesic(a, 0, [0, 1])
    assert d[0] == 0.0 and 0 < d[1] < math.inf


def test_pipeline_on_a_small_session(scratch):
    session = scratch / "s"
    slm.synthesize_phantom_session(session, "s", lesions=4, diameter_mm=20.0, resolution_scale=0.1)
    with pytest.raises(slm.DependencyError):
        slm.run_pipeline(session, ["fuse"])
    config = {"detect": {"external_detections": "gt/detections.json"}}
    manifest = slm.run_pipeline(session, config=config)
    assert all(manifest["stages"][f]["done"] for f in ("rendered", "detected", "fused", "tracked"))
    lesions = json.loads((session / "lesions3d.json").read_text())
    assert len(lesions["lesions"]) == 4

    dets = json.loads((session / "detections.json").read_text())
    image_id, items = next((k, v) for k, v in dets.items() if v)
    edited = slm.apply_edit(session, image_id, items[0]["det_id"], "remove")
    assert edited["removed"] is True
    assert slm.load_session(session)["stages"]["fused"]["stale"] is True
    with pytest.raises(slm.NotFoundError):
        slm.apply_edit(session, image_id, 9999, "remove")
