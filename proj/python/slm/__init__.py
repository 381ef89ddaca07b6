"""Skin lesion mapping engine."""

import json
import os

from ._slm import *  # noqa: F401,F403
from ._slm import (
    __version__,
    _default_config,
    _evaluate,
    _load_session,
    _run_pipeline,
    _soft_nms,
)
from ._slm import apply_edit as _apply_edit


def default_config():
    return json.loads(_default_config())


def run_pipeline(session, stages=None, config=None):
    """Run pipeline stages on a session directory; returns the manifest."""
    stages = list(stages) if stages is not None else pipeline_stages()  # noqa: F405
    return json.loads(_run_pipeline(os.fspath(session), stages, json.dumps(config or {})))


def load_session(session):
    return json.loads(_load_session(os.fspath(session)))


def soft_nms(detections, sigma=0.5, score_floor=0.25):
    """Detections are dicts with det_id, bbox [x, y, w, h] and score."""
    return json.loads(_soft_nms(json.dumps(detections), sigma, score_floor))


def evaluate(detections, ground_truth, iou_threshold=0.5):
    """Both arguments map image ids to lists of detection dicts."""
    return json.loads(_evaluate(json.dumps(detections), json.dumps(ground_truth), iou_threshold))


def apply_edit(session, image_id, det_id, action, notes=""):
    return json.loads(_apply_edit(os.fspath(session), image_id, det_id, action, notes))
