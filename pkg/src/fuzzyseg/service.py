"""HTTP job service for the interactive seed-and-rerun workflow.

A session holds one uploaded image and an append-only list of seed revisions.
Segmentation jobs run in worker threads; clients poll the result endpoint.
Within one session segment requests are serialized (409 while running); the
engine's determinism means identical inputs yield identical result bundles.
"""

from __future__ import annotations

import base64
import io
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image as PilImage

from .affinity import AffinityModel
from .autoseed import propose_seeds
from .config import PipelineConfig
from .errors import BadKError, FuzzySegError, UnsupportedFormatError
from .evalbench import grade_png_bytes, render_connectedness
from .imagecore import GrayImage, image_to_png_bytes, load_image_bytes
from .mofs import SeedSpec, segment

DEFAULT_MAX_PIXELS = 4_000_000


@dataclass
class Revision:
    index: int
    seeds_raw: dict
    config: dict
    status: str = "running"  # running | done | failed
    error: str | None = None
    result: dict | None = None


@dataclass
class Session:
    id: str
    image: GrayImage
    png: bytes
    revisions: list[Revision] = field(default_factory=list)

    @property
    def running(self) -> bool:
        return any(r.status == "running" for r in self.revisions)


def _parse_seed_points(seeds_raw: dict, width: int, height: int) -> SeedSpec:
    objects = seeds_raw.get("objects")
    if not objects:
        raise ValueError("seeds must list at least one object")
    points = {}
    for obj in objects:
        m = int(obj["id"])
        pts = [(int(p[0]), int(p[1])) for p in obj["points"]]
        points[m] = pts
    spec = SeedSpec.from_clicks(points, width, height)
    spec.validate(width, height)
    return spec


def _execute_segmentation(image: GrayImage, seeds: SeedSpec, config: PipelineConfig):
    """Runs in a worker thread; separated out so tests can intercept it."""
    model = AffinityModel.build(image, seeds, config.affinity_config())
    seg = segment(image, seeds, model)
    return seg, model.scales()


def create_app(max_pixels: int | None = None, ui_dir: str | None = None) -> FastAPI:
    if max_pixels is None:
        max_pixels = int(os.environ.get("FUZZYSEG_MAX_PIXELS", DEFAULT_MAX_PIXELS))

    app = FastAPI(title="fuzzyseg service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[os.environ.get("FUZZYSEG_UI_ORIGIN", "*")],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    lock = threading.Lock()
    app.state.sessions = sessions
    app.state.lock = lock

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.body()
        session_id = request.query_params.get("id")
        with lock:
            if session_id is not None and session_id in sessions:
                return error(409, f"session {session_id} already has an image")
        try:
            image = load_image_bytes(body)
        except UnsupportedFormatError as exc:
            return error(400, str(exc))
        if image.width * image.height > max_pixels:
            return error(413, f"image exceeds {max_pixels} pixels")
        with lock:
            if session_id is None:
                session_id = secrets.token_hex(8)
            elif session_id in sessions:
                return error(409, f"session {session_id} already has an image")
            sessions[session_id] = Session(
                id=session_id, image=image, png=image_to_png_bytes(image)
            )
        return {"id": session_id, "width": image.width, "height": image.height}

    def _get_session(session_id: str) -> Session | None:
        with lock:
            return sessions.get(session_id)

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        session = _get_session(session_id)
        if session is None:
            return error(404, "unknown session")
        with lock:
            return {
                "id": session.id,
                "width": session.image.width,
                "height": session.image.height,
                "revisions": [
                    {"index": r.index, "status": r.status} for r in session.revisions
                ],
            }

    @app.get("/sessions/{session_id}/image")
    def session_image(session_id: str):
        session = _get_session(session_id)
        if session is None:
            return error(404, "unknown session")
        return Response(content=session.png, media_type="image/png")

    def _job(session: Session, revision: Revision, seeds: SeedSpec, config: PipelineConfig):
        try:
            start = time.perf_counter()
            seg, scales = _execute_segmentation(session.image, seeds, config)
            seconds = time.perf_counter() - start
            crisp = render_connectedness(seg)
            buf = io.BytesIO()
            PilImage.fromarray(crisp, mode="RGB").save(buf, format="PNG")
            result = {
                "scales": {str(m): s for m, s in sorted(scales.items())},
                "seconds": seconds,
                "crisp_png": base64.b64encode(buf.getvalue()).decode(),
                "connectedness_png": {
                    str(m): base64.b64encode(grade_png_bytes(seg, m)).decode()
                    for m in range(1, seg.num_objects + 1)
                },
                "config": config.to_dict(),
                "seeds": revision.seeds_raw,
            }
            with lock:
                revision.result = result
                revision.status = "done"
        except Exception as exc:  # job thread: report, never raise
            with lock:
                revision.status = "failed"
                revision.error = str(exc)

    @app.post("/sessions/{session_id}/segment", status_code=202)
    def start_segment(session_id: str, payload: dict):
        session = _get_session(session_id)
        if session is None:
            return error(404, "unknown session")
        try:
            seeds = _parse_seed_points(
                payload.get("seeds", {}), session.image.width, session.image.height
            )
            config = PipelineConfig.from_dict(payload.get("config", {}))
        except (ValueError, TypeError, KeyError, FuzzySegError) as exc:
            return error(422, str(exc))
        with lock:
            if session.running:
                return error(409, "a segmentation job is already running")
            revision = Revision(
                index=len(session.revisions),
                seeds_raw=payload.get("seeds", {}),
                config=config.to_dict(),
            )
            session.revisions.append(revision)
        thread = threading.Thread(
            target=_job, args=(session, revision, seeds, config), daemon=True
        )
        thread.start()
        return {"revision": revision.index}

    @app.get("/sessions/{session_id}/result")
    def get_result(session_id: str, rev: int = -1):
        session = _get_session(session_id)
        if session is None:
            return error(404, "unknown session")
        with lock:
            if not session.revisions:
                return error(404, "no revisions yet")
            if rev == -1:
                rev = len(session.revisions) - 1
            if not 0 <= rev < len(session.revisions):
                return error(404, f"revision {rev} does not exist")
            revision = session.revisions[rev]
            if revision.status == "running":
                return JSONResponse(
                    status_code=409, content={"status": "running", "revision": rev}
                )
            if revision.status == "failed":
                return error(500, revision.error or "segmentation failed")
            return {"revision": rev, "status": "done", **revision.result}

    @app.post("/sessions/{session_id}/autoseed")
    def autoseed(session_id: str, payload: dict):
        session = _get_session(session_id)
        if session is None:
            return error(404, "unknown session")
        with lock:
            if session.running:
                return error(409, "a segmentation job is already running")
        try:
            config = PipelineConfig.from_dict(payload.get("config", {}))
            k = int(payload.get("k", 0))
            seeds, diagnostics = propose_seeds(session.image, k, config)
        except (BadKError, ValueError, TypeError, FuzzySegError) as exc:
            return error(422, str(exc))
        return {
            "seeds": {
                "objects": [
                    {"id": m, "points": [[p.x, p.y] for p in pts]}
                    for m, pts in sorted(seeds.clicks.items())
                ]
            },
            "diagnostics": diagnostics.to_json_dict(),
        }

    if ui_dir is None:
        ui_dir = os.environ.get("FUZZYSEG_UI_DIR")
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
