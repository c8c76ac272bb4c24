"""Session-oriented HTTP backend for the labeling frontend.

Serves frame pairs picked for view orthogonality, accepts per-object 2D
clicks for both views, triangulates them in the base frame, returns
backprojections plus residuals for validation, and persists committed
labels atomically through the dataset label store (protocol v1, JSON).

One object is labeled at a time; the request carries the category and
keypoint-type order explicitly. Synthetic pose-only sequences are served
rendered placeholder frames (ground truth stays hidden).
"""

from __future__ import annotations

import io
import logging
import threading
import uuid
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse, Response
from pydantic import BaseModel

from kp3d.config import Config
from kp3d.dataset import (
    ObjectInstance,
    SequenceDataset,
    load_sequence,
    optical_axis,
    propagate_labels,
    rank_partners,
    save_labels,
    select_label_views,
)
from kp3d.errors import DegenerateGeometry
from kp3d.geometry import ProjectionMatrix, project
from kp3d.targets import CategorySpec

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


class OpenSessionRequest(BaseModel):
    sequence_id: str


class SwapRequest(BaseModel):
    slot: str  # "a" | "b"


class ClicksRequest(BaseModel):
    category: dict
    click_types: list[int]
    clicks_a: list[list[float]]
    clicks_b: list[list[float]]


@dataclass
class LabelSession:
    session_id: str
    sequence_id: str
    seq: SequenceDataset
    frame_a: int
    frame_b: int
    committed: list[ObjectInstance]
    pending: object | None = None  # PropagationResult awaiting commit
    lock: threading.Lock = dataclass_field(default_factory=threading.Lock)

    def pair_quality(self) -> float:
        za = optical_axis(self.seq.frames[self.frame_a].left_pose)
        zb = optical_axis(self.seq.frames[self.frame_b].left_pose)
        return abs(float(za @ zb))


def _frame_payload(seq: SequenceDataset, index: int) -> dict:
    frame = seq.frames[index]
    return {
        "index": index,
        "timestamp": frame.timestamp,
        "image_url": f"frames/{index}/image",
        "width": seq.rig.left.width,
        "height": seq.rig.left.height,
    }


def _session_payload(session: LabelSession) -> dict:
    return {
        "protocol": PROTOCOL_VERSION,
        "session_id": session.session_id,
        "sequence_id": session.sequence_id,
        "frame_count": len(session.seq.frames),
        "frame_a": _frame_payload(session.seq, session.frame_a),
        "frame_b": _frame_payload(session.seq, session.frame_b),
        "pair_quality": session.pair_quality(),
        "committed_objects": len(session.committed),
        "pending": session.pending is not None,
    }


def _placeholder_png(seq: SequenceDataset, index: int, camera: str) -> bytes:
    """Neutral gray frame with a grid and frame id; no scene content."""
    from PIL import Image, ImageDraw

    w, h = seq.rig.left.width, seq.rig.left.height
    img = Image.new("RGB", (w, h), (72, 72, 76))
    draw = ImageDraw.Draw(img)
    for x in range(0, w, 80):
        draw.line([(x, 0), (x, h)], fill=(86, 86, 90))
    for y in range(0, h, 80):
        draw.line([(0, y), (w, y)], fill=(86, 86, 90))
    draw.text((16, 16), f"{seq.sequence_id} frame {index} ({camera})", fill=(200, 200, 200))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(data_dir, config: Config | None = None) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    data_dir = Path(data_dir)
    config = config or Config()
    app = FastAPI(title="kp3d label service")
    # local tool; the browser frontend is served from a different origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, LabelSession] = {}
    sessions_lock = threading.Lock()
    sequence_locks: dict[str, threading.Lock] = {}

    def sequence_dir(sequence_id: str) -> Path:
        path = data_dir / sequence_id
        if not (path / "poses.txt").exists():
            raise HTTPException(status_code=404, detail=f"unknown sequence {sequence_id!r}")
        return path

    def get_session(session_id: str) -> LabelSession:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    @app.get("/api/version")
    def version() -> dict:
        return {"protocol": PROTOCOL_VERSION}

    @app.get("/sequences")
    def list_sequences() -> dict:
        out = []
        for path in sorted(data_dir.iterdir()):
            if not (path / "poses.txt").exists():
                continue
            try:
                seq = load_sequence(path)
            except (ValueError, OSError) as e:
                logger.warning("skipping %s: %s", path.name, e)
                continue
            out.append(
                {
                    "sequence_id": seq.sequence_id,
                    "frames": len(seq.frames),
                    "labeled_objects": len(seq.labels),
                    "split": seq.split,
                }
            )
        return {"protocol": PROTOCOL_VERSION, "sequences": out}

    @app.post("/sessions")
    def open_session(request: OpenSessionRequest) -> dict:
        path = sequence_dir(request.sequence_id)
        seq = load_sequence(path)
        try:
            frame_a, frame_b = select_label_views(seq)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        session = LabelSession(
            session_id=uuid.uuid4().hex,
            sequence_id=request.sequence_id,
            seq=seq,
            frame_a=frame_a,
            frame_b=frame_b,
            committed=list(seq.labels),
        )
        with sessions_lock:
            sessions[session.session_id] = session
            sequence_locks.setdefault(request.sequence_id, threading.Lock())
        return _session_payload(session)

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str) -> dict:
        return _session_payload(get_session(session_id))

    @app.post("/sessions/{session_id}/swap")
    def swap_frame(session_id: str, request: SwapRequest) -> dict:
        session = get_session(session_id)
        if request.slot not in ("a", "b"):
            raise HTTPException(status_code=422, detail="slot must be 'a' or 'b'")
        with session.lock:
            fixed = session.frame_b if request.slot == "a" else session.frame_a
            moving = session.frame_a if request.slot == "a" else session.frame_b
            order = [i for i in rank_partners(session.seq, fixed) if i != fixed]
            try:
                pos = order.index(moving)
                nxt = pos + 1
            except ValueError:
                nxt = 0
            wrapped = nxt >= len(order)
            if wrapped:
                logger.warning("session %s slot %s exhausted; wrapping", session_id, request.slot)
                nxt = 0
            if request.slot == "a":
                session.frame_a = order[nxt]
            else:
                session.frame_b = order[nxt]
        payload = _session_payload(session)
        payload["wrapped"] = wrapped
        return payload

    @app.post("/sessions/{session_id}/clicks")
    def submit_clicks(session_id: str, request: ClicksRequest) -> dict:
        session = get_session(session_id)
        try:
            category = CategorySpec.from_dict(request.category)
        except (KeyError, ValueError) as e:
            raise HTTPException(status_code=422, detail=f"bad category: {e}") from e
        with session.lock:
            try:
                result = propagate_labels(
                    session.seq,
                    session.frame_a,
                    session.frame_b,
                    request.clicks_a,
                    request.clicks_b,
                    category,
                    request.click_types,
                )
            except DegenerateGeometry as e:
                raise HTTPException(status_code=409, detail=str(e)) from e
            except ValueError as e:
                raise HTTPException(status_code=422, detail=str(e)) from e
            session.pending = result
        points = [p for _, p in result.instance.all_keypoints()]
        return {
            "points_3d": [[float(v) for v in p] for p in points],
            "center_3d": [float(v) for v in result.instance.center_3d],
            "residuals_a": result.residuals_a,
            "residuals_b": result.residuals_b,
        }

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str) -> dict:
        session = get_session(session_id)
        with session.lock:
            if session.pending is None:
                raise HTTPException(status_code=409, detail="no pending object to commit")
            instance = session.pending.instance
            with sessions_lock:
                seq_lock = sequence_locks[session.sequence_id]
            with seq_lock:
                session.committed.append(instance)
                save_labels(
                    sequence_dir(session.sequence_id) / "labels.json", session.committed
                )
            session.pending = None
        return {"committed_objects": len(session.committed)}

    @app.get("/sessions/{session_id}/backproject")
    def backproject(session_id: str, frame: int) -> dict:
        session = get_session(session_id)
        seq = session.seq
        if not 0 <= frame < len(seq.frames):
            raise HTTPException(status_code=422, detail=f"frame {frame} out of range")
        P = ProjectionMatrix.from_camera(seq.rig.left, seq.frames[frame].left_pose)

        def project_object(instance: ObjectInstance, pending: bool) -> dict:
            keypoints = []
            for t, X in instance.all_keypoints():
                uv = project(P, X)
                visible = uv is not None and seq.rig.left.contains(uv)
                keypoints.append(
                    {
                        "type": int(t),
                        "type_name": instance.category.keypoint_types[t],
                        "position": [float(uv[0]), float(uv[1])] if visible else None,
                        "visible": bool(visible),
                    }
                )
            center_uv = project(P, instance.center_3d)
            center_visible = center_uv is not None and seq.rig.left.contains(center_uv)
            return {
                "category": instance.category.name,
                "pending": pending,
                "keypoints": keypoints,
                "center": {
                    "position": [float(center_uv[0]), float(center_uv[1])]
                    if center_visible
                    else None,
                    "visible": bool(center_visible),
                },
            }

        objects = [project_object(inst, False) for inst in session.committed]
        if session.pending is not None:
            objects.append(project_object(session.pending.instance, True))
        return {"frame": frame, "objects": objects}

    @app.get("/sessions/{session_id}/frames/{frame}/image")
    def frame_image(session_id: str, frame: int, camera: str = "left"):
        session = get_session(session_id)
        seq = session.seq
        if not 0 <= frame < len(seq.frames):
            raise HTTPException(status_code=422, detail=f"frame {frame} out of range")
        if camera not in ("left", "right"):
            raise HTTPException(status_code=422, detail="camera must be 'left' or 'right'")
        ref = seq.frames[frame].left_image if camera == "left" else seq.frames[frame].right_image
        if ref is not None:
            root = sequence_dir(session.sequence_id).resolve()
            path = (root / ref).resolve()
            if not path.is_relative_to(root):
                raise HTTPException(status_code=422, detail=f"image ref escapes the sequence: {ref}")
            if not path.exists():
                raise HTTPException(status_code=404, detail=f"missing image {ref}")
            suffix = path.suffix.lstrip(".").lower() or "png"
            media = "image/jpeg" if suffix in ("jpg", "jpeg") else f"image/{suffix}"
            return Response(content=path.read_bytes(), media_type=media)
        return Response(
            content=_placeholder_png(seq, frame, camera), media_type="image/png"
        )

    @app.exception_handler(Exception)
    async def on_error(request, exc):
        logger.exception("unhandled error: %s", exc)
        return PlainTextResponse(str(exc), status_code=500)

    return app
