"""Session-oriented HTTP API driving DrapeSession: upload shapes, set
correspondences, start/pause/resume/cancel, stream snapshots, fetch results.

Geometry uploads are JSON bodies with the mesh text inline. Snapshot frames
are chunked: one JSON header line, then count*12 bytes of little-endian
float32 vertex triples. Control commands are queued and honored by the
runner thread at iteration boundaries, so pause/edit/resume continues the
exact deterministic trajectory.
"""

from __future__ import annotations

import io
import json
import os
import queue
import threading
import time
import uuid

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from .deform import CorrespondenceSet, DeformError
from .geometry import GeometryError, load_mesh, load_target
from .pipeline import (DrapeConfig, DrapeSession, SessionError, create_session)

STREAM_POLL_SECONDS = 0.05


class SessionRecord:
    def __init__(self, sid, source, target, config):
        self.id = sid
        self.source = source
        self.target = target
        self.config = config
        self.created = time.time()
        self.session: DrapeSession | None = None
        self.status = "idle"          # idle|ready|running|paused|done|cancelled|failed
        self.commands: queue.Queue = queue.Queue()
        self.thread: threading.Thread | None = None
        self.frames: list[bytes] = []  # already-encoded stream frames
        self.frames_done = False
        self.cond = threading.Condition()
        self.error: str | None = None

    def push_frame(self, frame, final=False):
        with self.cond:
            self.frames.append(frame)
            if final:
                self.frames_done = True
            self.cond.notify_all()


def _encode_frame(header: dict, vertices=None) -> bytes:
    payload = b""
    if vertices is not None:
        payload = np.asarray(vertices, dtype="<f4").tobytes()
        header = dict(header, count=len(vertices))
    else:
        header = dict(header, count=0)
    return json.dumps(header).encode() + b"\n" + payload


def _parse_upload(text, tmpdir, loader):
    # the geometry loaders are path-based; spool the upload to a temp file
    path = os.path.join(tmpdir, f"upload-{uuid.uuid4().hex}.obj")
    with open(path, "w") as fh:
        fh.write(text)
    try:
        return loader(path)
    finally:
        os.unlink(path)


def _parse_pairs(doc, vertex_count):
    ids, pts, kinds = [], [], []
    for pair in doc.get("pairs", []):
        sid = int(pair["source_id"])
        if sid < 0 or sid >= vertex_count:
            raise DeformError(f"correspondence references invalid vertex {sid}")
        ids.append(sid)
        pts.append([float(c) for c in pair["target"]])
        kinds.append(pair.get("kind", "soft"))
    return CorrespondenceSet(ids, pts, kinds)


def _mesh_to_text(mesh):
    buf = io.StringIO()
    for v in mesh.vertices:
        buf.write("v %.17g %.17g %.17g\n" % tuple(v))
    for face in mesh.faces:
        buf.write("f " + " ".join(str(i + 1) for i in face) + "\n")
    return buf.getvalue()


def build_app(max_upload_mb=64, checkpoint_dir=None,
              default_config: DrapeConfig | None = None) -> FastAPI:
    app = FastAPI(title="drape service")
    records: dict[str, SessionRecord] = {}
    lock = threading.Lock()
    max_bytes = max_upload_mb * 1024 * 1024
    import tempfile
    tmpdir = tempfile.mkdtemp(prefix="drape-uploads-")

    def get(sid) -> SessionRecord | None:
        with lock:
            return records.get(sid)

    def checkpoint(rec: SessionRecord):
        if checkpoint_dir and rec.session is not None:
            os.makedirs(checkpoint_dir, exist_ok=True)
            with open(os.path.join(checkpoint_dir, f"{rec.id}.ckpt"), "wb") as fh:
                fh.write(rec.session.checkpoint_bytes())

    def snapshot_frame(rec, done=False, report=None):
        s = rec.session
        last = s.loss_history[-1] if s.loss_history else None
        header = {"t": s.t,
                  "loss": (last.total if last else None),
                  "kind": (last.kind if last else None),
                  "done": done}
        if report is not None:
            header["report"] = json.loads(report.to_json())
        # ship vertices in the original target frame, same as the result
        return _encode_frame(header, s.tgt_tf.invert(s.current_vertices()))

    def runner(rec: SessionRecord):
        s = rec.session
        stride = s.config.snapshot_stride
        try:
            while s.t < s.config.iterations:
                try:
                    cmd = rec.commands.get_nowait()
                except queue.Empty:
                    cmd = None
                if cmd == "pause":
                    if s.status == "running":
                        s.pause()
                    else:
                        s.status = "paused"  # pause before the first step
                    rec.status = "paused"
                    checkpoint(rec)
                    while True:
                        nxt = rec.commands.get()
                        if nxt == "resume":
                            s.resume()
                            rec.status = "running"
                            break
                        if nxt == "cancel":
                            rec.status = "cancelled"
                            rec.push_frame(snapshot_frame(rec, done=True),
                                           final=True)
                            return
                elif cmd == "cancel":
                    rec.status = "cancelled"
                    rec.push_frame(snapshot_frame(rec, done=True), final=True)
                    return
                s.step()
                if (s.t - 1) % stride == 0 and s.t != s.config.iterations:
                    rec.push_frame(snapshot_frame(rec))
            rec.status = "done"
            _, report = s.extract_result()
            rec.push_frame(snapshot_frame(rec, done=True, report=report),
                           final=True)
            checkpoint(rec)
        except Exception as exc:  # surfaced to stream subscribers
            rec.status = "failed"
            rec.error = str(exc)
            rec.push_frame(_encode_frame({"error": rec.error, "done": True}),
                           final=True)

    # -- endpoints ----------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create(request: Request):
        body = await request.body()
        if len(body) > max_bytes:
            return JSONResponse({"error": "upload too large"}, status_code=413)
        try:
            doc = json.loads(body)
            source = _parse_upload(doc["source"], tmpdir, load_mesh)
            target = _parse_upload(doc["target"], tmpdir, load_target)
        except (GeometryError, KeyError, ValueError, TypeError) as exc:
            return JSONResponse({"error": f"bad upload: {exc}"}, status_code=400)
        config = default_config or DrapeConfig()
        if isinstance(doc.get("config"), dict):
            try:
                config = DrapeConfig.from_dict(doc["config"])
            except ValueError as exc:
                return JSONResponse({"error": str(exc)}, status_code=400)
        sid = uuid.uuid4().hex
        rec = SessionRecord(sid, source, target, config)
        with lock:
            records[sid] = rec
        return {"id": sid, "status": rec.status,
                "vertex_count": source.vertex_count}

    @app.put("/sessions/{sid}/correspondences")
    def set_correspondences(sid: str, doc: dict):
        rec = get(sid)
        if rec is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        try:
            corr = _parse_pairs(doc, rec.source.vertex_count)
        except (DeformError, KeyError, ValueError, TypeError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        if rec.status in ("idle", "ready"):
            # (re)build the session so the initial deformation reflects the
            # latest pairs; repeated calls are allowed before start
            try:
                rec.session = create_session(rec.source, rec.target, corr,
                                             rec.config)
            except (DeformError, GeometryError) as exc:
                return JSONResponse({"error": str(exc)}, status_code=422)
            rec.status = "ready"
            preview = rec.session.initial.vertices
            return {"status": rec.status, "t": rec.session.t,
                    "preview": np.asarray(preview, dtype=np.float64).tolist()}
        if rec.status == "paused":
            rec.session.update_correspondences(corr)
            return {"status": rec.status, "t": rec.session.t}
        return JSONResponse(
            {"error": f"cannot edit correspondences while {rec.status}"},
            status_code=409)

    @app.post("/sessions/{sid}/control")
    def control(sid: str, doc: dict):
        rec = get(sid)
        if rec is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        action = doc.get("action")
        if action == "start":
            if rec.status != "ready" or rec.session is None:
                return JSONResponse(
                    {"error": f"cannot start from {rec.status}"},
                    status_code=409)
            rec.status = "running"
            rec.thread = threading.Thread(target=runner, args=(rec,),
                                          daemon=True)
            rec.thread.start()
        elif action in ("pause", "resume", "cancel"):
            legal = {"pause": ("running",),
                     "resume": ("paused",),
                     "cancel": ("running", "paused", "ready")}[action]
            if rec.status not in legal:
                return JSONResponse(
                    {"error": f"cannot {action} from {rec.status}"},
                    status_code=409)
            if rec.status == "ready" and action == "cancel":
                rec.status = "cancelled"
                rec.push_frame(snapshot_frame(rec, done=True), final=True)
            elif (action == "resume"
                  and (rec.thread is None or not rec.thread.is_alive())):
                # paused session restored from a checkpoint: no runner yet
                rec.session.resume()
                rec.status = "running"
                rec.thread = threading.Thread(target=runner, args=(rec,),
                                              daemon=True)
                rec.thread.start()
            else:
                rec.commands.put(action)
                # report the settled status: wait for the runner to honor the
                # command at its next iteration boundary
                want = {"pause": "paused", "resume": "running",
                        "cancel": "cancelled"}[action]
                deadline = time.time() + 30.0
                while (rec.status not in (want, "done", "failed", "cancelled")
                       and time.time() < deadline):
                    time.sleep(0.01)
        else:
            return JSONResponse({"error": f"unknown action {action!r}"},
                                status_code=422)
        return {"status": rec.status,
                "t": rec.session.t if rec.session else 0}

    @app.get("/sessions/{sid}/stream")
    def stream(sid: str):
        rec = get(sid)
        if rec is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)

        def frames():
            i = 0
            while True:
                with rec.cond:
                    while i >= len(rec.frames) and not rec.frames_done:
                        rec.cond.wait(STREAM_POLL_SECONDS)
                    if i < len(rec.frames):
                        frame = rec.frames[i]
                        i += 1
                    elif rec.frames_done:
                        return
                    else:
                        continue
                yield frame

        return StreamingResponse(frames(), media_type="application/octet-stream")

    @app.get("/sessions/{sid}/result")
    def result(sid: str):
        rec = get(sid)
        if rec is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        if rec.status == "running":
            return JSONResponse({"error": "still running"}, status_code=409)
        if rec.session is None:
            return JSONResponse({"error": "no optimization state"},
                                status_code=409)
        mesh, report = rec.session.extract_result(allow_partial=True)
        return {"status": rec.status, "t": rec.session.t,
                "mesh": _mesh_to_text(mesh),
                "report": json.loads(report.to_json())}

    @app.get("/sessions/{sid}/status")
    def status(sid: str):
        rec = get(sid)
        if rec is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return {"status": rec.status,
                "t": rec.session.t if rec.session else 0,
                "error": rec.error}

    @app.on_event("shutdown")
    def shutdown():
        with lock:
            recs = list(records.values())
        for rec in recs:
            if rec.status == "running":
                rec.commands.put("pause")
                deadline = time.time() + 30.0
                while rec.status != "paused" and time.time() < deadline:
                    time.sleep(0.01)
            checkpoint(rec)

    def restore_checkpoints():
        if not checkpoint_dir or not os.path.isdir(checkpoint_dir):
            return
        for name in os.listdir(checkpoint_dir):
            if not name.endswith(".ckpt"):
                continue
            sid = name[:-5]
            with open(os.path.join(checkpoint_dir, name), "rb") as fh:
                session = DrapeSession.from_checkpoint_bytes(fh.read())
            rec = SessionRecord(sid, session.source, session.target,
                                session.config)
            rec.session = session
            rec.status = session.status if session.status != "idle" else "ready"
            with lock:
                records[sid] = rec

    restore_checkpoints()
    app.state.records = records
    return app


def parse_stream(chunks):
    """Decode a byte iterable of frames into (header, vertices) pairs.
    Mirrors the framing produced by the stream endpoint."""
    buf = b""
    for chunk in chunks:
        buf += chunk
        while True:
            nl = buf.find(b"\n")
            if nl < 0:
                break
            header = json.loads(buf[:nl])
            need = nl + 1 + header.get("count", 0) * 12
            if len(buf) < need:
                break
            payload = buf[nl + 1:need]
            buf = buf[need:]
            verts = np.frombuffer(payload, dtype="<f4").reshape(-1, 3)
            yield header, verts
