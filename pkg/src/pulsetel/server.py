"""Monitor server: frame ingest, retention, REST queries, and live streams.

Devices connect over plain TCP and write newline-delimited JSON frames (an
HTTP POST /ingest fallback accepts the same lines). Per session the server
keeps a bounded ring of recent waveform samples, the latest vitals plus a
short history, the latest status, and at most one pending calibration
command. Browsers read the same data over REST and a server-sent-events
stream that relays every accepted frame in arrival order; subscribers that
fall too far behind get a terminal `overflow` event and are disconnected.
"""

from __future__ import annotations

import argparse
import asyncio
import contextlib
import logging
import time
from collections import deque
from contextlib import asynccontextmanager
from pathlib import Path

import uvicorn
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .wire import (
    KIND_SAMPLE,
    KIND_STATUS,
    KIND_VITALS,
    MAX_FRAME_BYTES,
    CalibrationCommand,
    FrameDecodeError,
    TelemetryFrame,
    decode_calibration,
    decode_frame,
    encode_frame,
)

log = logging.getLogger("pulsetel.server")

DEFAULT_HTTP_PORT = 8080
DEFAULT_INGEST_PORT = 7070
DEFAULT_CAPACITY_S = 600.0
DEFAULT_NOMINAL_FS = 100.0
DEFAULT_HISTORY = 1000
DEFAULT_SUBSCRIBER_BUFFER = 512  # ~5 s of batched frames, with headroom
DEFAULT_IDLE_EXPIRY_S = 600.0

# Queued to a lagging subscriber in place of everything it missed.
OVERFLOW = object()


def _now_ms() -> int:
    return int(time.time() * 1000)


def _safe_filename(sid: str) -> str:
    return "".join(c if (c.isalnum() or c in "-_.") else f"%{ord(c):02x}" for c in sid)


class Session:
    """Everything retained for one device stream."""

    def __init__(self, sid: str, sample_capacity: int, history: int):
        self.sid = sid
        self.samples: deque = deque(maxlen=sample_capacity)  # (t_s, v)
        self.latest_vitals: TelemetryFrame | None = None
        self.vitals_history: deque = deque(maxlen=history)
        self.latest_status: TelemetryFrame | None = None
        self.pending_calibration: CalibrationCommand | None = None
        self.last_seq: dict[str, int] = {}
        self.last_seen_ms = _now_ms()
        self.frames_accepted = 0
        self.subscribers: set[asyncio.Queue] = set()
        self.log_file = None

    @property
    def latest_sample_t_s(self) -> float | None:
        return self.samples[-1][0] if self.samples else None


class SessionStore:
    """All per-session state plus ingest and fan-out logic.

    Mutations run on the server's single event loop, so no locking is
    needed; HTTP handlers see consistent snapshots between awaits.
    """

    def __init__(
        self,
        *,
        capacity_s: float = DEFAULT_CAPACITY_S,
        nominal_fs_hz: float = DEFAULT_NOMINAL_FS,
        history: int = DEFAULT_HISTORY,
        subscriber_buffer: int = DEFAULT_SUBSCRIBER_BUFFER,
        idle_expiry_s: float = DEFAULT_IDLE_EXPIRY_S,
        log_dir: str | None = None,
    ):
        self.capacity_s = capacity_s
        self.sample_capacity = max(1, int(capacity_s * nominal_fs_hz))
        self.history = history
        self.subscriber_buffer = subscriber_buffer
        self.idle_expiry_s = idle_expiry_s
        self.log_dir = Path(log_dir) if log_dir else None
        self.sessions: dict[str, Session] = {}
        self.invalid_lines = 0

    # -- sessions ------------------------------------------------------------

    def get(self, sid: str) -> Session | None:
        return self.sessions.get(sid)

    def get_or_create(self, sid: str) -> Session:
        sess = self.sessions.get(sid)
        if sess is None:
            sess = Session(sid, self.sample_capacity, self.history)
            if self.log_dir is not None:
                self.log_dir.mkdir(parents=True, exist_ok=True)
                path = self.log_dir / f"{_safe_filename(sid)}.ndjson"
                sess.log_file = open(path, "a", encoding="utf-8")
            self.sessions[sid] = sess
        return sess

    def expire_idle(self) -> list[str]:
        """Drop sessions idle past the limit (kept alive while subscribed)."""
        cutoff = _now_ms() - self.idle_expiry_s * 1000.0
        stale = [
            sid
            for sid, s in self.sessions.items()
            if s.last_seen_ms < cutoff and not s.subscribers
        ]
        for sid in stale:
            sess = self.sessions.pop(sid)
            if sess.log_file is not None:
                sess.log_file.close()
        return stale

    def close(self) -> None:
        for sess in self.sessions.values():
            if sess.log_file is not None:
                sess.log_file.close()

    # -- ingest --------------------------------------------------------------

    def ingest_line(self, line) -> bool:
        try:
            frame = decode_frame(line)
        except FrameDecodeError as exc:
            self.invalid_lines += 1
            log.debug("rejected line: %s", exc)
            return False
        return self.ingest_frame(frame)

    def ingest_frame(self, frame: TelemetryFrame) -> bool:
        sess = self.get_or_create(frame.sid)
        last = sess.last_seq.get(frame.kind)
        if last is not None and frame.seq <= last:
            return False  # duplicate or replay
        sess.last_seq[frame.kind] = frame.seq
        sess.last_seen_ms = _now_ms()
        sess.frames_accepted += 1

        if frame.kind == KIND_SAMPLE:
            self._append_samples(sess, frame)
        elif frame.kind == KIND_VITALS:
            sess.latest_vitals = frame
            sess.vitals_history.append(frame)
        elif frame.kind == KIND_STATUS:
            sess.latest_status = frame

        line = encode_frame(frame)
        if sess.log_file is not None:
            sess.log_file.write(line)
        self._fan_out(sess, line)
        return True

    @staticmethod
    def _append_samples(sess: Session, frame: TelemetryFrame) -> None:
        base_s = frame.t_ms / 1000.0
        if "vs" in frame.payload:
            dt_s = frame.payload["dt_ms"] / 1000.0
            pairs = [
                (base_s + i * dt_s, v) for i, v in enumerate(frame.payload["vs"])
            ]
        else:
            pairs = [(base_s, frame.payload["v"])]
        last_t = sess.samples[-1][0] if sess.samples else None
        for t, v in pairs:
            if last_t is None or t > last_t:
                sess.samples.append((t, v))
                last_t = t

    def _fan_out(self, sess: Session, line: str) -> None:
        dead = []
        for q in sess.subscribers:
            try:
                q.put_nowait(line)
            except asyncio.QueueFull:
                while not q.empty():
                    q.get_nowait()
                q.put_nowait(OVERFLOW)
                dead.append(q)
        for q in dead:
            sess.subscribers.discard(q)

    # -- live stream ----------------------------------------------------------

    def subscribe(self, sid: str) -> asyncio.Queue:
        sess = self.get_or_create(sid)  # session may appear later; hold a slot
        q: asyncio.Queue = asyncio.Queue(maxsize=self.subscriber_buffer)
        sess.subscribers.add(q)
        return q

    def unsubscribe(self, sid: str, q: asyncio.Queue) -> None:
        sess = self.sessions.get(sid)
        if sess is not None:
            sess.subscribers.discard(q)


def _session_row(sess: Session) -> dict:
    bpm = valid = None
    if sess.latest_vitals is not None:
        bpm = sess.latest_vitals.payload["bpm"]
        valid = sess.latest_vitals.payload["valid"]
    power_mode = (
        sess.latest_status.payload["power_mode"]
        if sess.latest_status is not None
        else None
    )
    return {
        "sid": sess.sid,
        "last_seen_ms": sess.last_seen_ms,
        "frames": sess.frames_accepted,
        "latest_bpm": bpm,
        "valid": valid,
        "power_mode": power_mode,
        "has_pending_calibration": sess.pending_calibration is not None,
    }


def _vitals_body(sess: Session) -> dict:
    if sess.latest_vitals is None:
        # Session exists (samples/status only): report an empty reading.
        return {
            "sid": sess.sid,
            "t_ms": None,
            "bpm": None,
            "temp_c": None,
            "temp_f": None,
            "valid": False,
            "beats_used": 0,
            "window_s": 0.0,
        }
    frame = sess.latest_vitals
    return {"sid": sess.sid, "t_ms": frame.t_ms, **frame.payload}


async def _handle_ingest_conn(store: SessionStore, reader, writer) -> None:
    peer = writer.get_extra_info("peername")
    log.debug("ingest connection from %s", peer)
    try:
        while True:
            try:
                line = await reader.readline()
            except (ValueError, asyncio.LimitOverrunError):
                store.invalid_lines += 1  # oversized line; cannot resync safely
                break
            if not line:
                break
            if line.strip():
                store.ingest_line(line)
    except (ConnectionResetError, BrokenPipeError):
        pass
    finally:
        writer.close()
        with contextlib.suppress(Exception):
            await writer.wait_closed()


def create_app(
    store: SessionStore,
    *,
    ingest_host: str = "0.0.0.0",
    ingest_port: int = DEFAULT_INGEST_PORT,
    static_dir: str | None = None,
) -> FastAPI:
    """Build the HTTP app; the TCP ingest listener rides its lifespan."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        ingest = await asyncio.start_server(
            lambda r, w: _handle_ingest_conn(store, r, w),
            ingest_host,
            ingest_port,
            limit=MAX_FRAME_BYTES,
        )
        app.state.ingest_server = ingest
        app.state.ingest_port = ingest.sockets[0].getsockname()[1]

        async def expire_loop():
            interval = max(1.0, min(30.0, store.idle_expiry_s / 4.0))
            while True:
                await asyncio.sleep(interval)
                for sid in store.expire_idle():
                    log.info("expired idle session %s", sid)

        expiry_task = asyncio.create_task(expire_loop())
        try:
            yield
        finally:
            expiry_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await expiry_task
            ingest.close()
            await ingest.wait_closed()
            store.close()

    app = FastAPI(title="pulsetel monitor", lifespan=lifespan)
    app.state.store = store

    @app.get("/healthz")
    async def healthz():
        return {"ok": True, "sessions": len(store.sessions)}

    @app.get("/api/sessions")
    async def list_sessions():
        rows = sorted(store.sessions.values(), key=lambda s: s.sid)
        return [_session_row(s) for s in rows]

    @app.get("/api/sessions/{sid}/vitals/latest")
    async def vitals_latest(sid: str):
        sess = store.get(sid)
        if sess is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return _vitals_body(sess)

    @app.get("/api/sessions/{sid}/vitals/history")
    async def vitals_history(sid: str, n: int = Query(default=100, ge=1, le=10000)):
        sess = store.get(sid)
        if sess is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        frames = list(sess.vitals_history)[-n:]
        return {
            "sid": sid,
            "readings": [{"t_ms": f.t_ms, **f.payload} for f in frames],
        }

    @app.get("/api/sessions/{sid}/waveform")
    async def waveform(
        sid: str,
        response: Response,
        window_s: float = Query(default=10.0, ge=0.0),
    ):
        sess = store.get(sid)
        if sess is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        eff_window = window_s
        if window_s > store.capacity_s:
            eff_window = store.capacity_s
            response.headers["X-Window-Clamped-S"] = repr(eff_window)
        now = sess.latest_sample_t_s
        if now is None or eff_window == 0.0:
            return {"sid": sid, "window_s": eff_window, "samples": []}
        horizon = now - eff_window
        # Half-open window (horizon, now]: a w-second query at rate fs
        # returns at most w*fs samples.
        samples = [[t, v] for t, v in sess.samples if t > horizon]
        return {"sid": sid, "window_s": eff_window, "samples": samples}

    @app.get("/api/sessions/{sid}/stream")
    async def stream(sid: str):
        q = store.subscribe(sid)

        async def gen():
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        item = await asyncio.wait_for(q.get(), timeout=15.0)
                    except asyncio.TimeoutError:
                        yield ": keep-alive\n\n"
                        continue
                    if item is OVERFLOW:
                        yield "event: overflow\ndata: {}\n\n"
                        return
                    yield f"event: frame\ndata: {item.rstrip()}\n\n"
            finally:
                store.unsubscribe(sid, q)

        return StreamingResponse(
            gen(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.post("/api/sessions/{sid}/calibration")
    async def set_calibration(sid: str, request: Request):
        body = await request.body()
        try:
            cmd = decode_calibration(body)
        except FrameDecodeError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        cmd = CalibrationCommand(
            threshold_v=cmd.threshold_v,
            refractory_s=cmd.refractory_s,
            issued_at_ms=_now_ms(),
        )
        sess = store.get_or_create(sid)
        sess.pending_calibration = cmd  # newer replaces older
        return {"accepted": True, "issued_at_ms": cmd.issued_at_ms}

    @app.get("/api/sessions/{sid}/calibration")
    async def get_calibration(sid: str):
        sess = store.get(sid)
        if sess is None or sess.pending_calibration is None:
            return Response(status_code=204)
        cmd = sess.pending_calibration
        sess.pending_calibration = None  # consumed exactly once
        return {
            "threshold_v": cmd.threshold_v,
            "refractory_s": cmd.refractory_s,
            "issued_at_ms": cmd.issued_at_ms,
        }

    @app.post("/ingest")
    async def ingest_http(request: Request):
        body = await request.body()
        accepted = rejected = 0
        for raw in body.split(b"\n"):
            if not raw.strip():
                continue
            if store.ingest_line(raw):
                accepted += 1
            else:
                rejected += 1
        return {"accepted": accepted, "rejected": rejected}

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/")
        async def index():
            return PlainTextResponse(
                "pulsetel monitor server — no dashboard bundle installed\n"
            )

    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="monitor-server",
        description="Ingest device telemetry and serve it over REST/SSE.",
    )
    parser.add_argument("--host", default="0.0.0.0", help="HTTP bind address")
    parser.add_argument("--port", type=int, default=DEFAULT_HTTP_PORT)
    parser.add_argument("--ingest-host", default="0.0.0.0", help="TCP ingest bind")
    parser.add_argument("--ingest-port", type=int, default=DEFAULT_INGEST_PORT)
    parser.add_argument(
        "--capacity-s",
        type=float,
        default=DEFAULT_CAPACITY_S,
        help="seconds of waveform retained per session",
    )
    parser.add_argument(
        "--nominal-fs",
        type=float,
        default=DEFAULT_NOMINAL_FS,
        help="sample rate used to size the waveform ring",
    )
    parser.add_argument(
        "--idle-expiry-s",
        type=float,
        default=DEFAULT_IDLE_EXPIRY_S,
        help="drop sessions idle longer than this",
    )
    parser.add_argument("--log-dir", help="append accepted frames to NDJSON files here")
    parser.add_argument(
        "--static-dir",
        default="frontend/dist",
        help="dashboard bundle served at / when the directory exists",
    )
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    store = SessionStore(
        capacity_s=args.capacity_s,
        nominal_fs_hz=args.nominal_fs,
        idle_expiry_s=args.idle_expiry_s,
        log_dir=args.log_dir,
    )
    app = create_app(
        store,
        ingest_host=args.ingest_host,
        ingest_port=args.ingest_port,
        static_dir=args.static_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
