"""Shared test helpers: random frame generation and a live server harness."""

from __future__ import annotations

import socket
import string
import threading
import time

import pytest
import uvicorn

from pulsetel.server import SessionStore, create_app
from pulsetel.wire import (
    MAX_BATCH_SAMPLES,
    MAX_SID_CHARS,
    TelemetryFrame,
    sample_batch_frame,
    sample_frame,
    status_frame,
    vitals_frame,
)

_SID_CHARS = string.ascii_letters + string.digits + "-_."


def make_frame(rng) -> TelemetryFrame:
    """One random but wire-legal frame, driven by a numpy Generator."""
    sid_len = int(rng.integers(1, MAX_SID_CHARS + 1))
    sid = "".join(rng.choice(list(_SID_CHARS), size=sid_len))
    seq = int(rng.integers(0, 1 << 40))
    t_ms = int(rng.integers(0, 1 << 48))
    kind = rng.choice(["single", "batch", "vitals", "status"])
    if kind == "single":
        return sample_frame(sid, seq, t_ms, float(rng.normal(2.5, 1.0)))
    if kind == "batch":
        n = int(rng.integers(1, MAX_BATCH_SAMPLES + 1))
        return sample_batch_frame(
            sid, seq, t_ms, float(rng.uniform(0.1, 100.0)), rng.normal(2.5, 1.0, n)
        )
    if kind == "vitals":
        bpm = None if rng.random() < 0.25 else float(rng.uniform(1.0, 250.0))
        temp_c = float(rng.uniform(0.0, 70.0))
        return vitals_frame(
            sid,
            seq,
            t_ms,
            bpm=bpm,
            temp_c=temp_c,
            temp_f=temp_c * 9.0 / 5.0 + 32.0,
            valid=bool(rng.random() < 0.5),
            beats_used=int(rng.integers(0, 64)),
            window_s=float(rng.uniform(0.0, 120.0)),
        )
    return status_frame(
        sid,
        seq,
        t_ms,
        power_mode=str(rng.choice(["normal", "sleep", "power_down"])),
        watts=float(rng.uniform(0.01, 5.0)),
        lcd_line1="".join(rng.choice(list(_SID_CHARS + " "), size=16)),
        lcd_line2="".join(rng.choice(list(_SID_CHARS + " "), size=16)),
    )


class ServerHandle:
    """A monitor server running on background threads, on ephemeral ports."""

    def __init__(self, static_dir=None, **store_kwargs):
        self.store = SessionStore(**store_kwargs)
        app = create_app(
            self.store, ingest_host="127.0.0.1", ingest_port=0, static_dir=static_dir
        )
        self._server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + 10.0
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        self.http_port = self._server.servers[0].sockets[0].getsockname()[1]
        self.ingest_port = app.state.ingest_port
        self.base = f"http://127.0.0.1:{self.http_port}"

    def send_lines(self, lines) -> None:
        """Push raw NDJSON lines over the TCP ingest socket and disconnect."""
        with socket.create_connection(("127.0.0.1", self.ingest_port)) as sock:
            for line in lines:
                sock.sendall(line if isinstance(line, bytes) else line.encode())

    def wait_frames(self, sid: str, count: int, timeout: float = 5.0) -> None:
        """Block until the session has accepted at least `count` frames."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            sess = self.store.get(sid)
            if sess is not None and sess.frames_accepted >= count:
                return
            time.sleep(0.01)
        raise AssertionError(f"session {sid!r} never reached {count} frames")

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10.0)


@pytest.fixture
def server_factory():
    """Start servers with custom store settings; all stopped at teardown."""
    handles = []

    def start(**kwargs) -> ServerHandle:
        handle = ServerHandle(**kwargs)
        handles.append(handle)
        return handle

    yield start
    for handle in handles:
        handle.stop()


@pytest.fixture
def server(server_factory) -> ServerHandle:
    return server_factory()
