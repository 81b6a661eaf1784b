"""Newline-delimited JSON telemetry codec.

One frame per line: a flat JSON object with a fixed header (sid, seq, t_ms,
kind) followed by the kind-specific fields, serialized with no whitespace and
a fixed key order so equal frames encode to identical bytes. Decoding is
strict about the fields it knows (types, signs, finiteness — booleans are
never accepted where numbers belong) and silently ignores fields it does
not, so the wire can grow without breaking old readers. Hostile bytes must
never crash the decoder; every rejection raises FrameDecodeError naming the
offense.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ParameterError

KIND_SAMPLE = "sample"
KIND_VITALS = "vitals"
KIND_STATUS = "status"

MAX_BATCH_SAMPLES = 50
MAX_FRAME_BYTES = 8192
MAX_SID_CHARS = 64
LCD_WIDTH = 16

CALIBRATION_MIN_V = 0.0
CALIBRATION_MAX_V = 5.0


class FrameEncodeError(ValueError):
    """Frame violates the wire contract and cannot be serialized."""


class FrameDecodeError(ValueError):
    """Line is not a valid telemetry frame."""


@dataclass(frozen=True)
class TelemetryFrame:
    """One wire frame; `payload` holds only the kind-specific fields."""

    sid: str
    seq: int
    t_ms: int
    kind: str
    payload: dict


def sample_frame(sid: str, seq: int, t_ms: int, v: float) -> TelemetryFrame:
    """Single conditioned-signal sample (volts after the ADC)."""
    return TelemetryFrame(str(sid), int(seq), int(t_ms), KIND_SAMPLE, {"v": float(v)})


def sample_batch_frame(sid, seq, t_ms, dt_ms, vs) -> TelemetryFrame:
    """Batch of consecutive samples; sample i is at t_ms + i * dt_ms."""
    vals = [float(x) for x in vs]
    if not 1 <= len(vals) <= MAX_BATCH_SAMPLES:
        raise ParameterError(
            f"batch must carry 1..{MAX_BATCH_SAMPLES} samples, got {len(vals)}"
        )
    return TelemetryFrame(
        str(sid),
        int(seq),
        int(t_ms),
        KIND_SAMPLE,
        {"dt_ms": float(dt_ms), "vs": vals},
    )


def vitals_frame(
    sid, seq, t_ms, *, bpm, temp_c, temp_f, valid, beats_used, window_s
) -> TelemetryFrame:
    return TelemetryFrame(
        str(sid),
        int(seq),
        int(t_ms),
        KIND_VITALS,
        {
            "bpm": None if bpm is None else float(bpm),
            "temp_c": float(temp_c),
            "temp_f": float(temp_f),
            "valid": bool(valid),
            "beats_used": int(beats_used),
            "window_s": float(window_s),
        },
    )


def status_frame(
    sid, seq, t_ms, *, power_mode, watts, lcd_line1, lcd_line2
) -> TelemetryFrame:
    return TelemetryFrame(
        str(sid),
        int(seq),
        int(t_ms),
        KIND_STATUS,
        {
            "power_mode": str(power_mode),
            "watts": float(watts),
            "lcd_line1": str(lcd_line1),
            "lcd_line2": str(lcd_line2),
        },
    )


def _need(obj: dict, key: str, err):
    if key not in obj:
        raise err(f"missing field {key!r}")
    return obj[key]


def _as_int(val, key: str, err, minimum: int = 0) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise err(f"field {key!r} must be an integer, got {type(val).__name__}")
    if val < minimum:
        raise err(f"field {key!r} must be >= {minimum}, got {val}")
    return val


def _as_num(val, key: str, err, minimum=None, positive=False) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise err(f"field {key!r} must be a number, got {type(val).__name__}")
    out = float(val)
    if not math.isfinite(out):
        raise err(f"field {key!r} must be finite, got {out!r}")
    if positive and out <= 0:
        raise err(f"field {key!r} must be > 0, got {out}")
    if minimum is not None and out < minimum:
        raise err(f"field {key!r} must be >= {minimum}, got {out}")
    return out


def _as_str(val, key: str, err, max_len: int, nonempty=False) -> str:
    if not isinstance(val, str):
        raise err(f"field {key!r} must be a string, got {type(val).__name__}")
    if nonempty and not val:
        raise err(f"field {key!r} must be non-empty")
    if len(val) > max_len:
        raise err(f"field {key!r} exceeds {max_len} characters")
    return val


def _as_bool(val, key: str, err) -> bool:
    if not isinstance(val, bool):
        raise err(f"field {key!r} must be a boolean, got {type(val).__name__}")
    return val


def _sample_fields(src: dict, err) -> list:
    if "vs" in src:
        dt_ms = _as_num(_need(src, "dt_ms", err), "dt_ms", err, positive=True)
        vs = _need(src, "vs", err)
        if not isinstance(vs, list) or not 1 <= len(vs) <= MAX_BATCH_SAMPLES:
            raise err(f"field 'vs' must be a list of 1..{MAX_BATCH_SAMPLES} samples")
        return [("dt_ms", dt_ms), ("vs", [_as_num(x, "vs", err) for x in vs])]
    return [("v", _as_num(_need(src, "v", err), "v", err))]


def _vitals_fields(src: dict, err) -> list:
    bpm = _need(src, "bpm", err)
    if bpm is not None:
        bpm = _as_num(bpm, "bpm", err, positive=True)
    return [
        ("bpm", bpm),
        ("temp_c", _as_num(_need(src, "temp_c", err), "temp_c", err)),
        ("temp_f", _as_num(_need(src, "temp_f", err), "temp_f", err)),
        ("valid", _as_bool(_need(src, "valid", err), "valid", err)),
        ("beats_used", _as_int(_need(src, "beats_used", err), "beats_used", err)),
        ("window_s", _as_num(_need(src, "window_s", err), "window_s", err, minimum=0.0)),
    ]


def _status_fields(src: dict, err) -> list:
    return [
        (
            "power_mode",
            _as_str(_need(src, "power_mode", err), "power_mode", err, 32, nonempty=True),
        ),
        ("watts", _as_num(_need(src, "watts", err), "watts", err, positive=True)),
        ("lcd_line1", _as_str(_need(src, "lcd_line1", err), "lcd_line1", err, LCD_WIDTH)),
        ("lcd_line2", _as_str(_need(src, "lcd_line2", err), "lcd_line2", err, LCD_WIDTH)),
    ]


_FIELD_FNS = {
    KIND_SAMPLE: _sample_fields,
    KIND_VITALS: _vitals_fields,
    KIND_STATUS: _status_fields,
}


def encode_frame(frame: TelemetryFrame) -> str:
    """Serialize one frame to its canonical newline-terminated line."""
    err = FrameEncodeError
    obj = {
        "sid": _as_str(frame.sid, "sid", err, MAX_SID_CHARS, nonempty=True),
        "seq": _as_int(frame.seq, "seq", err),
        "t_ms": _as_int(frame.t_ms, "t_ms", err),
    }
    if frame.kind not in _FIELD_FNS:
        raise err(f"unknown frame kind {frame.kind!r}")
    obj["kind"] = frame.kind
    fields = _FIELD_FNS[frame.kind](frame.payload, err)
    extra = set(frame.payload) - {k for k, _ in fields}
    if extra:
        raise err(f"unexpected payload fields: {sorted(extra)}")
    obj.update(fields)
    try:
        return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"
    except (TypeError, ValueError) as exc:
        raise err(f"unserializable frame: {exc}") from None


def decode_frame(line) -> TelemetryFrame:
    """Parse one line (str or bytes) into a frame, or raise FrameDecodeError."""
    err = FrameDecodeError
    if isinstance(line, (bytes, bytearray)):
        try:
            line = bytes(line).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise err(f"frame is not valid UTF-8: {exc}") from None
    if len(line) > MAX_FRAME_BYTES:
        raise err(f"frame exceeds {MAX_FRAME_BYTES} bytes")
    text = line.strip()
    if not text:
        raise err("empty frame")
    try:
        obj = json.loads(text)
    except (ValueError, RecursionError) as exc:
        raise err(f"frame is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise err("frame must be a JSON object")
    sid = _as_str(_need(obj, "sid", err), "sid", err, MAX_SID_CHARS, nonempty=True)
    seq = _as_int(_need(obj, "seq", err), "seq", err)
    t_ms = _as_int(_need(obj, "t_ms", err), "t_ms", err)
    kind = _need(obj, "kind", err)
    if kind not in _FIELD_FNS:
        raise err(f"unknown frame kind {kind!r}")
    payload = dict(_FIELD_FNS[kind](obj, err))
    return TelemetryFrame(sid=sid, seq=seq, t_ms=t_ms, kind=kind, payload=payload)


# Refractory overrides must still permit the fastest measurable rate.
CALIBRATION_MAX_REFRACTORY_S = 60.0 / 140.0


@dataclass(frozen=True)
class CalibrationCommand:
    """Operator override for the beat detector.

    threshold_v pins the detection level (None returns the detector to
    auto-calibration); refractory_s optionally replaces the inter-beat guard;
    issued_at_ms is stamped by the server when the command is accepted. At
    most one command is pending per session — newer replaces older.
    """

    threshold_v: float | None = None
    refractory_s: float | None = None
    issued_at_ms: int = 0

    def __post_init__(self):
        val = self.threshold_v
        if val is not None:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ParameterError("threshold_v must be a number or None")
            val = float(val)
            if not math.isfinite(val) or not (
                CALIBRATION_MIN_V <= val <= CALIBRATION_MAX_V
            ):
                raise ParameterError(
                    f"threshold_v must be in [{CALIBRATION_MIN_V}, "
                    f"{CALIBRATION_MAX_V}] V, got {self.threshold_v!r}"
                )
            object.__setattr__(self, "threshold_v", val)
        ref = self.refractory_s
        if ref is not None:
            if isinstance(ref, bool) or not isinstance(ref, (int, float)):
                raise ParameterError("refractory_s must be a number or None")
            ref = float(ref)
            if not math.isfinite(ref) or not 0 < ref < CALIBRATION_MAX_REFRACTORY_S:
                raise ParameterError(
                    f"refractory_s must be in (0, {CALIBRATION_MAX_REFRACTORY_S:.3f}), "
                    f"got {self.refractory_s!r}"
                )
            object.__setattr__(self, "refractory_s", ref)
        if isinstance(self.issued_at_ms, bool) or not isinstance(self.issued_at_ms, int):
            raise ParameterError("issued_at_ms must be an integer")
        if self.issued_at_ms < 0:
            raise ParameterError("issued_at_ms must be >= 0")


def encode_calibration(cmd: CalibrationCommand) -> str:
    obj = {
        "threshold_v": cmd.threshold_v,
        "refractory_s": cmd.refractory_s,
        "issued_at_ms": cmd.issued_at_ms,
    }
    return json.dumps(obj, separators=(",", ":")) + "\n"


def decode_calibration(data) -> CalibrationCommand:
    """Parse a calibration body (str, bytes, or parsed dict)."""
    err = FrameDecodeError
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise err(f"calibration body is not valid UTF-8: {exc}") from None
    if isinstance(data, str):
        if len(data) > MAX_FRAME_BYTES:
            raise err(f"calibration body exceeds {MAX_FRAME_BYTES} bytes")
        try:
            data = json.loads(data)
        except (ValueError, RecursionError) as exc:
            raise err(f"calibration body is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise err("calibration body must be a JSON object")
    threshold = _need(data, "threshold_v", err)
    if threshold is not None:
        threshold = _as_num(threshold, "threshold_v", err, minimum=CALIBRATION_MIN_V)
        if threshold > CALIBRATION_MAX_V:
            raise err(
                f"field 'threshold_v' must be <= {CALIBRATION_MAX_V}, got {threshold}"
            )
    refractory = data.get("refractory_s")
    if refractory is not None:
        refractory = _as_num(refractory, "refractory_s", err, positive=True)
        if refractory >= CALIBRATION_MAX_REFRACTORY_S:
            raise err(
                f"field 'refractory_s' must be < {CALIBRATION_MAX_REFRACTORY_S:.3f}, "
                f"got {refractory}"
            )
    issued = data.get("issued_at_ms", 0)
    issued = _as_int(issued, "issued_at_ms", err)
    return CalibrationCommand(
        threshold_v=threshold, refractory_s=refractory, issued_at_ms=issued
    )
