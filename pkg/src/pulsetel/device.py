"""Simulated wearable monitor: sensor front end to LCD and network uplink.

The agent runs the whole signal path of the instrument in software — optical
pulse source, two-stage amplifier/low-pass chain, ADC, beat detection, and
temperature conversion — and behaves like the embedded firmware: it acquires
in fixed chunks, refreshes a 16x2 character LCD once per second, streams
frames to a monitor server over TCP, and polls the server for operator
calibration overrides. Power modes mirror the hardware's sleep states;
acquisition only runs in normal mode.
"""

from __future__ import annotations

import argparse
import json
import queue
import socket
import threading
import time
from dataclasses import dataclass, replace

import httpx
import numpy as np

from .analog import (
    AdcConfig,
    ChainConfig,
    ChainProcessor,
    code_to_volts,
    cutoff_frequency,
    max_measurable_bpm,
    quantize,
)
from .errors import ParameterError
from .simulate import LM35_V_PER_C, HeartProfile, NoiseModel, PpgSource, TempProfile, lm35_voltage
from .vitals import BeatDetector, DetectorConfig, VitalsEngine, VitalsReading
from .wire import (
    KIND_SAMPLE,
    CalibrationCommand,
    decode_calibration,
    encode_frame,
    sample_batch_frame,
    status_frame,
    vitals_frame,
)

LCD_COLS = 16

POWER_NORMAL = "normal"
POWER_SLEEP = "sleep"
POWER_DOWN = "power_down"
POWER_DEEP_DOWN = "deep_power_down"

# Measured supply draw per mode, watts. Only normal mode acquires.
POWER_WATTS = {
    POWER_NORMAL: 0.70,
    POWER_SLEEP: 0.64,
    POWER_DOWN: 0.49,
    POWER_DEEP_DOWN: 0.29,
}


def render_lcd(bpm, temp_f: float, valid: bool, blink_on: bool) -> tuple[str, str]:
    """Exact 16-character lines shown on the two-row display.

    The heart-rate row shows dashes until a full reading exists. The
    temperature row's final-but-one cell carries a flashing marker while the
    reading is valid; `blink_on` is the current phase of that flash.
    """
    hr = "---" if bpm is None else str(round(bpm))
    line1 = ("HR:" + f"{hr:>4}" + " bpm").ljust(LCD_COLS)
    marker = "*" if (valid and blink_on) else " "
    line2 = f"T:{temp_f:5.1f}F".ljust(14)[:14] + marker + " "
    return line1, line2


@dataclass(frozen=True)
class DeviceConfig:
    """Everything the simulated unit needs: subject, sensor, uplink, pacing."""

    sid: str = "dev-001"
    bpm: float = 72.0
    jitter_pct: float = 0.0
    temp_c: float = 37.0
    drift_c_per_min: float = 0.0
    noise_sigma_v: float = 0.0
    motion_amp_v: float = 0.0
    motion_freq_hz: float = 8.0
    seed: int = 0
    fs_hz: float = 100.0
    chunk_samples: int = 50
    lcd_period_s: float = 1.0
    server_host: str = "127.0.0.1"
    server_port: int = 7070
    http_base: str | None = None
    pace_real_time: bool = True
    threshold_v: float | None = None
    power_mode: str = POWER_NORMAL
    calibration_poll_s: float = 1.0
    print_lcd: bool = False

    def __post_init__(self):
        if not self.sid:
            raise ParameterError("sid must be non-empty")
        if not 1 <= self.chunk_samples <= 50:
            raise ParameterError(
                f"chunk_samples must be in [1, 50], got {self.chunk_samples}"
            )
        if not self.lcd_period_s > 0:
            raise ParameterError(f"lcd_period_s must be > 0, got {self.lcd_period_s}")
        if not self.fs_hz > 0:
            raise ParameterError(f"fs_hz must be > 0, got {self.fs_hz}")
        if self.power_mode not in POWER_WATTS:
            raise ParameterError(
                f"power_mode must be one of {sorted(POWER_WATTS)}, got {self.power_mode!r}"
            )


def load_config(path) -> DeviceConfig:
    """Read a DeviceConfig from a JSON file; unknown keys are an error."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ParameterError("device config must be a JSON object")
    allowed = set(DeviceConfig.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    return DeviceConfig(**raw)


class ListSink:
    """In-memory sink collecting encoded lines; handy for tests."""

    def __init__(self):
        self.lines: list[str] = []

    def send(self, kind: str, line: str) -> None:
        self.lines.append(line)

    def close(self) -> None:
        pass


class NetSender:
    """Background TCP uplink with a bounded sample buffer.

    Sample frames are droppable under backpressure (oldest first); vitals and
    status frames are queued without bound and always delivered in order.
    """

    def __init__(self, host: str, port: int, sample_buffer: int = 512):
        self._addr = (host, port)
        self._samples: queue.Queue = queue.Queue(maxsize=sample_buffer)
        self._control: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self.dropped_samples = 0
        self._sock = None
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def send(self, kind: str, line: str) -> None:
        if kind == KIND_SAMPLE:
            while True:
                try:
                    self._samples.put_nowait(line)
                    return
                except queue.Full:
                    try:
                        self._samples.get_nowait()
                        self.dropped_samples += 1
                    except queue.Empty:
                        pass
        else:
            self._control.put(line)

    def _next_line(self):
        try:
            return self._control.get_nowait()
        except queue.Empty:
            pass
        try:
            return self._samples.get(timeout=0.05)
        except queue.Empty:
            return None

    def _ensure_connected(self) -> bool:
        if self._sock is not None:
            return True
        try:
            self._sock = socket.create_connection(self._addr, timeout=2.0)
            return True
        except OSError:
            time.sleep(0.2)
            return False

    def _run(self):
        pending = None
        while True:
            line = pending if pending is not None else self._next_line()
            pending = None
            if line is None:
                if self._stop.is_set():
                    break
                continue
            if not self._ensure_connected():
                pending = line  # retry the same frame after reconnecting
                if self._stop.is_set():
                    break
                continue
            try:
                self._sock.sendall(line.encode("utf-8"))
            except OSError:
                try:
                    self._sock.close()
                except OSError:
                    pass
                self._sock = None
                pending = line
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass

    def close(self, drain_timeout: float = 5.0) -> None:
        deadline = time.monotonic() + drain_timeout
        while (
            not (self._samples.empty() and self._control.empty())
            and time.monotonic() < deadline
        ):
            time.sleep(0.02)
        self._stop.set()
        self._thread.join(timeout=drain_timeout)


class DeviceAgent:
    """One simulated unit: drives acquisition, display, uplink, and power."""

    def __init__(self, cfg: DeviceConfig, sink=None):
        self.cfg = cfg
        profile = HeartProfile(bpm_true=cfg.bpm, jitter_pct=cfg.jitter_pct)
        noise = NoiseModel(
            white_sigma_v=cfg.noise_sigma_v,
            motion_amp_v=cfg.motion_amp_v,
            motion_freq_hz=cfg.motion_freq_hz,
            seed=cfg.seed,
        )
        self.temp_profile = TempProfile(
            temp_c_true=cfg.temp_c, drift_c_per_min=cfg.drift_c_per_min
        )
        self.source = PpgSource(profile, noise, fs_hz=cfg.fs_hz)
        self.chain_cfg = ChainConfig()
        self.chain = ChainProcessor(self.chain_cfg, cfg.fs_hz)
        self.adc = AdcConfig(fs_hz=cfg.fs_hz)
        det_cfg = (
            DetectorConfig()
            if cfg.threshold_v is None
            else DetectorConfig(threshold_v=cfg.threshold_v, auto_calibrate=False)
        )
        self.detector = BeatDetector(det_cfg)
        self.engine = VitalsEngine(
            self.detector,
            max_bpm=max_measurable_bpm(cutoff_frequency(self.chain_cfg.stage1)),
            temp_window=max(1, round(cfg.fs_hz)),
        )
        self.sink = sink
        self.power_mode = cfg.power_mode
        self.blink_on = False
        self.lcd = render_lcd(None, 0.0, False, False)
        self.last_reading: VitalsReading | None = None
        self._seq = {"sample": 0, "vitals": 0, "status": 0}
        self._samples_done = 0
        self._chain_primed = False
        self._clock_s = 0.0  # device time; sample-count based while acquiring
        self._next_lcd_t = cfg.lcd_period_s
        self._next_poll_t = 0.0
        self._stop = threading.Event()

    # -- frame plumbing ----------------------------------------------------

    def _emit(self, frame) -> None:
        line = encode_frame(frame)
        if self.sink is not None:
            self.sink.send(frame.kind, line)

    def _next_seq(self, kind: str) -> int:
        n = self._seq[kind]
        self._seq[kind] = n + 1
        return n

    # -- power -------------------------------------------------------------

    def set_power_mode(self, mode: str) -> None:
        if mode not in POWER_WATTS:
            raise ParameterError(
                f"power_mode must be one of {sorted(POWER_WATTS)}, got {mode!r}"
            )
        self.power_mode = mode

    # -- acquisition -------------------------------------------------------

    def _process_chunk(self) -> None:
        trace = self.source.next_block(self.cfg.chunk_samples)
        if not self._chain_primed:
            self.chain.prime(float(trace.v[0]))
            self._chain_primed = True
        conditioned = self.chain.process(trace.v)
        codes = quantize(self.adc, conditioned)
        volts = code_to_volts(self.adc, codes)
        self.detector.process(trace.t_s, volts)

        temp_codes = quantize(self.adc, lm35_voltage(self.temp_profile, trace.t_s))
        scale = self.adc.vref_v / self.adc.full_scale / LM35_V_PER_C
        for c in temp_codes:
            self.engine.push_temp(float(c) * scale)

        first_t_ms = round(float(trace.t_s[0]) * 1000.0)
        self._emit(
            sample_batch_frame(
                self.cfg.sid,
                self._next_seq("sample"),
                first_t_ms,
                1000.0 / self.cfg.fs_hz,
                volts.tolist(),
            )
        )
        self._samples_done += len(trace.v)
        self._clock_s = self._samples_done / self.cfg.fs_hz

    def _lcd_tick(self, t_s: float) -> None:
        reading = self.engine.reading(t_s)
        self.last_reading = reading
        self.blink_on = not self.blink_on
        self.lcd = render_lcd(reading.bpm, reading.temp_f, reading.valid, self.blink_on)
        if self.cfg.print_lcd:
            print(f"|{self.lcd[0]}|\n|{self.lcd[1]}|", flush=True)
        t_ms = round(t_s * 1000.0)
        self._emit(
            vitals_frame(
                self.cfg.sid,
                self._next_seq("vitals"),
                t_ms,
                bpm=reading.bpm,
                temp_c=reading.temp_c,
                temp_f=reading.temp_f,
                valid=reading.valid,
                beats_used=reading.beats_used,
                window_s=reading.window_s,
            )
        )
        self._emit_status(t_ms)

    def _emit_status(self, t_ms: int) -> None:
        self._emit(
            status_frame(
                self.cfg.sid,
                self._next_seq("status"),
                t_ms,
                power_mode=self.power_mode,
                watts=POWER_WATTS[self.power_mode],
                lcd_line1=self.lcd[0],
                lcd_line2=self.lcd[1],
            )
        )

    def _poll_calibration(self) -> None:
        if self.cfg.http_base is None:
            return
        url = f"{self.cfg.http_base}/api/sessions/{self.cfg.sid}/calibration"
        try:
            resp = httpx.get(url, timeout=1.0)
        except httpx.HTTPError:
            return
        if resp.status_code != 200:
            return
        try:
            cmd = decode_calibration(resp.content)
        except ValueError:
            return
        self.apply_calibration(cmd)

    def apply_calibration(self, cmd: CalibrationCommand) -> None:
        changes = {}
        if cmd.threshold_v is None:
            changes["auto_calibrate"] = True
        else:
            changes["threshold_v"] = cmd.threshold_v
            changes["auto_calibrate"] = False
        if cmd.refractory_s is not None:
            changes["refractory_s"] = cmd.refractory_s
        self.detector.reconfigure(replace(self.detector.cfg, **changes))

    # -- main loop ---------------------------------------------------------

    def stop(self) -> None:
        self._stop.set()

    def run(self, duration_s: float | None = None) -> None:
        """Drive the unit until `duration_s` of device time (or stop())."""
        chunk_s = self.cfg.chunk_samples / self.cfg.fs_hz
        wall_start = time.monotonic()
        while not self._stop.is_set():
            if duration_s is not None and self._clock_s >= duration_s - 1e-9:
                break
            if self.power_mode == POWER_NORMAL:
                self._process_chunk()
                while self._clock_s >= self._next_lcd_t - 1e-9:
                    self._lcd_tick(self._next_lcd_t)
                    self._next_lcd_t += self.cfg.lcd_period_s
            else:
                # Suspended: no acquisition, just heartbeat status frames.
                self._clock_s += self.cfg.lcd_period_s
                self._emit_status(round(self._clock_s * 1000.0))
            if self._clock_s >= self._next_poll_t:
                self._poll_calibration()
                self._next_poll_t = self._clock_s + self.cfg.calibration_poll_s
            if self.cfg.pace_real_time:
                ahead = self._clock_s - (time.monotonic() - wall_start)
                if ahead > 0:
                    time.sleep(min(ahead, chunk_s))


def run_device(cfg: DeviceConfig, duration_s: float | None = None, sink=None):
    """Convenience wrapper: build, run, drain, and return the agent."""
    own_sink = False
    if sink is None:
        sink = NetSender(cfg.server_host, cfg.server_port)
        own_sink = True
    agent = DeviceAgent(cfg, sink=sink)
    try:
        agent.run(duration_s)
    finally:
        if own_sink:
            sink.close()
    return agent


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="device-agent",
        description="Run a simulated pulse/temperature monitor unit.",
    )
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--server", help="monitor server TCP address, host:port")
    parser.add_argument("--http", help="monitor server HTTP base, e.g. http://host:8000")
    parser.add_argument("--sid", help="session id reported on the wire")
    parser.add_argument("--bpm", type=float, help="true heart rate to simulate")
    parser.add_argument("--jitter-pct", type=float, help="beat interval jitter fraction")
    parser.add_argument("--temp-c", type=float, help="true body temperature, Celsius")
    parser.add_argument("--noise-sigma", type=float, help="white noise sigma, volts")
    parser.add_argument("--motion-amp", type=float, help="motion artifact amplitude, volts")
    parser.add_argument("--fs", type=float, help="sample rate, Hz")
    parser.add_argument("--seed", type=int, help="noise/jitter random seed")
    parser.add_argument("--threshold", type=float, help="fixed detection level, volts")
    parser.add_argument(
        "--power-mode", choices=sorted(POWER_WATTS), help="initial power mode"
    )
    parser.add_argument("--duration", type=float, help="stop after this many seconds")
    parser.add_argument(
        "--offline", action="store_true", help="no uplink; render the LCD locally"
    )
    parser.add_argument(
        "--faster-than-real-time",
        action="store_true",
        help="disable pacing and run the simulation flat out",
    )
    parser.add_argument(
        "--print-lcd", action="store_true", help="echo LCD refreshes to stdout"
    )
    args = parser.parse_args(argv)

    cfg = load_config(args.config) if args.config else DeviceConfig()
    overrides = {}
    if args.server:
        host, _, port = args.server.rpartition(":")
        if not host or not port.isdigit():
            parser.error("--server must be host:port")
        overrides.update(server_host=host, server_port=int(port))
    if args.http:
        overrides["http_base"] = args.http.rstrip("/")
    if args.sid:
        overrides["sid"] = args.sid
    if args.bpm is not None:
        overrides["bpm"] = args.bpm
    if args.jitter_pct is not None:
        overrides["jitter_pct"] = args.jitter_pct
    if args.temp_c is not None:
        overrides["temp_c"] = args.temp_c
    if args.noise_sigma is not None:
        overrides["noise_sigma_v"] = args.noise_sigma
    if args.motion_amp is not None:
        overrides["motion_amp_v"] = args.motion_amp
    if args.fs is not None:
        overrides["fs_hz"] = args.fs
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threshold is not None:
        overrides["threshold_v"] = args.threshold
    if args.power_mode:
        overrides["power_mode"] = args.power_mode
    if args.faster_than_real_time:
        overrides["pace_real_time"] = False
    if args.print_lcd or args.offline:
        overrides["print_lcd"] = True
    if overrides:
        cfg = replace(cfg, **overrides)

    sink = ListSink() if args.offline else None
    try:
        run_device(cfg, duration_s=args.duration, sink=sink)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
