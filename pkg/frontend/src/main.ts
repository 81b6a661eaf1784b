import { MonitorApi, ApiError } from "./api.js";
import { WaveformBuffer } from "./ring.js";
import { FrameStream } from "./sse.js";
import { renderWaveform } from "./plot.js";
import {
  applyFrame,
  applySessions,
  displayBpm,
  displayTemp,
  initialState,
  isPulsing,
  markCalibrationPosted,
  selectSession,
} from "./state.js";
import type { ViewState } from "./state.js";

const PLOT_WINDOW_S = 10.0;
const NOMINAL_FS_HZ = 100.0;
const SESSIONS_POLL_MS = 2000;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
};

const api = new MonitorApi("");
const state: ViewState = initialState();
const buffer = new WaveformBuffer(PLOT_WINDOW_S, NOMINAL_FS_HZ);
let stream: FrameStream | null = null;

const els = {
  picker: $<HTMLSelectElement>("session-picker"),
  bpm: $<HTMLElement>("bpm-readout"),
  temp: $<HTMLElement>("temp-readout"),
  unitToggle: $<HTMLButtonElement>("unit-toggle"),
  badge: $<HTMLElement>("validity-badge"),
  connection: $<HTMLElement>("connection-badge"),
  power: $<HTMLElement>("power-readout"),
  lcd1: $<HTMLElement>("lcd-line1"),
  lcd2: $<HTMLElement>("lcd-line2"),
  slider: $<HTMLInputElement>("threshold-slider"),
  sliderValue: $<HTMLElement>("threshold-value"),
  applyBtn: $<HTMLButtonElement>("apply-threshold"),
  autoBtn: $<HTMLButtonElement>("auto-threshold"),
  pendingBadge: $<HTMLElement>("pending-badge"),
  calibrationError: $<HTMLElement>("calibration-error"),
  canvas: $<HTMLCanvasElement>("waveform"),
  empty: $<HTMLElement>("empty-state"),
  panel: $<HTMLElement>("monitor-panel"),
};

function renderReadouts(): void {
  els.bpm.textContent = displayBpm(state);
  els.temp.textContent = displayTemp(state);
  els.unitToggle.textContent = state.unit === "F" ? "show °C" : "show °F";
  els.badge.classList.toggle("pulsing", isPulsing(state));
  els.badge.classList.toggle("invalid", state.vitals !== null && !state.vitals.valid);
  els.badge.textContent = state.vitals
    ? state.vitals.valid
      ? "signal ok"
      : "no signal"
    : "waiting";
  els.connection.textContent = state.connection;
  els.connection.dataset.state = state.connection;
  if (state.status) {
    els.power.textContent = `${state.status.power_mode} · ${state.status.watts.toFixed(2)} W`;
    els.lcd1.textContent = state.status.lcd_line1;
    els.lcd2.textContent = state.status.lcd_line2;
  } else {
    els.power.textContent = "–";
    els.lcd1.textContent = " ".repeat(16);
    els.lcd2.textContent = " ".repeat(16);
  }
  els.pendingBadge.hidden = !state.calibrationPending;
  const haveSession = state.sid !== null;
  els.empty.hidden = haveSession;
  els.panel.hidden = !haveSession;
}

function renderPicker(): void {
  const current = state.sid ?? "";
  const options = ['<option value="">— pick a device —</option>'];
  for (const row of state.sessions) {
    const label = `${row.sid}${row.latest_bpm !== null ? ` (${Math.round(row.latest_bpm)} bpm)` : ""}`;
    options.push(`<option value="${row.sid}">${label}</option>`);
  }
  els.picker.innerHTML = options.join("");
  els.picker.value = current;
}

function connectTo(sid: string): void {
  stream?.stop();
  buffer.clear();
  selectSession(state, sid);
  api
    .waveform(sid, PLOT_WINDOW_S)
    .then((body) => buffer.seed(body.samples))
    .catch(() => undefined); // backfill is cosmetic; the stream fills the plot
  api
    .latestVitals(sid)
    .then((body) => {
      if (state.sid === sid && state.vitals === null && body.t_ms !== null) {
        state.vitals = body;
        renderReadouts();
      }
    })
    .catch(() => undefined);
  stream = new FrameStream(`/api/sessions/${encodeURIComponent(sid)}/stream`, {
    onFrame: (frame) => {
      applyFrame(state, frame, buffer);
      if (frame.kind !== "sample") {
        renderReadouts();
      }
    },
    onState: (connection) => {
      state.connection = connection;
      renderReadouts();
    },
  });
  stream.start();
  renderReadouts();
}

async function refreshSessions(): Promise<void> {
  try {
    const rows = await api.listSessions();
    const hadPending = state.calibrationPending;
    applySessions(state, rows);
    renderPicker();
    if (state.sid === null && state.sessions.length > 0) {
      connectTo(state.sessions[0]!.sid);
      renderPicker();
    }
    if (hadPending !== state.calibrationPending) {
      renderReadouts();
    }
  } catch {
    // transient; next poll retries
  }
}

els.picker.addEventListener("change", () => {
  const sid = els.picker.value;
  if (sid) {
    connectTo(sid);
  } else {
    stream?.stop();
    selectSession(state, null);
    renderReadouts();
  }
});

els.unitToggle.addEventListener("click", () => {
  state.unit = state.unit === "F" ? "C" : "F";
  renderReadouts();
});

els.slider.addEventListener("input", () => {
  els.sliderValue.textContent = `${Number(els.slider.value).toFixed(2)} V`;
});

async function sendCalibration(thresholdV: number | null): Promise<void> {
  if (state.sid === null) {
    return;
  }
  els.calibrationError.textContent = "";
  try {
    await api.postCalibration(state.sid, thresholdV);
    markCalibrationPosted(state);
  } catch (err) {
    els.calibrationError.textContent =
      err instanceof ApiError ? err.message : "calibration request failed";
  }
  renderReadouts();
}

els.applyBtn.addEventListener("click", () => {
  void sendCalibration(Number(els.slider.value));
});
els.autoBtn.addEventListener("click", () => {
  void sendCalibration(null);
});

function frame(): void {
  renderWaveform(els.canvas, buffer.points(), PLOT_WINDOW_S);
  requestAnimationFrame(frame);
}

renderReadouts();
els.sliderValue.textContent = `${Number(els.slider.value).toFixed(2)} V`;
void refreshSessions();
setInterval(() => void refreshSessions(), SESSIONS_POLL_MS);
requestAnimationFrame(frame);
