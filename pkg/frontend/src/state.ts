import type { Frame, SessionRow, StatusFrame, VitalsBody } from "./types.js";
import type { WaveformBuffer } from "./ring.js";

export type ConnectionState = "idle" | "connecting" | "live" | "reconnecting";
export type TempUnit = "F" | "C";

export interface ViewState {
  sid: string | null;
  sessions: SessionRow[];
  vitals: VitalsBody | null;
  status: StatusFrame | null;
  unit: TempUnit;
  connection: ConnectionState;
  calibrationPending: boolean;
  lastError: string | null;
}

export function initialState(): ViewState {
  return {
    sid: null,
    sessions: [],
    vitals: null,
    status: null,
    unit: "F",
    connection: "idle",
    calibrationPending: false,
    lastError: null,
  };
}

/** Fold one live frame into the state (samples go to the plot buffer). */
export function applyFrame(
  state: ViewState,
  frame: Frame,
  buffer: WaveformBuffer,
): void {
  if (frame.kind === "sample") {
    buffer.pushFrame(frame);
  } else if (frame.kind === "vitals") {
    state.vitals = {
      sid: frame.sid,
      t_ms: frame.t_ms,
      bpm: frame.bpm,
      temp_c: frame.temp_c,
      temp_f: frame.temp_f,
      valid: frame.valid,
      beats_used: frame.beats_used,
      window_s: frame.window_s,
    };
  } else if (frame.kind === "status") {
    state.status = frame;
  }
}

/**
 * Refresh the session list. The pending-calibration badge clears as soon as
 * the server reports the selected device has consumed its command.
 */
export function applySessions(state: ViewState, rows: SessionRow[]): void {
  state.sessions = [...rows].sort((a, b) => a.sid.localeCompare(b.sid));
  if (state.sid !== null) {
    const row = state.sessions.find((r) => r.sid === state.sid);
    if (row && !row.has_pending_calibration) {
      state.calibrationPending = false;
    }
  }
}

export function markCalibrationPosted(state: ViewState): void {
  state.calibrationPending = true;
}

export function selectSession(state: ViewState, sid: string | null): void {
  state.sid = sid;
  state.vitals = null;
  state.status = null;
  state.calibrationPending = false;
}

export function displayBpm(state: ViewState): string {
  const bpm = state.vitals?.bpm;
  return bpm === null || bpm === undefined ? "---" : String(Math.round(bpm));
}

export function displayTemp(state: ViewState): string {
  const v = state.vitals;
  if (!v || v.temp_f === null || v.temp_c === null) {
    return "--.-";
  }
  return state.unit === "F" ? `${v.temp_f.toFixed(1)} °F` : `${v.temp_c.toFixed(1)} °C`;
}

/** The validity badge pulses only while a confident reading is on screen. */
export function isPulsing(state: ViewState): boolean {
  return state.vitals !== null && state.vitals.valid && state.vitals.bpm !== null;
}
