/** Wire and REST shapes exposed by the monitor server. */

export interface FrameBase {
  sid: string;
  seq: number;
  t_ms: number;
  kind: string;
}

/** One waveform sample, or a batch of evenly spaced samples. */
export interface SampleFrame extends FrameBase {
  kind: "sample";
  v?: number;
  dt_ms?: number;
  vs?: number[];
}

export interface VitalsFrame extends FrameBase {
  kind: "vitals";
  bpm: number | null;
  temp_c: number;
  temp_f: number;
  valid: boolean;
  beats_used: number;
  window_s: number;
}

export interface StatusFrame extends FrameBase {
  kind: "status";
  power_mode: string;
  watts: number;
  lcd_line1: string;
  lcd_line2: string;
}

export type Frame = SampleFrame | VitalsFrame | StatusFrame;

export interface SessionRow {
  sid: string;
  last_seen_ms: number;
  frames: number;
  latest_bpm: number | null;
  valid: boolean | null;
  power_mode: string | null;
  has_pending_calibration: boolean;
}

export interface VitalsBody {
  sid: string;
  t_ms: number | null;
  bpm: number | null;
  temp_c: number | null;
  temp_f: number | null;
  valid: boolean;
  beats_used: number;
  window_s: number;
}

export interface WaveformBody {
  sid: string;
  window_s: number;
  samples: [number, number][];
}

export interface CalibrationAck {
  accepted: boolean;
  issued_at_ms: number;
}

export const THRESHOLD_MIN_V = 0.0;
export const THRESHOLD_MAX_V = 5.0;
/** Refractory must leave the rate ceiling reachable: below 60 / 140 s. */
export const REFRACTORY_MAX_S = 60.0 / 140.0;
