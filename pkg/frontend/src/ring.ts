import type { SampleFrame } from "./types.js";

/**
 * Rolling waveform buffer: time-sorted, bounded both by a time window and by
 * a hard point cap of window_s * fs points.
 */
export class WaveformBuffer {
  readonly windowS: number;
  readonly maxPoints: number;
  private ts: number[] = [];
  private vs: number[] = [];

  constructor(windowS: number, fsHz: number) {
    if (!(windowS > 0) || !(fsHz > 0)) {
      throw new RangeError(`window and rate must be positive, got ${windowS}, ${fsHz}`);
    }
    this.windowS = windowS;
    this.maxPoints = Math.ceil(windowS * fsHz);
  }

  get length(): number {
    return this.ts.length;
  }

  get latestT(): number | null {
    return this.ts.length ? this.ts[this.ts.length - 1]! : null;
  }

  /** Append one sample; out-of-order timestamps are dropped. */
  push(t: number, v: number): void {
    const last = this.latestT;
    if (last !== null && t <= last) {
      return;
    }
    this.ts.push(t);
    this.vs.push(v);
    this.evict();
  }

  /** Expand a sample frame (single or batch) into pushes. */
  pushFrame(frame: SampleFrame): void {
    const base = frame.t_ms / 1000.0;
    if (frame.vs !== undefined && frame.dt_ms !== undefined) {
      const dt = frame.dt_ms / 1000.0;
      for (let i = 0; i < frame.vs.length; i++) {
        this.push(base + i * dt, frame.vs[i]!);
      }
    } else if (frame.v !== undefined) {
      this.push(base, frame.v);
    }
  }

  /** Replace the contents with already-sorted (t, v) pairs. */
  seed(samples: [number, number][]): void {
    this.ts = [];
    this.vs = [];
    for (const [t, v] of samples) {
      this.push(t, v);
    }
  }

  points(): [number, number][] {
    return this.ts.map((t, i) => [t, this.vs[i]!]);
  }

  clear(): void {
    this.ts = [];
    this.vs = [];
  }

  private evict(): void {
    const horizon = this.ts[this.ts.length - 1]! - this.windowS;
    let drop = 0;
    while (drop < this.ts.length && this.ts[drop]! <= horizon) {
      drop++;
    }
    const overCap = this.ts.length - drop - this.maxPoints;
    if (overCap > 0) {
      drop += overCap;
    }
    if (drop > 0) {
      this.ts.splice(0, drop);
      this.vs.splice(0, drop);
    }
  }
}
