import type {
  CalibrationAck,
  SessionRow,
  VitalsBody,
  WaveformBody,
} from "./types.js";
import { REFRACTORY_MAX_S, THRESHOLD_MAX_V, THRESHOLD_MIN_V } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status?: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

/** Typed client for the monitor server's documented endpoints. */
export class MonitorApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchFn = (...args) => fetch(...args),
  ) {}

  async listSessions(): Promise<SessionRow[]> {
    return this.getJson<SessionRow[]>("/api/sessions");
  }

  async latestVitals(sid: string): Promise<VitalsBody> {
    return this.getJson<VitalsBody>(`/api/sessions/${encodeURIComponent(sid)}/vitals/latest`);
  }

  async waveform(sid: string, windowS: number): Promise<WaveformBody> {
    const path = `/api/sessions/${encodeURIComponent(sid)}/waveform?window_s=${windowS}`;
    return this.getJson<WaveformBody>(path);
  }

  /**
   * Steer the device's beat detector. `thresholdV` is a voltage in
   * [0, 5] or null to return to auto-calibration; bad values are rejected
   * here, before any request is made.
   */
  async postCalibration(
    sid: string,
    thresholdV: number | null,
    refractoryS?: number,
  ): Promise<CalibrationAck> {
    if (thresholdV !== null) {
      if (
        !Number.isFinite(thresholdV) ||
        thresholdV < THRESHOLD_MIN_V ||
        thresholdV > THRESHOLD_MAX_V
      ) {
        throw new ApiError(
          `threshold must be in [${THRESHOLD_MIN_V}, ${THRESHOLD_MAX_V}] V, got ${thresholdV}`,
        );
      }
    }
    const body: Record<string, unknown> = { threshold_v: thresholdV };
    if (refractoryS !== undefined) {
      if (!Number.isFinite(refractoryS) || refractoryS <= 0 || refractoryS >= REFRACTORY_MAX_S) {
        throw new ApiError(
          `refractory must be in (0, ${REFRACTORY_MAX_S.toFixed(4)}) s, got ${refractoryS}`,
        );
      }
      body.refractory_s = refractoryS;
    }
    const url = `${this.baseUrl}/api/sessions/${encodeURIComponent(sid)}/calibration`;
    const resp = await this.fetchFn(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      throw new ApiError(await describeFailure(resp), resp.status);
    }
    return (await resp.json()) as CalibrationAck;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) {
      throw new ApiError(await describeFailure(resp), resp.status);
    }
    return (await resp.json()) as T;
  }
}

async function describeFailure(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    if (body && typeof body.error === "string") {
      return body.error;
    }
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${resp.status}`;
}
