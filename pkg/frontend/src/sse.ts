import type { Frame } from "./types.js";
import type { ConnectionState } from "./state.js";

/** The slice of EventSource the stream needs (swappable in tests). */
export interface EventSourceLike {
  addEventListener(type: string, listener: (ev: MessageEvent) => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface Scheduler {
  set(fn: () => void, ms: number): unknown;
  clear(handle: unknown): void;
}

const defaultScheduler: Scheduler = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export interface StreamHandlers {
  onFrame(frame: Frame): void;
  onState(state: ConnectionState): void;
}

export interface StreamOptions {
  factory?: EventSourceFactory;
  scheduler?: Scheduler;
  baseDelayMs?: number;
  maxDelayMs?: number;
}

/**
 * A session's live frame feed with automatic reconnection.
 *
 * Drops and server-initiated `overflow` closes both resubscribe after an
 * exponential backoff (base × 2^n, capped); a successful open resets the
 * backoff.
 */
export class FrameStream {
  private readonly factory: EventSourceFactory;
  private readonly scheduler: Scheduler;
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;
  private source: EventSourceLike | null = null;
  private timer: unknown = null;
  private attempts = 0;
  private stopped = true;

  constructor(
    private readonly url: string,
    private readonly handlers: StreamHandlers,
    options: StreamOptions = {},
  ) {
    this.factory = options.factory ?? ((u) => new EventSource(u) as EventSourceLike);
    this.scheduler = options.scheduler ?? defaultScheduler;
    this.baseDelayMs = options.baseDelayMs ?? 500;
    this.maxDelayMs = options.maxDelayMs ?? 8000;
  }

  start(): void {
    this.stopped = false;
    this.attempts = 0;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      this.scheduler.clear(this.timer);
      this.timer = null;
    }
    this.closeSource();
  }

  /** Delay before reconnect attempt n (1-based). */
  delayForAttempt(attempt: number): number {
    return Math.min(this.maxDelayMs, this.baseDelayMs * 2 ** (attempt - 1));
  }

  private connect(): void {
    this.handlers.onState(this.attempts === 0 ? "connecting" : "reconnecting");
    const source = this.factory(this.url);
    this.source = source;
    source.addEventListener("open", () => {
      if (this.source !== source) {
        return;
      }
      this.attempts = 0;
      this.handlers.onState("live");
    });
    source.addEventListener("frame", (ev) => {
      if (this.source !== source) {
        return;
      }
      this.handlers.onFrame(JSON.parse(ev.data as string) as Frame);
    });
    // The server closes a lagging consumer with a terminal overflow event;
    // a fresh subscription starts from live data again.
    source.addEventListener("overflow", () => this.dropAndRetry(source));
    source.addEventListener("error", () => this.dropAndRetry(source));
  }

  private dropAndRetry(from: EventSourceLike): void {
    if (this.stopped || this.source !== from) {
      return;
    }
    this.closeSource();
    this.attempts += 1;
    this.handlers.onState("reconnecting");
    this.timer = this.scheduler.set(() => {
      this.timer = null;
      this.connect();
    }, this.delayForAttempt(this.attempts));
  }

  private closeSource(): void {
    if (this.source !== null) {
      this.source.close();
      this.source = null;
    }
  }
}
