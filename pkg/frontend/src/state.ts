/** Selection state machine: click + scale slider -> debounced /select
 * requests with monotone ids; stale responses are discarded so the
 * highlight always reflects the newest request that has answered. */

import type { Vec3 } from "./api.js";

export interface SelectApi {
  select(click: Vec3, scale: number, threshold: number): Promise<number[]>;
}

export interface LoopOptions {
  debounceMs?: number;
  threshold?: number;
  sMax?: number;
}

const MIN_DEBOUNCE_MS = 50;

export class SelectionLoop {
  readonly debounceMs: number;
  readonly sMax: number;
  threshold: number;

  private click_: Vec3 | null = null;
  private scale_ = 0;
  private seq = 0;
  private applied = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private highlight_: ReadonlySet<number> = new Set();
  private highlightListeners: Array<(h: ReadonlySet<number>) => void> = [];
  private errorListeners: Array<(err: unknown) => void> = [];

  constructor(private readonly api: SelectApi, opts: LoopOptions = {}) {
    this.debounceMs = Math.max(MIN_DEBOUNCE_MS, opts.debounceMs ?? MIN_DEBOUNCE_MS);
    this.threshold = opts.threshold ?? 0.9;
    this.sMax = opts.sMax ?? 1.0;
  }

  get click(): Vec3 | null {
    return this.click_;
  }

  get scale(): number {
    return this.scale_;
  }

  get highlight(): ReadonlySet<number> {
    return this.highlight_;
  }

  onHighlight(fn: (h: ReadonlySet<number>) => void): void {
    this.highlightListeners.push(fn);
  }

  onError(fn: (err: unknown) => void): void {
    this.errorListeners.push(fn);
  }

  setClick(p: Vec3): void {
    this.click_ = [p[0], p[1], p[2]];
    this.schedule();
  }

  clearClick(): void {
    this.click_ = null;
    this.cancelPending();
    this.applied = this.seq; // anything in flight is now stale
    this.emit(new Set());
  }

  setScale(s: number): void {
    this.scale_ = Math.min(this.sMax, Math.max(0, s));
    if (this.click_ !== null) this.schedule();
  }

  setThreshold(t: number): void {
    this.threshold = t;
    if (this.click_ !== null) this.schedule();
  }

  /** Skip the debounce and issue the request now; resolves when the
   * response has been applied (or discarded as stale). */
  flush(): Promise<void> {
    this.cancelPending();
    return this.fire();
  }

  private cancelPending(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private schedule(): void {
    this.cancelPending();
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, this.debounceMs);
  }

  private async fire(): Promise<void> {
    if (this.click_ === null) return;
    const id = ++this.seq;
    try {
      const indices = await this.api.select(this.click_, this.scale_, this.threshold);
      if (id <= this.applied) return; // a newer response already landed
      this.applied = id;
      this.emit(new Set(indices));
    } catch (err) {
      if (id > this.applied) {
        for (const fn of this.errorListeners) fn(err);
      }
    }
  }

  private emit(h: ReadonlySet<number>): void {
    this.highlight_ = h;
    for (const fn of this.highlightListeners) fn(h);
  }
}
