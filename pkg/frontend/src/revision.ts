/**
 * Debounced, revision-tagged render scheduling.
 *
 * Invariants:
 *  - at most one render request is in flight per session;
 *  - requests start at least `minIntervalMs` apart (rate cap);
 *  - a frame is shown only if its lighting revision is newer than the
 *    currently displayed one, so stale frames are never displayed;
 *  - after edits settle, the latest revision always gets rendered.
 */

export interface Frame {
  revision: number;
  bytes: ArrayBuffer;
  millis: number;
  contentType: string;
}

export type RenderFn = () => Promise<Frame>;
export type FrameSink = (frame: Frame) => void;

export class RenderScheduler {
  private latest = -1;
  private displayed = -1;
  private inFlight = false;
  private lastStart = -Infinity;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private disposed = false;
  /** Diagnostics for tests and the status bar. */
  readonly stats = { started: 0, shown: 0, dropped: 0 };

  constructor(
    private readonly renderFn: RenderFn,
    private readonly onFrame: FrameSink,
    private readonly minIntervalMs = 250,
    private readonly onError: (err: unknown) => void = () => {},
  ) {}

  /** The lighting advanced to `revision`; render it (debounced). */
  notify(revision: number): void {
    if (this.disposed) return;
    this.latest = Math.max(this.latest, revision);
    this.arm();
  }

  get displayedRevision(): number {
    return this.displayed;
  }

  get settled(): boolean {
    return !this.inFlight && this.timer === null && this.displayed >= this.latest;
  }

  dispose(): void {
    this.disposed = true;
    if (this.timer) clearTimeout(this.timer);
    this.timer = null;
  }

  private arm(): void {
    if (this.disposed || this.inFlight || this.timer !== null) return;
    if (this.displayed >= this.latest) return;
    const wait = Math.max(0, this.lastStart + this.minIntervalMs - Date.now());
    this.timer = setTimeout(() => {
      this.timer = null;
      this.launch();
    }, wait);
  }

  private launch(): void {
    if (this.disposed || this.inFlight) return;
    this.inFlight = true;
    this.lastStart = Date.now();
    this.stats.started++;
    this.renderFn().then(
      (frame) => {
        this.inFlight = false;
        if (this.disposed) return;
        if (frame.revision > this.displayed) {
          this.displayed = frame.revision;
          this.stats.shown++;
          this.onFrame(frame);
        } else {
          this.stats.dropped++;
        }
        this.arm(); // re-render if edits arrived mid-flight
      },
      (err) => {
        this.inFlight = false;
        if (this.disposed) return;
        this.onError(err);
        this.arm();
      },
    );
  }
}
