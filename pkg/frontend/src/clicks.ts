/**
 * Click buffer for one task: at most four clicks, undo support, and
 * monotone timestamps (t_shown <= t_click1 <= ... <= t_click4).
 */

export interface BufferedClick {
  x: number;
  y: number;
  t_ms: number;
}

export const CLICKS_PER_TASK = 4;

export class ClickBuffer {
  readonly shownAtMs: number;
  private clicks: BufferedClick[] = [];

  constructor(shownAtMs: number) {
    this.shownAtMs = shownAtMs;
  }

  get count(): number {
    return this.clicks.length;
  }

  get complete(): boolean {
    return this.clicks.length === CLICKS_PER_TASK;
  }

  /** Add a click; timestamps are clamped so the sequence stays monotone
   * even if the wall clock misbehaves. Returns false when already full. */
  add(x: number, y: number, tMs: number): boolean {
    if (this.complete) return false;
    const floor = this.clicks.length
      ? this.clicks[this.clicks.length - 1].t_ms
      : this.shownAtMs;
    this.clicks.push({ x, y, t_ms: Math.max(tMs, floor) });
    return true;
  }

  undo(): BufferedClick | undefined {
    return this.clicks.pop();
  }

  points(): BufferedClick[] {
    return this.clicks.map((c) => ({ ...c }));
  }
}
