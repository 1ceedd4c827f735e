/**
 * Annotator session state machine.
 *
 * Drives the task loop: qualification images first, then batch images.
 * Four buffered clicks auto-submit (there is no submit button); a blocked
 * golden check re-presents the same image with a cleared buffer; network
 * failures park the submission in a retry queue so no clicks are lost.
 */

import type { ApiClient, ClicksResponse, TaskPayload } from "./api.js";
import { ApiError } from "./api.js";
import { ClickBuffer, type BufferedClick } from "./clicks.js";
import { RetryQueue } from "./queue.js";

export type Phase = "idle" | "qualifying" | "annotating" | "feedback" | "offline" | "done";

export const SUGGESTED_SECONDS = 10;

export interface CollectedImage {
  image: string;
  width: number;
  height: number;
  points: BufferedClick[];
  accepted: Record<string, boolean>;
  overlays: Record<string, string>;
}

export interface FeedbackView {
  passed: boolean;
  attempt: number;
  images: CollectedImage[];
}

export interface SessionView {
  phase: Phase;
  task: TaskPayload | null;
  clicks: BufferedClick[];
  clickCount: number;
  shownAtMs: number | null;
  suggestedSeconds: number;
  notice: string | null;
  feedback: FeedbackView | null;
  queuedSubmissions: number;
  batchesCompleted: number;
}

type Listener = (view: SessionView) => void;

export class AnnotationSession {
  private readonly api: ApiClient;
  private readonly workerId: string;
  private readonly clock: () => number;
  private readonly queue = new RetryQueue();

  private phase: Phase = "idle";
  private task: TaskPayload | null = null;
  private buffer: ClickBuffer | null = null;
  private notice: string | null = null;
  private feedback: FeedbackView | null = null;
  private collected: CollectedImage[] = [];
  private batchesCompleted = 0;
  private listeners: Listener[] = [];
  private chain: Promise<void> = Promise.resolve();

  constructor(api: ApiClient, workerId: string, clock: () => number = () => Date.now()) {
    this.api = api;
    this.workerId = workerId;
    this.clock = clock;
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  view(): SessionView {
    return {
      phase: this.phase,
      task: this.task,
      clicks: this.buffer ? this.buffer.points() : [],
      clickCount: this.buffer ? this.buffer.count : 0,
      shownAtMs: this.buffer ? this.buffer.shownAtMs : null,
      suggestedSeconds: SUGGESTED_SECONDS,
      notice: this.notice,
      feedback: this.feedback,
      queuedSubmissions: this.queue.length,
      batchesCompleted: this.batchesCompleted,
    };
  }

  /** Await all in-flight work; useful for tests and scripted sessions. */
  settle(): Promise<void> {
    return this.chain;
  }

  start(): Promise<void> {
    return this.run(async () => {
      await this.api.register(this.workerId);
      await this.advance();
    });
  }

  /** Record one click in image pixel space; the fourth click submits. */
  handleClick(x: number, y: number): void {
    if (!this.buffer || !this.task) return;
    if (this.phase !== "qualifying" && this.phase !== "annotating") return;
    if (!this.buffer.add(x, y, this.clock())) return;
    this.emit();
    if (this.buffer.complete) {
      void this.run(() => this.submit());
    }
  }

  undo(): void {
    if (this.buffer && !this.buffer.complete) {
      this.buffer.undo();
      this.emit();
    }
  }

  /** Leave the feedback screen: continue when passed, retake otherwise. */
  proceed(): Promise<void> {
    return this.run(async () => {
      if (this.phase !== "feedback") return;
      this.feedback = null;
      this.collected = [];
      await this.advance();
    });
  }

  /** Retry queued submissions (wire this to the browser's online event). */
  flushQueued(): Promise<void> {
    return this.run(async () => {
      if (this.queue.length === 0) return;
      const delivered = await this.queue.flush(this.api);
      if (this.queue.length > 0) {
        this.notice = "still offline; submission kept in the retry queue";
        this.emit();
        return;
      }
      this.notice = null;
      const last = delivered[delivered.length - 1];
      if (last) {
        const [entry, response] = last;
        await this.handleResponse(response, entry.task, entry.request.points);
      } else {
        await this.advance();
      }
    });
  }

  private run(fn: () => Promise<void>): Promise<void> {
    this.chain = this.chain.then(fn).catch((err) => {
      this.notice = err instanceof Error ? err.message : String(err);
      this.emit();
    });
    return this.chain;
  }

  private emit(): void {
    const view = this.view();
    for (const listener of this.listeners) listener(view);
  }

  private async advance(): Promise<void> {
    const task = await this.api.nextTask(this.workerId);
    this.task = task;
    if (task === null) {
      this.phase = "done";
      this.buffer = null;
    } else {
      this.phase = task.kind === "qualification" ? "qualifying" : "annotating";
      this.buffer = new ClickBuffer(this.clock());
    }
    this.emit();
  }

  private async submit(): Promise<void> {
    if (!this.task || !this.buffer || !this.buffer.complete) return;
    const task = this.task;
    const request = {
      task_id: task.task_id,
      points: this.buffer.points(),
      shown_at_ms: this.buffer.shownAtMs,
    };
    let response: ClicksResponse;
    try {
      response = await this.api.postClicks(this.workerId, request);
    } catch (err) {
      if (err instanceof ApiError) {
        // structured rejection (stale task, bad points): resync with the server
        this.notice = `${err.code}: ${err.message}`;
        await this.advance();
        return;
      }
      this.queue.enqueue({ workerId: this.workerId, request, task });
      this.phase = "offline";
      this.notice = "submission queued; will retry when the connection returns";
      this.emit();
      return;
    }
    await this.handleResponse(response, task, request.points);
  }

  private async handleResponse(
    response: ClicksResponse,
    task?: TaskPayload,
    points?: BufferedClick[],
  ): Promise<void> {
    if (response.status === "blocked") {
      this.notice = "quality check failed on this image; please redo your four clicks";
      await this.advance();  // the server re-presents the same image
      return;
    }
    this.notice = null;
    if (task && points && response.kind === "qualification") {
      this.collected.push({
        image: response.image ?? task.image,
        width: task.width,
        height: task.height,
        points,
        accepted: response.accepted ?? {},
        overlays: response.overlays ?? {},
      });
    }
    if (response.session?.completed) {
      this.feedback = {
        passed: response.session.passed,
        attempt: response.session.attempt,
        images: this.collected,
      };
      this.phase = "feedback";
      this.task = null;
      this.buffer = null;
      this.emit();
      return;
    }
    if (response.batch?.accepted) {
      this.batchesCompleted += 1;
      this.notice = `batch ${response.batch.id} accepted`;
    }
    await this.advance();
  }
}
