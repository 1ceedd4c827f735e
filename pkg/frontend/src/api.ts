/** Typed client for the annotation service endpoints. */

import type { BufferedClick } from "./clicks.js";

export interface TaskProgress {
  index: number;
  total: number;
}

export interface TaskPayload {
  task_id: string;
  kind: "qualification" | "annotation";
  image: string;
  class: string;
  width: number;
  height: number;
  instruction: string;
  progress: TaskProgress;
}

export interface QualificationImageResult {
  image: string;
  accepted: Record<string, boolean>;
}

export interface SessionOutcome {
  completed: boolean;
  passed: boolean;
  attempt: number;
  images: QualificationImageResult[];
}

export interface ClicksResponse {
  status: "recorded" | "blocked";
  retry?: boolean;
  kind?: string;
  image?: string;
  accepted?: Record<string, boolean>;
  overlays?: Record<string, string>;
  session?: SessionOutcome;
  batch?: { id: string; accepted: boolean };
}

export interface ClicksRequest {
  task_id: string;
  points: BufferedClick[];
  shown_at_ms: number;
}

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  resolve(path: string): string {
    return path.startsWith("http") ? path : this.baseUrl + path;
  }

  async register(workerId: string): Promise<void> {
    await this.request("POST", `/api/worker/${encodeURIComponent(workerId)}/register`);
  }

  /** Next task for the worker, or null when the pool is exhausted. */
  async nextTask(workerId: string): Promise<TaskPayload | null> {
    const response = await this.raw("GET", `/api/worker/${encodeURIComponent(workerId)}/next`);
    if (response.status === 204) return null;
    if (!response.ok) throw await this.toError(response);
    return (await response.json()) as TaskPayload;
  }

  async postClicks(workerId: string, body: ClicksRequest): Promise<ClicksResponse> {
    return (await this.request(
      "POST",
      `/api/worker/${encodeURIComponent(workerId)}/clicks`,
      body,
    )) as ClicksResponse;
  }

  private async raw(method: string, path: string, body?: unknown): Promise<Response> {
    return this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const response = await this.raw(method, path, body);
    if (!response.ok) throw await this.toError(response);
    return response.json();
  }

  private async toError(response: Response): Promise<ApiError> {
    let code = "HTTP_" + response.status;
    let message = response.statusText;
    try {
      const data = (await response.json()) as { error?: string; message?: string };
      if (data.error) code = data.error;
      if (data.message) message = data.message;
    } catch {
      // non-JSON error body; keep the status text
    }
    return new ApiError(response.status, code, message);
  }
}
