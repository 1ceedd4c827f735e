/**
 * Retry queue for click submissions that failed to reach the server.
 *
 * Entries keep their original task id, so replaying is safe: the server
 * treats a task id it has already recorded as stale, which the flush
 * interprets as "already delivered".
 */

import type { ApiClient, ClicksRequest, ClicksResponse, TaskPayload } from "./api.js";
import { ApiError } from "./api.js";

export interface QueuedSubmission {
  workerId: string;
  request: ClicksRequest;
  task?: TaskPayload;
}

export class RetryQueue {
  private entries: QueuedSubmission[] = [];

  get length(): number {
    return this.entries.length;
  }

  enqueue(entry: QueuedSubmission): void {
    this.entries.push(entry);
  }

  /** Try to deliver everything, oldest first; stops at the first network
   * failure so ordering is preserved. Returns delivered (entry, response)
   * pairs; structured rejections (stale task, bad points) are dropped since
   * replaying the identical payload can never succeed. */
  async flush(api: ApiClient): Promise<Array<[QueuedSubmission, ClicksResponse]>> {
    const delivered: Array<[QueuedSubmission, ClicksResponse]> = [];
    while (this.entries.length > 0) {
      const entry = this.entries[0];
      try {
        delivered.push([entry, await api.postClicks(entry.workerId, entry.request)]);
      } catch (err) {
        if (err instanceof ApiError) {
          this.entries.shift();
          continue;
        }
        break; // network failure: keep for the next flush
      }
      this.entries.shift();
    }
    return delivered;
  }
}
