/**
 * Outbound submission queue with durable drafts.
 *
 * Submissions enter the queue first and leave only on server acknowledgment
 * (201) or duplicate rejection (409). Network failures keep the draft, so a
 * reload or an offline stretch loses nothing.
 */

import { ApiClient, type AnnotationPayload, DuplicateSubmission, ApiError } from "./api.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class MemoryStorage implements StorageLike {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.has(key) ? (this.map.get(key) as string) : null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export type FlushOutcome = "sent" | "duplicate" | "dropped" | "kept";

export class OutboundQueue {
  private pending: AnnotationPayload[] = [];

  constructor(
    private storage: StorageLike,
    private storageKey: string,
  ) {
    const raw = this.storage.getItem(this.storageKey);
    if (raw) {
      try {
        this.pending = JSON.parse(raw) as AnnotationPayload[];
      } catch {
        this.pending = [];
      }
    }
  }

  size(): number {
    return this.pending.length;
  }

  peek(): AnnotationPayload | undefined {
    return this.pending[0];
  }

  enqueue(annotation: AnnotationPayload): void {
    this.pending.push(annotation);
    this.persist();
  }

  private persist(): void {
    this.storage.setItem(this.storageKey, JSON.stringify(this.pending));
  }

  /**
   * Try to deliver queued submissions in order. A network failure or 5xx
   * stops the flush and retains every remaining draft; a duplicate (409)
   * counts as delivered; any other 4xx can never succeed and is dropped.
   */
  async flush(client: ApiClient): Promise<FlushOutcome[]> {
    const outcomes: FlushOutcome[] = [];
    while (this.pending.length > 0) {
      const next = this.pending[0] as AnnotationPayload;
      try {
        await client.submit(next);
        outcomes.push("sent");
      } catch (err) {
        if (err instanceof DuplicateSubmission) {
          outcomes.push("duplicate");
        } else if (err instanceof ApiError && err.status >= 400 && err.status < 500) {
          outcomes.push("dropped");
        } else {
          outcomes.push("kept");
          break; // retain the draft and retry later
        }
      }
      this.pending.shift();
      this.persist();
    }
    return outcomes;
  }
}
