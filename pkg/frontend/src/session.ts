/**
 * One evaluator working through one list, strictly in server order.
 *
 * Resume rule: the service reports how many annotations this evaluator has
 * stored; since items are always presented in order, the session restarts
 * at that index. Drafts that never reached the server are replayed from the
 * outbound queue first.
 */

import {
  ApiClient,
  DuplicateSubmission,
  type CategoryFlags,
  type ViewItem,
} from "./api.js";
import { OutboundQueue, type StorageLike, MemoryStorage } from "./queue.js";

export type SubmitResult = "accepted" | "already-submitted" | "queued-offline";

export class AnnotationSession {
  items: ViewItem[] = [];
  index = 0;
  readonly queue: OutboundQueue;

  constructor(
    private client: ApiClient,
    readonly listId: string,
    readonly evaluatorId: string,
    storage: StorageLike = new MemoryStorage(),
  ) {
    this.queue = new OutboundQueue(storage, `annotator:${evaluatorId}:${listId}`);
  }

  async load(): Promise<void> {
    this.items = await this.client.fetchList(this.listId);
    await this.queue.flush(this.client);
    const progress = await this.client.progress(this.evaluatorId);
    this.index = Math.min(progress.annotated, this.items.length);
  }

  current(): ViewItem | null {
    return this.index < this.items.length ? (this.items[this.index] as ViewItem) : null;
  }

  done(): boolean {
    return this.index >= this.items.length;
  }

  progressLabel(): string {
    if (this.items.length === 0) {
      return "empty list";
    }
    const position = Math.min(this.index + 1, this.items.length);
    return `${position} of ${this.items.length}`;
  }

  /**
   * Submit flags for the current item and advance. Duplicates advance
   * exactly once; a network failure keeps a durable draft and stays put
   * until a retry succeeds.
   */
  async submit(flags: CategoryFlags): Promise<SubmitResult> {
    const item = this.current();
    if (!item) {
      throw new Error("no item to annotate");
    }
    const payload = {
      item_id: item.item_id,
      evaluator_id: this.evaluatorId,
      flags,
    };
    try {
      await this.client.submit(payload);
      this.index += 1;
      return "accepted";
    } catch (err) {
      if (err instanceof DuplicateSubmission) {
        this.index += 1;
        return "already-submitted";
      }
      this.queue.enqueue(payload);
      return "queued-offline";
    }
  }

  /** Retry queued drafts; advances past every draft that reached the server. */
  async retryQueued(): Promise<boolean> {
    const outcomes = await this.queue.flush(this.client);
    for (const outcome of outcomes) {
      if (outcome === "sent" || outcome === "duplicate") {
        this.index += 1;
      }
    }
    return this.queue.size() === 0;
  }
}
