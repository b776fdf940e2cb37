import { ApiClient, ApiError } from "./api.js";
import type { QueueItem } from "./types.js";
import { QueueState } from "./queue.js";

/**
 * Client-side mirror of the server rule: an edit must actually change the
 * candidate. Returns an error string, or null when the edit is postable.
 */
export function validateEdit(candidateText: string, finalText: string): string | null {
  if (!finalText.trim()) return "edited text must not be empty";
  if (finalText === candidateText) {
    return "edited text equals the candidate; use approve instead";
  }
  return null;
}

export type ReviewOutcome =
  | { kind: "decided"; item: QueueItem }
  | { kind: "validation_error"; message: string }
  | { kind: "api_error"; message: string; status: number; itemRemoved: boolean };

/**
 * Review-flow controller: posts decisions optimistically and reconciles the
 * queue against the response. A 409 means another annotator got there first,
 * so the item leaves the queue with a notice; other 4xx keep it pending.
 */
export class ReviewFlow {
  constructor(
    private api: ApiClient,
    private queue: QueueState,
    private annotator: () => string,
  ) {}

  async approve(item: QueueItem): Promise<ReviewOutcome> {
    return this.post(item, { decision: "approve" as const });
  }

  async edit(item: QueueItem, finalText: string): Promise<ReviewOutcome> {
    const invalid = validateEdit(item.candidate_text, finalText);
    if (invalid) return { kind: "validation_error", message: invalid };
    return this.post(item, { decision: "edit" as const, final_text: finalText });
  }

  async reject(item: QueueItem, reason?: string): Promise<ReviewOutcome> {
    return this.post(item, { decision: "reject" as const, reason });
  }

  private async post(
    item: QueueItem,
    body: { decision: "approve" | "edit" | "reject"; final_text?: string; reason?: string },
  ): Promise<ReviewOutcome> {
    this.queue.remove(item.item_id); // optimistic
    try {
      const decided = await this.api.decide(item.item_id, {
        ...body,
        annotator: this.annotator(),
      });
      return { kind: "decided", item: decided };
    } catch (err) {
      if (err instanceof ApiError) {
        if (err.status === 409) {
          this.queue.notice = {
            kind: "info",
            text: `item ${item.item_id} was decided by another annotator`,
          };
          return {
            kind: "api_error",
            message: err.message,
            status: err.status,
            itemRemoved: true,
          };
        }
        // Reconcile the optimistic removal: the item is still pending.
        this.queue.items = [item, ...this.queue.items];
        this.queue.notice = { kind: "error", text: err.message };
        return {
          kind: "api_error",
          message: err.message,
          status: err.status,
          itemRemoved: false,
        };
      }
      throw err;
    }
  }
}
