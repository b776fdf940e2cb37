import type { QueueItem } from "./types.js";

export interface Notice {
  kind: "info" | "error";
  text: string;
}

/**
 * Client-side view of the pending queue: paging, a selection cursor, and
 * optimistic removal reconciled against API responses. Authoritative state
 * always comes back from the server via replace().
 */
export class QueueState {
  items: QueueItem[] = [];
  page = 0;
  cursor = 0;
  notice: Notice | null = null;

  constructor(public pageSize = 10) {}

  replace(items: QueueItem[]): void {
    this.items = items.filter((i) => i.status === "pending");
    const pages = this.pageCount();
    if (this.page >= pages) this.page = Math.max(0, pages - 1);
    this.clampCursor();
  }

  pageCount(): number {
    return Math.max(1, Math.ceil(this.items.length / this.pageSize));
  }

  pageItems(): QueueItem[] {
    const start = this.page * this.pageSize;
    return this.items.slice(start, start + this.pageSize);
  }

  selected(): QueueItem | null {
    return this.pageItems()[this.cursor] ?? null;
  }

  next(): void {
    if (this.cursor + 1 < this.pageItems().length) {
      this.cursor += 1;
    } else if (this.page + 1 < this.pageCount()) {
      this.page += 1;
      this.cursor = 0;
    }
  }

  prev(): void {
    if (this.cursor > 0) {
      this.cursor -= 1;
    } else if (this.page > 0) {
      this.page -= 1;
      this.cursor = Math.max(0, this.pageItems().length - 1);
    }
  }

  /** Optimistically drop a decided item; the next replace() reconciles. */
  remove(itemId: string, notice: Notice | null = null): void {
    this.items = this.items.filter((i) => i.item_id !== itemId);
    this.notice = notice;
    this.clampCursor();
  }

  private clampCursor(): void {
    const onPage = this.pageItems().length;
    if (this.cursor >= onPage) this.cursor = Math.max(0, onPage - 1);
    if (onPage === 0 && this.page > 0) {
      this.page -= 1;
      this.cursor = Math.max(0, this.pageItems().length - 1);
    }
  }
}
