import { ApiClient } from "./api.js";
import { renderChart } from "./metricsPanel.js";
import { QueueState } from "./queue.js";
import { ReviewFlow } from "./review.js";
import { bindShortcuts } from "./shortcuts.js";
import type { Progress, QueueItem } from "./types.js";

const POLL_MS = 1000;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  queue = new QueueState(10);
  review: ReviewFlow;
  annotator = "";
  editing = false;
  lastProgress: Progress | null = null;

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
  ) {
    this.review = new ReviewFlow(api, this.queue, () => this.annotator);
  }

  start(): void {
    this.annotator =
      window.localStorage.getItem("annotator") ||
      window.prompt("Annotator name for this session:")?.trim() ||
      "anonymous";
    window.localStorage.setItem("annotator", this.annotator);
    this.scaffold();
    bindShortcuts(window, {
      approve: () => void this.decide("approve"),
      edit: () => this.openEditor(),
      reject: () => void this.decide("reject"),
      next: () => {
        this.queue.next();
        this.renderQueue();
      },
      prev: () => {
        this.queue.prev();
        this.renderQueue();
      },
    });
    void this.refresh();
    window.setInterval(() => void this.refresh(), POLL_MS);
  }

  scaffold(): void {
    this.root.innerHTML = `
      <header>
        <h1>alforge review</h1>
        <span id="annotator-badge"></span>
        <div id="progress"></div>
      </header>
      <div id="notice"></div>
      <main>
        <section id="queue-pane">
          <h2>Pending</h2>
          <ul id="queue-list"></ul>
          <div id="pager"></div>
        </section>
        <section id="review-pane"></section>
      </main>
      <section id="metrics-pane">
        <h2>Per-group error ratio</h2>
        <div id="chart"></div>
      </section>
    `;
    const badge = this.root.querySelector("#annotator-badge")!;
    badge.textContent = `annotator: ${this.annotator} — keys: a approve, e edit, r reject, j/k move`;
  }

  async refresh(): Promise<void> {
    try {
      const [items, progress, metrics] = await Promise.all([
        this.api.listItems({ status: "pending" }),
        this.api.progress(),
        this.api.metrics(),
      ]);
      this.queue.replace(items);
      this.lastProgress = progress;
      this.renderProgress(progress);
      this.renderQueue();
      renderChart(this.root.querySelector("#chart") as HTMLElement, metrics);
    } catch (err) {
      this.setNotice("error", `backend unreachable: ${String(err)}`);
    }
  }

  renderProgress(p: Progress): void {
    const target = this.root.querySelector("#progress") as HTMLElement;
    target.textContent =
      `iteration ${p.iteration} | budget ${p.budget_remaining} | strategy ${p.strategy} | ` +
      `pending ${p.counts.pending} / approved ${p.counts.approved} / ` +
      `edited ${p.counts.edited} / rejected ${p.counts.rejected} | pairs ${p.labeled_pairs}`;
  }

  renderQueue(): void {
    const list = this.root.querySelector("#queue-list") as HTMLElement;
    list.textContent = "";
    const selected = this.queue.selected();
    for (const item of this.queue.pageItems()) {
      const li = el("li", item === selected ? "selected" : "");
      li.dataset.itemId = item.item_id;
      li.textContent = `${item.item_id} · ${item.source_text.slice(0, 60)}`;
      li.onclick = () => {
        this.queue.cursor = this.queue.pageItems().indexOf(item);
        this.renderQueue();
      };
      list.appendChild(li);
    }
    const pager = this.root.querySelector("#pager") as HTMLElement;
    pager.textContent = `page ${this.queue.page + 1}/${this.queue.pageCount()} · ${this.queue.items.length} pending`;
    if (this.queue.notice) {
      this.setNotice(this.queue.notice.kind, this.queue.notice.text);
      this.queue.notice = null;
    }
    this.renderReview(selected);
  }

  renderReview(item: QueueItem | null): void {
    const pane = this.root.querySelector("#review-pane") as HTMLElement;
    pane.textContent = "";
    this.editing = false;
    if (!item) {
      pane.appendChild(el("p", "empty-state", "Queue is empty — waiting for the next batch."));
      return;
    }
    const meta = el(
      "p",
      "item-meta",
      `iteration ${item.iteration} · cluster ${item.cluster_id ?? "—"} · ` +
        `informativeness ${item.informativeness?.toFixed(4) ?? "—"} · ${item.provenance}`,
    );
    const source = el("article", "source-text");
    source.appendChild(el("h3", "", "Source"));
    source.appendChild(el("p", "", item.source_text));
    const candidate = el("article", "candidate-text");
    candidate.appendChild(el("h3", "", "Candidate"));
    candidate.appendChild(el("p", "", item.candidate_text));
    const columns = el("div", "columns");
    columns.appendChild(source);
    columns.appendChild(candidate);

    const actions = el("div", "actions");
    const approveBtn = el("button", "approve", "Approve (a)");
    approveBtn.onclick = () => void this.decide("approve");
    const editBtn = el("button", "edit", "Edit (e)");
    editBtn.onclick = () => this.openEditor();
    const rejectBtn = el("button", "reject", "Reject (r)");
    rejectBtn.onclick = () => void this.decide("reject");
    actions.append(approveBtn, editBtn, rejectBtn);

    pane.append(meta, columns, actions, el("div", "editor-slot"));
  }

  openEditor(): void {
    const item = this.queue.selected();
    if (!item || this.editing) return;
    this.editing = true;
    const slot = this.root.querySelector(".editor-slot") as HTMLElement;
    const area = el("textarea", "edit-area");
    area.value = item.candidate_text;
    const save = el("button", "save-edit", "Post edit");
    const error = el("p", "edit-error");
    save.onclick = async () => {
      const outcome = await this.review.edit(item, area.value);
      if (outcome.kind === "validation_error") {
        error.textContent = outcome.message;
        return; // no API call was made; the item stays pending
      }
      await this.refresh();
    };
    slot.append(area, save, error);
    area.focus();
  }

  async decide(kind: "approve" | "reject"): Promise<void> {
    const item = this.queue.selected();
    if (!item) return;
    const outcome =
      kind === "approve"
        ? await this.review.approve(item)
        : await this.review.reject(item);
    if (outcome.kind === "decided") {
      this.setNotice("info", `${item.item_id} ${outcome.item.status}`);
    }
    await this.refresh();
  }

  setNotice(kind: "info" | "error", text: string): void {
    const node = this.root.querySelector("#notice") as HTMLElement;
    node.className = kind;
    node.textContent = text;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = new App(new ApiClient(""), document.getElementById("app")!);
  app.start();
}
