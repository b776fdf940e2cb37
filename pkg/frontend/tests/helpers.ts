import type { MetricsReport, Progress, QueueItem } from "../src/types.js";

export function makeItem(overrides: Partial<QueueItem> = {}): QueueItem {
  return {
    item_id: "i0@1",
    instance_id: "i0",
    source_text: "source text zero",
    candidate_text: "candidate text zero",
    iteration: 1,
    provenance: "cluster",
    status: "pending",
    final_text: null,
    annotator: "",
    decided_at: null,
    cluster_id: 3,
    informativeness: 0.42,
    superseded_by: null,
    ...overrides,
  };
}

export function makeItems(n: number, iteration = 1): QueueItem[] {
  return Array.from({ length: n }, (_, i) =>
    makeItem({
      item_id: `i${i}@${iteration}`,
      instance_id: `i${i}`,
      source_text: `source ${i}`,
      candidate_text: `candidate ${i}`,
      iteration,
    }),
  );
}

export function makeProgress(overrides: Partial<Progress> = {}): Progress {
  return {
    iteration: 1,
    budget_remaining: 80,
    batch_size: 20,
    strategy: "cluster",
    counts: { pending: 3, approved: 0, edited: 0, rejected: 0 },
    pool: { unlabeled: 100 },
    labeled_pairs: 0,
    ...overrides,
  };
}

export function makeReport(overrides: Partial<MetricsReport> = {}): MetricsReport {
  return {
    cs_score: 70.0,
    safe_score: 70.0,
    mtld: 12.5,
    per_group_error: { alpha: 0.2, bravo: 0.4 },
    error_ratio_variance: 0.01,
    n: 20,
    per_group_counts: { alpha: [2, 10], bravo: [4, 10] },
    ...overrides,
  };
}

type Route = (init?: RequestInit) => { status: number; body: unknown };

/** Tiny fetch stub: exact-path routing with call recording. */
export function stubFetch(routes: Record<string, Route>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    // Decode path segments the way a real server's router would.
    const raw = url.replace(/^https?:\/\/[^/]+/, "");
    const [pathPart, query] = raw.split("?", 2);
    const path = decodeURIComponent(pathPart) + (query ? "?" + query : "");
    const route = routes[path];
    if (!route) {
      return new Response(JSON.stringify({ error: `no stub for ${path}` }), {
        status: 500,
        headers: { "Content-Type": "application/json" },
      });
    }
    const { status, body } = route(init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { impl, calls };
}
