import type { DecisionBody, MetricsReport, Progress, QueueItem } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client for the verification API. */
export class ApiClient {
  constructor(
    private baseUrl = "",
    private token: string | null = null,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async parse<T>(resp: Response): Promise<T> {
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      // non-JSON error body; fall through with the status alone
    }
    if (!resp.ok) {
      const message =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new ApiError(resp.status, message);
    }
    return body as T;
  }

  async listItems(params: { status?: string; iteration?: number } = {}): Promise<QueueItem[]> {
    const query = new URLSearchParams();
    if (params.status) query.set("status", params.status);
    if (params.iteration !== undefined) query.set("iteration", String(params.iteration));
    const qs = query.toString();
    const resp = await this.fetchImpl(`${this.baseUrl}/api/items${qs ? "?" + qs : ""}`, {
      headers: this.headers(),
    });
    return this.parse<QueueItem[]>(resp);
  }

  async decide(itemId: string, body: DecisionBody): Promise<QueueItem> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}/decision`,
      { method: "POST", headers: this.headers(true), body: JSON.stringify(body) },
    );
    return this.parse<QueueItem>(resp);
  }

  async progress(): Promise<Progress> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/progress`, {
      headers: this.headers(),
    });
    return this.parse<Progress>(resp);
  }

  /** null when the server has no report yet (404 empty state). */
  async metrics(): Promise<MetricsReport | null> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/metrics`, {
      headers: this.headers(),
    });
    if (resp.status === 404) return null;
    return this.parse<MetricsReport>(resp);
  }
}
