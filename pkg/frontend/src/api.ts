/** Typed client for the review service HTTP API. The UI never computes psi,
 * suggestions, or neighbour sets itself; every number on screen comes from
 * these payloads. */

export interface ItemSummary {
  id: string;
  observed_label: number;
  observed_name: string;
  suggested_label: number;
  suggested_name: string;
  psi: number;
  status: "pending" | "accepted" | "rejected" | "relabeled";
  confirm: boolean;
}

export interface Neighbor {
  id: string;
  label: number;
  label_name: string;
  distance: number;
  xy: [number, number];
}

export interface ItemDetail extends ItemSummary {
  context: string | null;
  head_span: [number, number] | null;
  tail_span: [number, number] | null;
  probs: number[];
  neighbors: Neighbor[];
  xy: [number, number];
  decided_label: number | null;
}

export interface QueuePage {
  total: number;
  offset: number;
  items: ItemSummary[];
}

export type DecisionAction = "accept-suggestion" | "reject" | "relabel";

export class ConflictError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ConflictError";
  }
}

export class ServiceUnreachable extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ServiceUnreachable";
  }
}

export interface ApiClient {
  getQueue(limit: number, offset: number, status?: string): Promise<QueuePage>;
  getItem(id: string): Promise<ItemDetail>;
  postDecision(id: string, action: DecisionAction, label?: number | string): Promise<ItemSummary>;
  recompute(): Promise<{ changed: number }>;
  exportData(): Promise<{ datastore: string; change_log: string; changes: number }>;
}

export class HttpApiClient implements ApiClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ServiceUnreachable(String(err));
    }
    if (response.status === 409) {
      const body = await response.json();
      throw new ConflictError(body.detail ?? "already decided");
    }
    if (!response.ok) {
      throw new Error(`service error ${response.status}`);
    }
    return (await response.json()) as T;
  }

  getQueue(limit: number, offset: number, status = "pending"): Promise<QueuePage> {
    const params = new URLSearchParams({
      limit: String(limit),
      offset: String(offset),
      status,
    });
    return this.request(`/queue?${params}`);
  }

  getItem(id: string): Promise<ItemDetail> {
    return this.request(`/item/${encodeURIComponent(id)}`);
  }

  postDecision(id: string, action: DecisionAction, label?: number | string): Promise<ItemSummary> {
    return this.request(`/item/${encodeURIComponent(id)}/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(label === undefined ? { action } : { action, label }),
    });
  }

  recompute(): Promise<{ changed: number }> {
    return this.request("/recompute", { method: "POST" });
  }

  exportData(): Promise<{ datastore: string; change_log: string; changes: number }> {
    return this.request("/export");
  }
}
