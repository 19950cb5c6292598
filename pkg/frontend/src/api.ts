/** Thin typed client over the steering service; every mutation waits for the
 * server's acknowledgement (no optimistic updates anywhere). */

import type {
  ActivationsPayload,
  ExplanationPayload,
  MetricsPayload,
  SplitResponse,
  TrainStatus,
  TreePayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** 409: the server refused a mutation (training in progress, non-leaf split, ...). */
export class ConflictError extends ApiError {}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw response.status === 409 ? new ConflictError(409, detail) : new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown, method = "POST"): Promise<T> {
    return this.request<T>(path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  fetchTree(): Promise<TreePayload> {
    return this.request("/model/tree");
  }

  fetchActivations(split = "test", k = 1): Promise<ActivationsPayload> {
    return this.request(`/model/activations?split=${encodeURIComponent(split)}&k=${k}`);
  }

  fetchExplanation(instance: number, split = "test"): Promise<ExplanationPayload> {
    return this.request(`/model/explain/${instance}?split=${encodeURIComponent(split)}`);
  }

  fetchMetrics(split = "test"): Promise<MetricsPayload> {
    return this.request(`/model/metrics?split=${encodeURIComponent(split)}`);
  }

  splitNode(nodeId: number, m: number, seed = 0): Promise<SplitResponse> {
    return this.post(`/prototypes/${nodeId}/split`, { M: m, seed });
  }

  patchPattern(nodeId: number, pattern: number[], lock: boolean): Promise<{ revision: number }> {
    return this.post(`/prototypes/${nodeId}/pattern`, { pattern, lock }, "PATCH");
  }

  startTraining(overrides: Record<string, unknown> = {}): Promise<{ job_id: number }> {
    return this.post("/train", overrides);
  }

  trainStatus(): Promise<TrainStatus> {
    return this.request("/train/status");
  }

  saveCheckpoint(path: string): Promise<{ saved: string; revision: number }> {
    return this.post("/checkpoint/save", { path });
  }

  loadCheckpoint(path: string): Promise<{ loaded: string; revision: number }> {
    return this.post("/checkpoint/load", { path });
  }
}
