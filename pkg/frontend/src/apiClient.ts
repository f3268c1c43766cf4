/**
 * Typed client for the notefill service HTTP API.
 *
 * fetch is injectable so tests can run against an in-memory mock server.
 */

import { MaskPatternJson } from "./maskPattern.js";
import { JobMessage, parseSseStream } from "./streamReplay.js";
import { TokenGrid, decodeBase64Grid, encodeGridBase64 } from "./tokenGrid.js";

export interface ModelInfo {
  name: string;
  steps: number;
  tracks: number;
  vocab_sizes: number[];
  timesteps: number;
}

export interface JobDescriptor {
  job_id: string;
  kind: string;
  status: "pending" | "running" | "done" | "failed";
  error: string | null;
  result_piece_id: string | null;
  trace_length: number;
}

export interface JobRequest {
  kind: "sample" | "infill" | "accompany" | "guide";
  model: string;
  steps: number;
  seed?: number;
  piece_id?: string;
  mask?: MaskPatternJson | "central512" | "all";
  tracks?: number[];
  density_targets?: number | number[];
  scale?: number;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

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
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listModels(): Promise<{ models: ModelInfo[] }> {
    return this.request("/models");
  }

  async uploadPiece(grid: TokenGrid, name: string): Promise<string> {
    const body = { name, data_b64: encodeGridBase64(grid) };
    const out = await this.request<{ piece_id: string }>("/pieces", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return out.piece_id;
  }

  async downloadPiece(pieceId: string): Promise<TokenGrid> {
    const out = await this.request<{ data_b64: string }>(`/pieces/${pieceId}`);
    return decodeBase64Grid(out.data_b64);
  }

  async startJob(requestBody: JobRequest): Promise<string> {
    const out = await this.request<{ job_id: string }>("/jobs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(requestBody),
    });
    return out.job_id;
  }

  jobStatus(jobId: string): Promise<JobDescriptor> {
    return this.request(`/jobs/${jobId}`);
  }

  cancelJob(jobId: string): Promise<JobDescriptor> {
    return this.request(`/jobs/${jobId}/cancel`, { method: "POST" });
  }

  /** Stream job messages; yields every message from the start of the job. */
  async *streamJob(jobId: string): AsyncGenerator<JobMessage> {
    const response = await this.fetchImpl(`${this.baseUrl}/jobs/${jobId}/stream`);
    if (!response.ok || response.body === null) {
      throw new ApiError(response.status, "stream unavailable");
    }
    yield* parseSseStream(response.body.getReader());
  }
}
