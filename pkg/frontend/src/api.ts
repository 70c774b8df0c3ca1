// Thin typed client over the service HTTP API. Every view in the UI talks
// to the engine exclusively through this module.

import type {
  ApiErrorBody,
  Job,
  KbMeta,
  Mode,
  QueryResponse,
  Report,
  Trace,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ClientOptions {
  baseUrl: string;
  bearerToken?: string;
}

export class GridCodexClient {
  private readonly baseUrl: string;
  private readonly bearerToken?: string;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.bearerToken = options.bearerToken;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.bearerToken) headers.authorization = `Bearer ${this.bearerToken}`;
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await resp.json();
    if (!resp.ok) {
      const err = payload as Partial<ApiErrorBody>;
      throw new ApiError(resp.status, err.code ?? "unknown_error", err.message ?? resp.statusText);
    }
    return payload as T;
  }

  health(): Promise<{ status: string; providers: Record<string, unknown> }> {
    return this.request("GET", "/v1/health");
  }

  listKbs(): Promise<{ kbs: KbMeta[] }> {
    return this.request("GET", "/v1/kb");
  }

  createKb(body: Record<string, unknown>): Promise<{ job_id: string }> {
    return this.request("POST", "/v1/kb", body);
  }

  job(jobId: string): Promise<Job> {
    return this.request("GET", `/v1/jobs/${jobId}`);
  }

  query(question: string, region: string, mode: Mode, k?: number): Promise<QueryResponse> {
    return this.request("POST", "/v1/query", { question, region, mode, k });
  }

  trace(traceId: string): Promise<Trace> {
    return this.request("GET", `/v1/traces/${traceId}`);
  }

  startEval(items: unknown[], modes: Mode[]): Promise<{ job_id: string }> {
    return this.request("POST", "/v1/eval", { items, modes });
  }

  report(jobId: string): Promise<Report> {
    return this.request("GET", `/v1/reports/${jobId}`);
  }

  async waitForJob(jobId: string, timeoutMs = 120_000, pollMs = 100): Promise<Job> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
      const job = await this.job(jobId);
      if (job.state === "done" || job.state === "failed") return job;
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
    throw new Error(`job ${jobId} did not finish within ${timeoutMs}ms`);
  }
}
