/** Typed client for the engine's HTTP API. Every UI state change goes
 * through these calls; nothing talks to the server any other way. */

import type {
  AssignmentDoc,
  AuditReportDoc,
  AuditSummaryDoc,
  CodebookDoc,
  ErrorEnvelope,
  JobDoc,
  MetricsReportDoc,
  ProjectionDoc,
  ProjectSummary,
  ResolutionItem,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly details: unknown;

  constructor(status: number, envelope: ErrorEnvelope) {
    super(envelope.message);
    this.status = status;
    this.code = envelope.code;
    this.details = envelope.details;
  }

  get isStaleRevision(): boolean {
    return this.code === "stale_revision";
  }
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}/api/v1${path}`, init);
    const text = await response.text();
    if (!response.ok) {
      let envelope: ErrorEnvelope;
      try {
        envelope = JSON.parse(text) as ErrorEnvelope;
      } catch {
        envelope = { code: "http", message: `${response.status}: ${text.slice(0, 200)}` };
      }
      throw new ApiError(response.status, envelope);
    }
    return (text ? JSON.parse(text) : null) as T;
  }

  private json(body: unknown): RequestInit {
    return {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    };
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  createProject(name: string): Promise<{ id: string; revision: number }> {
    return this.request("/projects", this.json({ name }));
  }

  getProject(id: string): Promise<ProjectSummary> {
    return this.request(`/projects/${id}`);
  }

  uploadResponsesCsv(
    id: string,
    csv: string,
    codeColumn?: string,
  ): Promise<{ imported: number; revision: number }> {
    const query = codeColumn ? `?format=csv&code_column=${codeColumn}` : "?format=csv";
    return this.request(`/projects/${id}/responses${query}`, {
      method: "POST",
      headers: { "Content-Type": "text/csv" },
      body: csv,
    });
  }

  putCodebook(id: string, codebook: CodebookDoc): Promise<{ revision: number }> {
    return this.request(`/projects/${id}/codebook`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(codebook),
    });
  }

  startEmbed(id: string, instructionPreset?: string): Promise<JobDoc> {
    return this.request(
      `/projects/${id}/embed`,
      this.json(instructionPreset ? { instruction_preset: instructionPreset } : {}),
    );
  }

  classify(
    id: string,
    mode: "selective" | "exhaustive",
    temperature = 1.0,
  ): Promise<{ classified: number; revision: number }> {
    return this.request(`/projects/${id}/classify`, this.json({ mode, temperature }));
  }

  getMetrics(id: string, dropOther = false): Promise<MetricsReportDoc> {
    return this.request(`/projects/${id}/metrics${dropOther ? "?drop=O" : ""}`);
  }

  getAssignments(id: string): Promise<AssignmentDoc[]> {
    return this.request(`/projects/${id}/assignments`);
  }

  startAudit(id: string, threshold = 0.15, codeSource = "human"): Promise<JobDoc> {
    return this.request(
      `/projects/${id}/audit`,
      this.json({ threshold, code_source: codeSource }),
    );
  }

  getAudit(id: string): Promise<AuditReportDoc> {
    return this.request(`/projects/${id}/audit`);
  }

  getAuditSummary(id: string): Promise<AuditSummaryDoc> {
    return this.request(`/projects/${id}/audit/summary`);
  }

  postResolutions(
    id: string,
    revision: number,
    resolutions: ResolutionItem[],
  ): Promise<{ applied: number; revision: number; summary?: Record<string, number> }> {
    return this.request(`/projects/${id}/audit/resolutions`, {
      method: "POST",
      headers: { "Content-Type": "application/json", "If-Match": String(revision) },
      body: JSON.stringify({ resolutions }),
    });
  }

  startAdapterTrain(id: string, hyperparams?: Record<string, number>): Promise<JobDoc> {
    return this.request(
      `/projects/${id}/adapter/train`,
      this.json(hyperparams ? { hyperparams } : {}),
    );
  }

  startProjection(
    id: string,
    method: "pca" | "tsne",
    params: Record<string, number> = {},
  ): Promise<JobDoc> {
    return this.request(`/projects/${id}/projection`, this.json({ method, params }));
  }

  getProjection(id: string): Promise<ProjectionDoc> {
    return this.request(`/projects/${id}/projection`);
  }

  getJob(jobId: string): Promise<JobDoc> {
    return this.request(`/jobs/${jobId}`);
  }

  async exportJsonl(id: string): Promise<string> {
    const response = await fetch(`${this.baseUrl}/api/v1/projects/${id}/export?format=jsonl`);
    if (!response.ok) {
      throw new ApiError(response.status, { code: "http", message: await response.text() });
    }
    return response.text();
  }
}
