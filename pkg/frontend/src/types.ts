/** DTOs for the /api/v1 surface. */

export interface CategoryDoc {
  id: string;
  name: string;
  definition: string;
  exemplar_ids: string[];
  is_other: boolean;
}

export interface CodebookDoc {
  categories: CategoryDoc[];
  model_binding: string | null;
}

export interface ProjectSummary {
  id: string;
  revision: number;
  responses: number;
  codebook: CodebookDoc | null;
  embed_run: { model_id: string; instruction: string } | null;
  assignments: number;
  has_audit: boolean;
}

export interface ConfusionDoc {
  categories: string[];
  counts: number[][];
}

export interface MetricsReportDoc {
  n_scored: number;
  f1_micro: number;
  f1_macro: number;
  f1_weighted: number;
  kappa: number;
  mcc: number;
  per_class_f1: Record<string, number>;
  confusion: ConfusionDoc;
}

export interface AssignmentDoc {
  response_id: string;
  category_id: string;
  similarity: Record<string, number>;
  confidence: Record<string, number>;
}

export interface AuditNeighborDoc {
  response_id: string;
  code: string;
  distance: number;
}

export interface AuditFlagDoc {
  response_id: string;
  code: string;
  neighbors: AuditNeighborDoc[];
}

export interface AuditReportDoc {
  project_id: string;
  threshold: number;
  model_id: string;
  code_source: string;
  created_at_revision: number;
  flag_count: number;
  flags: AuditFlagDoc[];
  conflict_components: string[][];
}

export interface AuditSummaryDoc {
  project: string;
  revision: number;
  flagged: number;
  resolved: number;
  reclassified: number;
  outstanding: number;
}

export interface JobDoc {
  id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  result_ref: Record<string, unknown> | null;
  error: string | null;
}

export interface ProjectionPointDoc {
  id: string;
  x: number;
  y: number;
  code: string | null;
  predicted: string | null;
}

export interface ProjectionDoc {
  method: string;
  model_id: string;
  seed: number;
  params: Record<string, unknown>;
  points: ProjectionPointDoc[];
}

export interface ResolutionItem {
  response_id: string;
  new_code: string;
  resolver?: string;
  note?: string;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  details?: unknown;
}
