/** Session-level UI state. Draft edits live here and never touch the server
 * until a view explicitly applies them. */

import type { CodebookDoc, MetricsReportDoc } from "./types.js";

export interface MetricsSnapshot {
  kappa: number;
  mcc: number;
  f1Weighted: number;
  nScored: number;
}

export interface MetricsDeltas {
  kappa: number;
  mcc: number;
  f1Weighted: number;
}

export function snapshotOf(report: MetricsReportDoc): MetricsSnapshot {
  return {
    kappa: report.kappa,
    mcc: report.mcc,
    f1Weighted: report.f1_weighted,
    nScored: report.n_scored,
  };
}

export function deltasBetween(
  previous: MetricsSnapshot,
  current: MetricsSnapshot,
): MetricsDeltas {
  return {
    kappa: current.kappa - previous.kappa,
    mcc: current.mcc - previous.mcc,
    f1Weighted: current.f1Weighted - previous.f1Weighted,
  };
}

export interface UiSessionState {
  activeProjectId: string | null;
  codebookDraft: CodebookDoc | null;
  metricsSnapshot: MetricsSnapshot | null;
  auditCursor: number;
  pollingJobIds: string[];
  mapView: { zoom: number; selection: string[] };
}

export function freshSession(): UiSessionState {
  return {
    activeProjectId: null,
    codebookDraft: null,
    metricsSnapshot: null,
    auditCursor: 0,
    pollingJobIds: [],
    mapView: { zoom: 1, selection: [] },
  };
}
