/** Audit review queue: conflict components presented one at a time; the
 * reviewer keeps, confirms, or reclassifies each response. Submissions carry
 * the revision they were decided against; a stale revision surfaces as a
 * reload prompt and never silently overwrites. */

import { ApiError, type ApiClient } from "./api.js";
import type {
  AuditReportDoc,
  AuditSummaryDoc,
  ResolutionItem,
} from "./types.js";

export type Decision =
  | { action: "keep" }
  | { action: "confirm" }
  | { action: "reclassify"; newCode: string };

export interface SubmitOutcome {
  applied: number;
  revision: number;
  summary: AuditSummaryDoc;
}

export class StaleRevisionConflict extends Error {
  constructor(readonly serverMessage: string) {
    super(`revision conflict: ${serverMessage}; reload required, decisions kept`);
  }
}

export class AuditQueue {
  report: AuditReportDoc | null = null;
  revision = 0;
  cursor = 0;
  decisions = new Map<string, Decision>();
  needsReload = false;

  async load(client: ApiClient, projectId: string): Promise<void> {
    const [report, project] = await Promise.all([
      client.getAudit(projectId),
      client.getProject(projectId),
    ]);
    this.report = report;
    this.revision = project.revision;
    this.cursor = Math.min(this.cursor, Math.max(report.conflict_components.length - 1, 0));
    this.needsReload = false;
  }

  get componentCount(): number {
    return this.report?.conflict_components.length ?? 0;
  }

  get currentComponent(): string[] {
    if (!this.report || this.componentCount === 0) return [];
    return this.report.conflict_components[this.cursor] ?? [];
  }

  codeOf(responseId: string): string | null {
    const flag = this.report?.flags.find((f) => f.response_id === responseId);
    return flag ? flag.code : null;
  }

  neighborsOf(responseId: string) {
    return this.report?.flags.find((f) => f.response_id === responseId)?.neighbors ?? [];
  }

  decide(responseId: string, decision: Decision): void {
    this.decisions.set(responseId, decision);
  }

  advance(): void {
    if (this.cursor + 1 < this.componentCount) this.cursor += 1;
  }

  back(): void {
    if (this.cursor > 0) this.cursor -= 1;
  }

  /** Resolutions for the current component; "keep" produces none. */
  pendingResolutions(): ResolutionItem[] {
    const out: ResolutionItem[] = [];
    for (const rid of this.currentComponent) {
      const decision = this.decisions.get(rid);
      if (!decision || decision.action === "keep") continue;
      const code = this.codeOf(rid);
      if (code === null) continue;
      out.push({
        response_id: rid,
        new_code: decision.action === "confirm" ? code : decision.newCode,
      });
    }
    return out;
  }

  /** Submit the current component's decisions with optimistic concurrency.
   * On a stale revision the decisions stay in place and the caller gets a
   * reload prompt; nothing is overwritten. */
  async submit(client: ApiClient, projectId: string): Promise<SubmitOutcome> {
    if (!this.report) throw new Error("no audit report loaded");
    const resolutions = this.pendingResolutions();
    let applied = 0;
    try {
      const result = await client.postResolutions(projectId, this.revision, resolutions);
      applied = result.applied;
      this.revision = result.revision;
    } catch (error) {
      if (error instanceof ApiError && error.isStaleRevision) {
        this.needsReload = true;
        throw new StaleRevisionConflict(error.message);
      }
      throw error;
    }
    for (const rid of this.currentComponent) this.decisions.delete(rid);
    this.advance();
    const summary = await client.getAuditSummary(projectId);
    return { applied, revision: this.revision, summary };
  }
}
