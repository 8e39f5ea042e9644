/** Exemplar workbench: curate per-category exemplars as a draft, recompute
 * classification + metrics on demand, and show metric deltas against the
 * previous snapshot. */

import type { ApiClient } from "./api.js";
import type { CodebookDoc, MetricsReportDoc } from "./types.js";
import {
  deltasBetween,
  snapshotOf,
  type MetricsDeltas,
  type MetricsSnapshot,
} from "./state.js";

export interface RecomputeResult {
  report: MetricsReportDoc;
  snapshot: MetricsSnapshot;
  deltas: MetricsDeltas | null;
  revision: number;
}

function cloneCodebook(codebook: CodebookDoc): CodebookDoc {
  return {
    model_binding: codebook.model_binding,
    categories: codebook.categories.map((c) => ({ ...c, exemplar_ids: [...c.exemplar_ids] })),
  };
}

export class ExemplarWorkbench {
  private draft: CodebookDoc | null = null;
  private applied: CodebookDoc | null = null;
  snapshot: MetricsSnapshot | null = null;
  lastDeltas: MetricsDeltas | null = null;
  mode: "selective" | "exhaustive" = "selective";

  load(codebook: CodebookDoc): void {
    this.applied = cloneCodebook(codebook);
    this.draft = cloneCodebook(codebook);
  }

  get codebookDraft(): CodebookDoc {
    if (!this.draft) throw new Error("workbench not loaded");
    return this.draft;
  }

  exemplarsOf(categoryId: string): string[] {
    const category = this.codebookDraft.categories.find((c) => c.id === categoryId);
    if (!category) throw new Error(`unknown category ${categoryId}`);
    return [...category.exemplar_ids];
  }

  addExemplar(categoryId: string, responseId: string): void {
    const category = this.codebookDraft.categories.find((c) => c.id === categoryId);
    if (!category) throw new Error(`unknown category ${categoryId}`);
    if (!category.exemplar_ids.includes(responseId)) {
      category.exemplar_ids.push(responseId);
      category.exemplar_ids.sort();
    }
  }

  removeExemplar(categoryId: string, responseId: string): void {
    const category = this.codebookDraft.categories.find((c) => c.id === categoryId);
    if (!category) throw new Error(`unknown category ${categoryId}`);
    category.exemplar_ids = category.exemplar_ids.filter((rid) => rid !== responseId);
  }

  swapExemplar(categoryId: string, removeId: string, addId: string): void {
    this.removeExemplar(categoryId, removeId);
    this.addExemplar(categoryId, addId);
  }

  discardDraft(): void {
    if (this.applied) this.draft = cloneCodebook(this.applied);
  }

  isDirty(): boolean {
    return JSON.stringify(this.draft) !== JSON.stringify(this.applied);
  }

  /** Category ids that would block a recompute (zero exemplars). */
  blockingCategories(): string[] {
    return this.codebookDraft.categories
      .filter((c) => c.exemplar_ids.length === 0)
      .map((c) => c.id);
  }

  /** Apply the draft, reclassify, evaluate, and report deltas vs the
   * previous snapshot. */
  async recompute(client: ApiClient, projectId: string): Promise<RecomputeResult> {
    const blocked = this.blockingCategories();
    if (blocked.length > 0) {
      throw new Error(`categories without exemplars: ${blocked.join(", ")}`);
    }
    await client.putCodebook(projectId, this.codebookDraft);
    this.applied = cloneCodebook(this.codebookDraft);
    const { revision } = await client.classify(projectId, this.mode);
    const report = await client.getMetrics(projectId, this.mode === "exhaustive");
    const snapshot = snapshotOf(report);
    const deltas = this.snapshot ? deltasBetween(this.snapshot, snapshot) : null;
    this.snapshot = snapshot;
    this.lastDeltas = deltas;
    return { report, snapshot, deltas, revision };
  }
}
