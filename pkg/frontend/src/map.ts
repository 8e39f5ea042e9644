/** Embedding map state: 2-D points colored by human or predicted code,
 * lasso selection, and a select-to-add-as-exemplar hook for the workbench.
 * Rendering lives in mapView.ts; this module is DOM-free. */

import type { ApiClient } from "./api.js";
import type { ProjectionDoc, ProjectionPointDoc } from "./types.js";

const PALETTE = [
  "#4e79a7",
  "#f28e2b",
  "#59a14f",
  "#e15759",
  "#b07aa1",
  "#76b7b2",
  "#edc948",
  "#9c755f",
];

export type ColorSource = "human" | "predicted";

export function pointInPolygon(point: [number, number], polygon: [number, number][]): boolean {
  // ray casting; boundary points count as inside closely enough for a lasso
  const [x, y] = point;
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, yi] = polygon[i]!;
    const [xj, yj] = polygon[j]!;
    const crosses = yi > y !== yj > y && x < ((xj - xi) * (y - yi)) / (yj - yi) + xi;
    if (crosses) inside = !inside;
  }
  return inside;
}

export class EmbeddingMap {
  projection: ProjectionDoc | null = null;
  texts = new Map<string, string>();
  colorSource: ColorSource = "human";
  selection = new Set<string>();
  private colorIndex = new Map<string, string>();

  async load(client: ApiClient, projectId: string): Promise<void> {
    this.projection = await client.getProjection(projectId);
    const jsonl = await client.exportJsonl(projectId);
    this.texts.clear();
    for (const line of jsonl.split("\n")) {
      if (!line.trim()) continue;
      const doc = JSON.parse(line) as { id: string; text: string };
      this.texts.set(doc.id, doc.text);
    }
    this.rebuildPalette();
  }

  get points(): ProjectionPointDoc[] {
    return this.projection?.points ?? [];
  }

  /** Flips the color source; coordinates are untouched (no refetch). */
  toggleColorSource(): ColorSource {
    this.colorSource = this.colorSource === "human" ? "predicted" : "human";
    return this.colorSource;
  }

  codeOf(point: ProjectionPointDoc): string | null {
    return this.colorSource === "human" ? point.code : point.predicted;
  }

  private rebuildPalette(): void {
    this.colorIndex.clear();
    const codes = new Set<string>();
    for (const p of this.points) {
      if (p.code) codes.add(p.code);
      if (p.predicted) codes.add(p.predicted);
    }
    [...codes].sort().forEach((code, i) => {
      this.colorIndex.set(code, PALETTE[i % PALETTE.length]!);
    });
  }

  colorOf(point: ProjectionPointDoc): string {
    const code = this.codeOf(point);
    return (code && this.colorIndex.get(code)) || "#888888";
  }

  textOf(responseId: string): string {
    return this.texts.get(responseId) ?? "";
  }

  /** Replace the selection with all points inside the lasso polygon. */
  lassoSelect(polygon: [number, number][]): string[] {
    this.selection = new Set(
      this.points.filter((p) => pointInPolygon([p.x, p.y], polygon)).map((p) => p.id),
    );
    return [...this.selection].sort();
  }

  selectOne(responseId: string): void {
    this.selection = new Set([responseId]);
  }

  clearSelection(): void {
    this.selection.clear();
  }
}
