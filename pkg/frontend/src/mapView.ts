/** SVG scatter renderer for the embedding map with lasso selection. */

import { clear, el, svgEl } from "./dom.js";
import type { EmbeddingMap } from "./map.js";

export interface MapCallbacks {
  onInspect: (responseId: string, text: string) => void;
  onAddAsExemplar: (responseIds: string[]) => void;
}

const WIDTH = 760;
const HEIGHT = 520;
const PAD = 24;

export function renderMap(
  container: HTMLElement,
  map: EmbeddingMap,
  callbacks: MapCallbacks,
): void {
  clear(container);
  const points = map.points;
  if (points.length === 0) {
    container.append(el("p", { class: "muted" }, "No projection yet. Run one first."));
    return;
  }

  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const sx = (x: number) =>
    PAD + ((x - xMin) / Math.max(xMax - xMin, 1e-12)) * (WIDTH - 2 * PAD);
  const sy = (y: number) =>
    HEIGHT - PAD - ((y - yMin) / Math.max(yMax - yMin, 1e-12)) * (HEIGHT - 2 * PAD);

  const svg = svgEl("svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    class: "map-canvas",
  });

  for (const point of points) {
    const circle = svgEl("circle", {
      cx: String(sx(point.x)),
      cy: String(sy(point.y)),
      r: map.selection.has(point.id) ? "5" : "3",
      fill: map.colorOf(point),
      stroke: map.selection.has(point.id) ? "#111" : "none",
      "data-id": point.id,
    });
    circle.addEventListener("click", () => {
      map.selectOne(point.id);
      callbacks.onInspect(point.id, map.textOf(point.id));
      renderMap(container, map, callbacks);
    });
    svg.append(circle);
  }

  // lasso: freehand polygon in screen space, mapped back to data space
  let lasso: [number, number][] = [];
  let drawing = false;
  const lassoPath = svgEl("path", { class: "lasso", d: "" });
  svg.append(lassoPath);

  const toData = (event: MouseEvent): [number, number] => {
    const rect = svg.getBoundingClientRect();
    const px = ((event.clientX - rect.left) / rect.width) * WIDTH;
    const py = ((event.clientY - rect.top) / rect.height) * HEIGHT;
    const x = xMin + ((px - PAD) / (WIDTH - 2 * PAD)) * (xMax - xMin);
    const y = yMin + ((HEIGHT - PAD - py) / (HEIGHT - 2 * PAD)) * (yMax - yMin);
    return [x, y];
  };

  svg.addEventListener("mousedown", (event) => {
    if ((event.target as Element).tagName === "circle") return;
    drawing = true;
    lasso = [toData(event)];
  });
  svg.addEventListener("mousemove", (event) => {
    if (!drawing) return;
    lasso.push(toData(event));
    lassoPath.setAttribute(
      "d",
      lasso
        .map(([x, y], i) => `${i === 0 ? "M" : "L"}${sx(x)},${sy(y)}`)
        .join(" "),
    );
  });
  svg.addEventListener("mouseup", () => {
    if (!drawing) return;
    drawing = false;
    if (lasso.length >= 3) {
      const ids = map.lassoSelect(lasso);
      if (ids.length > 0) callbacks.onAddAsExemplar(ids);
      renderMap(container, map, callbacks);
    }
    lasso = [];
  });

  container.append(svg);
}
