/** App wiring: project picker, exemplar workbench, audit queue, and the
 * embedding map, all against /api/v1 on the serving origin. */

import { ApiClient } from "./api.js";
import { AuditQueue, StaleRevisionConflict } from "./auditQueue.js";
import { clear, el, fmt, fmtDelta } from "./dom.js";
import { pollJob } from "./jobs.js";
import { EmbeddingMap } from "./map.js";
import { renderMap } from "./mapView.js";
import { freshSession } from "./state.js";
import { ExemplarWorkbench } from "./workbench.js";

const client = new ApiClient(window.location.origin);
const session = freshSession();
const workbench = new ExemplarWorkbench();
const queue = new AuditQueue();
const embeddingMap = new EmbeddingMap();

const root = document.getElementById("app")!;
const status = el("div", { class: "status" });

function setStatus(text: string, isError = false): void {
  status.textContent = text;
  status.className = isError ? "status error" : "status";
}

function tabBar(active: string, onPick: (tab: string) => void): HTMLElement {
  const bar = el("nav", { class: "tabs" });
  for (const tab of ["workbench", "audit", "map"]) {
    const button = el("button", { class: tab === active ? "tab active" : "tab" }, tab);
    button.addEventListener("click", () => onPick(tab));
    bar.append(button);
  }
  return bar;
}

async function loadProject(projectId: string): Promise<void> {
  const summary = await client.getProject(projectId);
  session.activeProjectId = projectId;
  if (summary.codebook) workbench.load(summary.codebook);
  setStatus(
    `project ${projectId}: ${summary.responses} responses, revision ${summary.revision}`,
  );
}

function renderWorkbench(panel: HTMLElement): void {
  clear(panel);
  if (!session.activeProjectId) {
    panel.append(el("p", { class: "muted" }, "Load a project first."));
    return;
  }
  let draft;
  try {
    draft = workbench.codebookDraft;
  } catch {
    panel.append(el("p", { class: "muted" }, "This project has no codebook yet."));
    return;
  }

  for (const category of draft.categories) {
    const list = el("ul", { class: "exemplars" });
    for (const rid of category.exemplar_ids) {
      const remove = el("button", { class: "mini" }, "remove");
      remove.addEventListener("click", () => {
        workbench.removeExemplar(category.id, rid);
        renderWorkbench(panel);
      });
      list.append(el("li", {}, `${rid} `, remove));
    }
    const input = el("input", { placeholder: "response id" });
    const add = el("button", { class: "mini" }, "add");
    add.addEventListener("click", () => {
      if (input.value.trim()) {
        workbench.addExemplar(category.id, input.value.trim());
        renderWorkbench(panel);
      }
    });
    panel.append(
      el(
        "section",
        { class: "category" },
        el("h3", {}, `${category.id}: ${category.name} (${category.exemplar_ids.length})`),
        el("p", { class: "muted" }, category.definition),
        list,
        el("div", { class: "row" }, input, add),
      ),
    );
  }

  const blocked = workbench.blockingCategories();
  const recompute = el("button", { class: "primary" }, "Recompute");
  if (blocked.length > 0) {
    recompute.setAttribute("disabled", "true");
    panel.append(
      el("p", { class: "error" }, `Blocked: no exemplars for ${blocked.join(", ")}`),
    );
  }
  recompute.addEventListener("click", async () => {
    try {
      setStatus("recomputing...");
      const result = await workbench.recompute(client, session.activeProjectId!);
      const deltaText = result.deltas
        ? ` (dKappa ${fmtDelta(result.deltas.kappa)}, dMCC ${fmtDelta(result.deltas.mcc)},` +
          ` dF1w ${fmtDelta(result.deltas.f1Weighted)})`
        : "";
      setStatus(
        `kappa ${fmt(result.snapshot.kappa)}, MCC ${fmt(result.snapshot.mcc)}, ` +
          `F1w ${fmt(result.snapshot.f1Weighted)}, n=${result.snapshot.nScored}${deltaText}`,
      );
    } catch (error) {
      setStatus(String(error), true);
    }
  });
  panel.append(recompute);
}

function renderAudit(panel: HTMLElement): void {
  clear(panel);
  if (!session.activeProjectId) {
    panel.append(el("p", { class: "muted" }, "Load a project first."));
    return;
  }
  const loadButton = el("button", {}, "Load audit report");
  loadButton.addEventListener("click", async () => {
    try {
      await queue.load(client, session.activeProjectId!);
      renderAudit(panel);
    } catch (error) {
      setStatus(String(error), true);
    }
  });
  panel.append(el("div", { class: "row" }, loadButton));

  if (!queue.report) return;
  if (queue.componentCount === 0) {
    panel.append(el("p", { class: "muted" }, "No conflicts: the audit is clean."));
    return;
  }
  if (queue.needsReload) {
    panel.append(
      el(
        "p",
        { class: "error" },
        "The project changed under you. Reload the report; your decisions are kept.",
      ),
    );
  }

  panel.append(
    el(
      "h3",
      {},
      `Component ${queue.cursor + 1} of ${queue.componentCount} ` +
        `(threshold ${queue.report.threshold})`,
    ),
  );
  const table = el("table", { class: "conflicts" });
  table.append(
    el(
      "tr",
      {},
      el("th", {}, "response"),
      el("th", {}, "code"),
      el("th", {}, "closest conflict"),
      el("th", {}, "decision"),
    ),
  );
  for (const rid of queue.currentComponent) {
    const neighbors = queue.neighborsOf(rid);
    const worst = neighbors.reduce(
      (best, n) => (best === null || n.distance < best.distance ? n : best),
      null as (typeof neighbors)[number] | null,
    );
    const select = el("select", {});
    select.append(el("option", { value: "keep" }, "keep"));
    select.append(el("option", { value: "confirm" }, "confirm code"));
    for (const code of new Set(neighbors.map((n) => n.code))) {
      select.append(el("option", { value: `to:${code}` }, `reclassify to ${code}`));
    }
    select.addEventListener("change", () => {
      const value = select.value;
      if (value === "keep") queue.decide(rid, { action: "keep" });
      else if (value === "confirm") queue.decide(rid, { action: "confirm" });
      else queue.decide(rid, { action: "reclassify", newCode: value.slice(3) });
    });
    table.append(
      el(
        "tr",
        {},
        el("td", {}, rid),
        el("td", {}, queue.codeOf(rid) ?? "?"),
        el(
          "td",
          {},
          worst ? `${worst.response_id} (${worst.code}) d=${worst.distance.toFixed(4)}` : "-",
        ),
        el("td", {}, select),
      ),
    );
  }
  panel.append(table);

  const submit = el("button", { class: "primary" }, "Submit decisions");
  submit.addEventListener("click", async () => {
    try {
      const outcome = await queue.submit(client, session.activeProjectId!);
      setStatus(
        `applied ${outcome.applied}; flagged ${outcome.summary.flagged}, ` +
          `resolved ${outcome.summary.resolved}, outstanding ${outcome.summary.outstanding}`,
      );
      renderAudit(panel);
    } catch (error) {
      if (error instanceof StaleRevisionConflict) {
        setStatus(error.message, true);
        renderAudit(panel);
      } else {
        setStatus(String(error), true);
      }
    }
  });
  panel.append(submit);
}

function renderMapPanel(panel: HTMLElement): void {
  clear(panel);
  if (!session.activeProjectId) {
    panel.append(el("p", { class: "muted" }, "Load a project first."));
    return;
  }
  const controls = el("div", { class: "row" });
  const compute = el("button", {}, "Compute projection (PCA)");
  compute.addEventListener("click", async () => {
    try {
      setStatus("projection running...");
      const job = await client.startProjection(session.activeProjectId!, "pca");
      session.pollingJobIds.push(job.id);
      await pollJob(client, job, { intervalMs: 1000 });
      await embeddingMap.load(client, session.activeProjectId!);
      setStatus(`projection ready: ${embeddingMap.points.length} points`);
      renderMapPanel(panel);
    } catch (error) {
      setStatus(String(error), true);
    }
  });
  const toggle = el("button", {}, `color: ${embeddingMap.colorSource}`);
  toggle.addEventListener("click", () => {
    toggle.textContent = `color: ${embeddingMap.toggleColorSource()}`;
    renderMapPanel(panel);
  });
  const loadButton = el("button", {}, "Load existing projection");
  loadButton.addEventListener("click", async () => {
    try {
      await embeddingMap.load(client, session.activeProjectId!);
      renderMapPanel(panel);
    } catch (error) {
      setStatus(String(error), true);
    }
  });
  controls.append(compute, loadButton, toggle);
  panel.append(controls);

  const inspector = el("div", { class: "inspector" });
  const canvas = el("div", { class: "map-holder" });
  renderMap(canvas, embeddingMap, {
    onInspect: (rid, text) => {
      inspector.textContent = `${rid}: ${text}`;
    },
    onAddAsExemplar: (ids) => {
      inspector.textContent = `selected ${ids.length}: ${ids.slice(0, 8).join(", ")}` +
        (ids.length > 8 ? "..." : "");
      session.mapView.selection = ids;
    },
  });
  panel.append(canvas, inspector);
}

function renderApp(activeTab = "workbench"): void {
  clear(root as HTMLElement);
  const picker = el("div", { class: "row picker" });
  const input = el("input", { placeholder: "project id", value: session.activeProjectId ?? "" });
  const loadButton = el("button", {}, "Load");
  loadButton.addEventListener("click", async () => {
    try {
      await loadProject(input.value.trim());
      renderApp(activeTab);
    } catch (error) {
      setStatus(String(error), true);
    }
  });
  picker.append(input, loadButton);

  const panel = el("main", { class: "panel" });
  const tabs = tabBar(activeTab, (tab) => renderApp(tab));
  root.append(el("h1", {}, "embedcode"), picker, status, tabs, panel);
  if (activeTab === "workbench") renderWorkbench(panel);
  else if (activeTab === "audit") renderAudit(panel);
  else renderMapPanel(panel);
}

renderApp();
