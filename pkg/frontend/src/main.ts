/** Browser wiring: fetch state from the steering service, render panels,
 * and translate expert actions into API mutations. Every mutation waits for
 * the server; a stale revision shows a refresh prompt instead of silently
 * overwriting anything. */

import { ApiClient, ApiError, ConflictError } from "./api.js";
import { renderActivationBars, stackTotal } from "./activationView.js";
import { EDITOR_H, editorScale, renderEditor } from "./patternEditor.js";
import { pixelToValue } from "./sparkline.js";
import {
  AppState,
  beginEdit,
  canSplit,
  cancelEdit,
  initialState,
  isStale,
  toggleLock,
  updateCurvePoint,
  validateCurve,
} from "./state.js";
import { renderTree } from "./treeView.js";
import { createPoller } from "./polling.js";

const api = new ApiClient("");
const state: AppState = initialState();

const el = (id: string) => document.getElementById(id)!;

async function refreshAll(): Promise<void> {
  const [tree, metrics, activations] = await Promise.all([
    api.fetchTree(),
    api.fetchMetrics("test"),
    api.fetchActivations("test", 12),
  ]);
  state.tree = tree;
  state.activations = activations;
  state.stale = false;
  if (state.selected !== null && !tree.nodes.some((n) => n.id === state.selected)) {
    state.selected = null;
    state.editor = null;
  }
  el("metrics").textContent =
    `test MAE ${metrics.mae.toFixed(4)} · MSE ${metrics.mse.toFixed(4)} · revision ${tree.revision}`;
  renderAll();
}

function renderAll(): void {
  renderBanner();
  renderTreePanel();
  renderDetailPanel();
  renderActivationPanel();
}

function renderBanner(): void {
  const banner = el("banner");
  if (state.stale) {
    banner.innerHTML =
      `<span>the model changed on the server — this view is stale</span>` +
      `<button id="refresh-btn">refresh</button>`;
    banner.className = "banner stale";
    el("refresh-btn").onclick = () => void guardedRefresh();
  } else if (state.banner) {
    banner.innerHTML = `<span>${state.banner}</span><button id="dismiss-btn">dismiss</button>`;
    banner.className = "banner error";
    el("dismiss-btn").onclick = () => {
      state.banner = null;
      renderBanner();
    };
  } else {
    banner.innerHTML = "";
    banner.className = "banner";
  }
}

async function guardedRefresh(): Promise<void> {
  if (state.editor?.dirty && !window.confirm("discard unsaved pattern edits?")) return;
  state.editor = null;
  await refreshAll();
}

function renderTreePanel(): void {
  if (!state.tree) return;
  el("tree-panel").innerHTML = renderTree(state.tree, state.selected);
  for (const card of document.querySelectorAll<SVGGElement>(".node-card")) {
    card.addEventListener("click", () => {
      selectNode(Number(card.dataset.node));
    });
  }
}

function selectNode(nodeId: number): void {
  if (state.editor?.dirty && !window.confirm("discard unsaved pattern edits?")) return;
  state.selected = nodeId;
  state.editor = null;
  renderAll();
}

function renderDetailPanel(): void {
  const panel = el("detail-panel");
  if (!state.tree || state.selected === null) {
    panel.innerHTML = "<p class=\"hint\">select a prototype to inspect, split, or edit it</p>";
    return;
  }
  const node = state.tree.nodes.find((n) => n.id === state.selected)!;
  const splittable = canSplit(state.tree, node.id);
  const header =
    `<h2>${node.label ?? `prototype ${node.id}`}` +
    (node.pattern_locked ? ` <span class="badge">locked</span>` : "") +
    (node.is_leaf ? "" : ` <span class="badge internal">internal</span>`) +
    `</h2>`;
  const actions =
    `<div class="actions">` +
    `<button id="split-btn" ${splittable ? "" : "disabled title=\"only leaves can be split\""}>split into 2</button>` +
    `<button id="edit-btn">edit pattern</button>` +
    `</div>`;

  if (!state.editor || state.editor.nodeId !== node.id) {
    panel.innerHTML = header + actions + `<div id="editor-host"></div>`;
    el("split-btn").onclick = () => void doSplit(node.id);
    el("edit-btn").onclick = () => {
      state.editor = beginEdit(state.tree!, node.id);
      renderDetailPanel();
    };
    return;
  }

  const editor = state.editor;
  const error = validateCurve(editor.curve, state.tree.period);
  panel.innerHTML =
    header +
    `<div id="editor-host">${renderEditor(editor)}</div>` +
    `<div class="editor-controls">` +
    `<label><input type="checkbox" id="lock-box" ${editor.lock ? "checked" : ""}/> lock against training</label>` +
    `<span class="dirty">${editor.dirty ? "unsaved changes" : ""}</span>` +
    (error ? `<span class="field-error">${error}</span>` : "") +
    `<button id="save-btn" ${error ? "disabled" : ""}>save</button>` +
    `<button id="cancel-btn">cancel</button>` +
    `</div>`;
  wireEditorEvents();
}

function wireEditorEvents(): void {
  const editor = state.editor!;
  el("lock-box").onchange = () => {
    state.editor = toggleLock(editor);
    renderDetailPanel();
  };
  el("save-btn").onclick = () => void doSavePattern();
  el("cancel-btn").onclick = () => {
    state.editor = cancelEdit(state.editor!);
    renderDetailPanel();
  };

  const svg = document.querySelector<SVGSVGElement>(".editor-canvas")!;
  let dragging: number | null = null;
  svg.addEventListener("pointerdown", (ev) => {
    const target = ev.target as SVGElement;
    if (target.classList.contains("editor-handle")) {
      dragging = Number(target.dataset.point);
      svg.setPointerCapture(ev.pointerId);
    }
  });
  svg.addEventListener("pointermove", (ev) => {
    if (dragging === null || !state.editor) return;
    const rect = svg.getBoundingClientRect();
    const scale = editorScale(state.editor);
    const value = pixelToValue(ev.clientY - rect.top, EDITOR_H, scale.lo, scale.hi, 10);
    state.editor = updateCurvePoint(state.editor, dragging, Number(value.toFixed(4)));
    renderDetailPanel();
  });
  svg.addEventListener("pointerup", () => {
    dragging = null;
  });
}

async function doSplit(nodeId: number): Promise<void> {
  try {
    await api.splitNode(nodeId, 2);
    await refreshAll();
  } catch (err) {
    showError(err);
  }
}

async function doSavePattern(): Promise<void> {
  const editor = state.editor;
  if (!editor || !state.tree) return;
  const error = validateCurve(editor.curve, state.tree.period);
  if (error) {
    state.banner = error;
    renderBanner();
    return;
  }
  try {
    await api.patchPattern(editor.nodeId, editor.curve, editor.lock);
    state.editor = null;
    await refreshAll();
  } catch (err) {
    showError(err);
  }
}

function showError(err: unknown): void {
  if (err instanceof ConflictError) state.banner = `conflict: ${err.detail}`;
  else if (err instanceof ApiError) state.banner = err.detail;
  else state.banner = String(err);
  renderBanner();
}

function renderActivationPanel(): void {
  if (!state.activations) return;
  const host = el("activation-panel");
  const entries = state.activations.entries.slice(0, 400);
  host.innerHTML = renderActivationBars(entries, host.clientWidth || 760, 140);
  const worst = Math.max(...entries.map((e) => Math.abs(1 - stackTotal(e))), 0);
  el("activation-note").textContent =
    `${entries.length} test instances; worst per-instance weight-sum deviation ${worst.toExponential(1)}`;
  for (const rect of host.querySelectorAll<SVGRectElement>("rect[data-instance]")) {
    rect.addEventListener("mouseenter", () => void showExplanation(Number(rect.dataset.instance)));
  }
}

let lastExplained: number | null = null;
async function showExplanation(instanceIndex: number): Promise<void> {
  if (!state.activations || lastExplained === instanceIndex) return;
  lastExplained = instanceIndex;
  const position = state.activations.entries.findIndex((e) => e.instance_index === instanceIndex);
  if (position < 0) return;
  try {
    const exp = await api.fetchExplanation(position, "test");
    el("explanation").innerHTML =
      `<strong>instance ${instanceIndex}</strong> — contributions: ` +
      exp.contributions
        .filter((c) => c.weight > 1e-4)
        .map((c) => `leaf ${c.leaf_id} (${(100 * c.weight).toFixed(1)}%)`)
        .join(", ");
  } catch (err) {
    showError(err);
  }
}

const statusPoller = createPoller(async () => {
  try {
    const status = await api.trainStatus();
    state.training = status;
    const pill = el("train-status");
    pill.textContent =
      status.status === "running"
        ? `training ${(100 * status.progress).toFixed(0)}%`
        : status.status === "failed"
          ? `training failed: ${status.message}`
          : "idle";
    pill.className = `pill ${status.status}`;
    if (state.tree && isStale(state.tree.revision, status.revision)) {
      state.stale = true;
      renderBanner();
    }
  } catch {
    /* the service may be restarting; keep polling */
  }
}, 1500);

el("train-btn").onclick = async () => {
  try {
    await api.startTraining({});
    state.banner = null;
    renderBanner();
  } catch (err) {
    showError(err);
  }
};

window.addEventListener("beforeunload", (ev) => {
  if (state.editor?.dirty) ev.preventDefault();
});

void refreshAll().catch(showError);
statusPoller.start();
