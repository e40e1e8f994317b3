/** DOM wiring for the annotator. All pixel logic lives in the other
 * modules; this file only maps events onto them and repaints.
 *
 * Mutations are strictly sequential: every server call is awaited before
 * the canvas re-renders, and the session id rides in the URL hash so a
 * reload can re-attach to the same session.
 */

import { ApiClient, ApiError, type TmhResult } from "./api.js";
import {
  addVertex,
  clearDraft,
  deleteVertex,
  initialState,
  moveVertex,
  markCommitted,
  setError,
  setLayer,
  setPupil,
  setResult,
  setTool,
  validateDraft,
  type CanvasState,
  type Layer,
  type Tool,
} from "./state.js";
import { commitPolygon, layerAsset } from "./flow.js";
import {
  identityView,
  imageToScreen,
  pan,
  screenToImage,
  zoomStep,
  type ViewTransform,
} from "./view.js";

const client = new ApiClient("");

let state: CanvasState = initialState();
let view: ViewTransform = identityView();
let sessionId: string | null = null;
let imageBitmap: ImageBitmap | null = null;
let edgeBitmap: ImageBitmap | null = null;
let maskBitmap: ImageBitmap | null = null;
let dragVertexIndex = -1;
let panAnchor: [number, number] | null = null;
let repairTimer: number | undefined;

const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const errorBox = document.getElementById("error") as HTMLDivElement;
const readout = document.getElementById("readout") as HTMLDivElement;
const statsBox = document.getElementById("stats") as HTMLDivElement;
const fileInput = document.getElementById("file") as HTMLInputElement;
const commitBtn = document.getElementById("commit") as HTMLButtonElement;
const clearBtn = document.getElementById("clear") as HTMLButtonElement;
const measureBtn = document.getElementById("measure") as HTMLButtonElement;
const methodSel = document.getElementById("method") as HTMLSelectElement;
const sectionInput = document.getElementById("section") as HTMLInputElement;
const kSlider = document.getElementById("k-neighbors") as HTMLInputElement;
const linkSlider = document.getElementById("max-link") as HTMLInputElement;
const kLabel = document.getElementById("k-label") as HTMLSpanElement;
const linkLabel = document.getElementById("link-label") as HTMLSpanElement;
const pupilRadius = document.getElementById("pupil-radius") as HTMLInputElement;

function showError(message: string | null): void {
  state = setError(state, message);
  errorBox.textContent = message ?? "";
  errorBox.hidden = message === null;
}

function surface(err: unknown): void {
  if (err instanceof ApiError && err.status === 404) {
    // stale session: server restarted since this tab loaded
    sessionId = null;
    window.location.hash = "";
    showError("session expired; upload the image again");
    return;
  }
  showError(err instanceof Error ? err.message : String(err));
}

function showResult(res: TmhResult): void {
  state = setResult(state, res);
  readout.textContent =
    `TMH ${res.tmh_px.toFixed(2)} px = ${res.tmh_mm.toFixed(4)} mm ` +
    `(method ${res.method}, section ${res.section.length_px} px @ x=${res.section.center_x})`;
}

function redraw(): void {
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.imageSmoothingEnabled = false;
  ctx.setTransform(view.zoom, 0, 0, view.zoom, view.panX, view.panY);

  const base = state.layer === "edge-map" ? edgeBitmap : imageBitmap;
  if (base) ctx.drawImage(base, 0, 0);
  if (state.layer === "mask-overlay" && maskBitmap) {
    ctx.globalAlpha = 0.45;
    ctx.drawImage(maskBitmap, 0, 0);
    ctx.globalAlpha = 1.0;
  }

  ctx.setTransform(1, 0, 0, 1, 0, 0);
  if (state.draft.length > 0) {
    ctx.strokeStyle = "#ffb000";
    ctx.fillStyle = "#ffb000";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    state.draft.forEach(([x, y], i) => {
      const [sx, sy] = imageToScreen(view, x, y);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    if (state.draft.length > 2) ctx.closePath();
    ctx.stroke();
    for (const [x, y] of state.draft) {
      const [sx, sy] = imageToScreen(view, x, y);
      ctx.fillRect(sx - 3, sy - 3, 6, 6);
    }
  }
  if (state.pupil) {
    const [sx, sy] = imageToScreen(view, state.pupil.x, state.pupil.y);
    ctx.strokeStyle = "#33ccff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(sx, sy, state.pupil.radius * view.zoom, 0, 2 * Math.PI);
    ctx.moveTo(sx - 6, sy);
    ctx.lineTo(sx + 6, sy);
    ctx.moveTo(sx, sy - 6);
    ctx.lineTo(sx, sy + 6);
    ctx.stroke();
  }
}

async function refreshLayer(): Promise<void> {
  if (!sessionId) return;
  try {
    if (state.layer === "edge-map" && !edgeBitmap) {
      const blob = await layerAsset(client, sessionId, "edge-map");
      if (blob) edgeBitmap = await createImageBitmap(blob);
    }
    if (state.layer === "mask-overlay") {
      const blob = await layerAsset(client, sessionId, "mask-overlay");
      if (blob) maskBitmap = await createImageBitmap(blob);
    }
  } catch (err) {
    surface(err);
  }
  redraw();
}

async function upload(file: File): Promise<void> {
  try {
    const info = await client.createSession(file);
    sessionId = info.id;
    window.location.hash = `s=${info.id}`;
    state = initialState();
    edgeBitmap = maskBitmap = null;
    view = identityView();
    imageBitmap = await createImageBitmap(file);
    canvas.width = Math.max(info.width, 640);
    canvas.height = Math.max(info.height, 480);
    showError(null);
    if (info.quality.verdict === "poor") {
      showError(`quality gate: ${info.quality.reasons.join(", ")} (advisory)`);
    }
    readout.textContent = "";
    statsBox.textContent = "";
    redraw();
  } catch (err) {
    surface(err);
  }
}

async function commit(): Promise<void> {
  if (!sessionId) {
    showError("upload an image first");
    return;
  }
  const problem = validateDraft(state.draft);
  if (problem !== null) {
    showError(problem); // no request leaves the client for an invalid draft
    return;
  }
  try {
    const outcome = await commitPolygon(client, sessionId, state);
    state = outcome.state;
    if (state.pupil) {
      await client.putPupil(sessionId, {
        point: [state.pupil.x, state.pupil.y],
        radius: state.pupil.radius,
      });
    }
    await applyRepair();
    showError(null);
  } catch (err) {
    surface(err);
  }
}

async function applyRepair(): Promise<void> {
  if (!sessionId || !state.committed) return;
  try {
    const { stats } = await client.repair(sessionId, {
      k_neighbors: Number(kSlider.value),
      max_link_distance: Number(linkSlider.value),
    });
    statsBox.textContent =
      `mask ${stats.foreground} px (band ${stats.band_px}, repair added ${stats.added})`;
    maskBitmap = null; // stale; refetched on next overlay draw
    await refreshLayer();
  } catch (err) {
    surface(err);
  }
}

function scheduleRepair(): void {
  kLabel.textContent = kSlider.value;
  linkLabel.textContent = linkSlider.value;
  window.clearTimeout(repairTimer);
  repairTimer = window.setTimeout(() => void applyRepair(), 200);
}

async function runMeasure(): Promise<void> {
  if (!sessionId) {
    showError("upload an image first");
    return;
  }
  try {
    const res = await client.measure(
      sessionId,
      Number(methodSel.value),
      Number(sectionInput.value),
    );
    showResult(res);
    showError(null);
  } catch (err) {
    surface(err);
  }
}

function canvasPoint(ev: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [ev.clientX - rect.left, ev.clientY - rect.top];
}

function vertexAt(sx: number, sy: number): number {
  for (let i = 0; i < state.draft.length; i += 1) {
    const v = state.draft[i]!;
    const [vx, vy] = imageToScreen(view, v[0], v[1]);
    if (Math.abs(vx - sx) <= 5 && Math.abs(vy - sy) <= 5) return i;
  }
  return -1;
}

canvas.addEventListener("mousedown", (ev) => {
  const [sx, sy] = canvasPoint(ev);
  if (state.tool === "pan-zoom") {
    panAnchor = [sx, sy];
    return;
  }
  if (state.tool === "polygon") {
    dragVertexIndex = vertexAt(sx, sy);
  }
});

canvas.addEventListener("mousemove", (ev) => {
  const [sx, sy] = canvasPoint(ev);
  if (panAnchor) {
    view = pan(view, sx - panAnchor[0], sy - panAnchor[1]);
    panAnchor = [sx, sy];
    redraw();
    return;
  }
  if (dragVertexIndex >= 0) {
    const [ix, iy] = screenToImage(view, sx, sy);
    state = moveVertex(state, dragVertexIndex, Math.round(ix), Math.round(iy));
    redraw();
  }
});

canvas.addEventListener("mouseup", (ev) => {
  const [sx, sy] = canvasPoint(ev);
  if (panAnchor) {
    panAnchor = null;
    return;
  }
  if (dragVertexIndex >= 0) {
    dragVertexIndex = -1;
    return;
  }
  const [ix, iy] = screenToImage(view, sx, sy);
  const x = Math.round(ix);
  const y = Math.round(iy);
  if (state.tool === "polygon") {
    state = addVertex(state, x, y);
    redraw();
  } else if (state.tool === "pupil-point") {
    state = setPupil(state, { x, y, radius: Number(pupilRadius.value) });
    redraw();
  }
});

canvas.addEventListener("dblclick", (ev) => {
  if (state.tool !== "polygon") return;
  const [sx, sy] = canvasPoint(ev);
  const hit = vertexAt(sx, sy);
  if (hit >= 0) {
    state = deleteVertex(state, hit);
    redraw();
  }
  ev.preventDefault();
});

canvas.addEventListener("wheel", (ev) => {
  if (state.tool !== "pan-zoom") return;
  ev.preventDefault();
  const [sx, sy] = canvasPoint(ev);
  view = zoomStep(view, ev.deltaY < 0 ? 1 : -1, sx, sy);
  redraw();
});

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (file) void upload(file);
});

for (const radio of document.querySelectorAll<HTMLInputElement>("input[name=layer]")) {
  radio.addEventListener("change", () => {
    state = setLayer(state, radio.value as Layer);
    void refreshLayer();
  });
}

for (const radio of document.querySelectorAll<HTMLInputElement>("input[name=tool]")) {
  radio.addEventListener("change", () => {
    state = setTool(state, radio.value as Tool);
  });
}

commitBtn.addEventListener("click", () => void commit());
clearBtn.addEventListener("click", () => {
  state = clearDraft(state);
  redraw();
});
measureBtn.addEventListener("click", () => void runMeasure());
kSlider.addEventListener("input", scheduleRepair);
linkSlider.addEventListener("input", scheduleRepair);

/** Re-attach after a reload: same session, same mask, same readout. */
async function restore(): Promise<void> {
  const match = window.location.hash.match(/s=([0-9a-f]+)/);
  if (!match) return;
  sessionId = match[1]!;
  try {
    const blob = await client.mask(sessionId);
    maskBitmap = await createImageBitmap(blob);
    canvas.width = maskBitmap.width;
    canvas.height = maskBitmap.height;
    state = markCommitted(setLayer(state, "mask-overlay"));
    await runMeasure();
    redraw();
  } catch (err) {
    if (err instanceof ApiError && (err.status === 404 || err.status === 409)) {
      sessionId = err.status === 409 ? sessionId : null;
      return; // nothing to restore yet
    }
    surface(err);
  }
}

void restore();
