/** Canvas state and its pure transitions.
 *
 * Everything here is plain data so the editing rules can be tested
 * without a browser. The committed polygon mirrors what the server
 * holds; the draft is purely local until commit.
 */

import type { TmhResult, Vertex } from "./api.js";

export type Layer = "original" | "edge-map" | "mask-overlay";
export type Tool = "polygon" | "pupil-point" | "pan-zoom";

export interface PupilMark {
  x: number;
  y: number;
  radius: number;
}

export interface CanvasState {
  layer: Layer;
  tool: Tool;
  draft: Vertex[];
  committed: Vertex[] | null;
  pupil: PupilMark | null;
  lastResult: TmhResult | null;
  error: string | null;
}

export const MIN_VERTICES = 3;

export function initialState(): CanvasState {
  return {
    layer: "original",
    tool: "polygon",
    draft: [],
    committed: null,
    pupil: null,
    lastResult: null,
    error: null,
  };
}

export function setLayer(s: CanvasState, layer: Layer): CanvasState {
  return { ...s, layer };
}

export function setTool(s: CanvasState, tool: Tool): CanvasState {
  return { ...s, tool };
}

export function addVertex(s: CanvasState, x: number, y: number): CanvasState {
  return { ...s, draft: [...s.draft, [x, y]], error: null };
}

export function moveVertex(
  s: CanvasState,
  index: number,
  x: number,
  y: number,
): CanvasState {
  if (index < 0 || index >= s.draft.length) return s;
  const draft = s.draft.slice();
  draft[index] = [x, y];
  return { ...s, draft };
}

export function deleteVertex(s: CanvasState, index: number): CanvasState {
  if (index < 0 || index >= s.draft.length) return s;
  return { ...s, draft: s.draft.filter((_, i) => i !== index) };
}

export function clearDraft(s: CanvasState): CanvasState {
  return { ...s, draft: [] };
}

export function setPupil(s: CanvasState, pupil: PupilMark | null): CanvasState {
  return { ...s, pupil };
}

export function setResult(s: CanvasState, result: TmhResult): CanvasState {
  return { ...s, lastResult: result };
}

export function setError(s: CanvasState, error: string | null): CanvasState {
  return { ...s, error };
}

/** null when the draft is committable, else the message to show inline. */
export function validateDraft(draft: Vertex[]): string | null {
  if (draft.length < MIN_VERTICES) {
    return `polygon needs at least ${MIN_VERTICES} vertices (has ${draft.length})`;
  }
  return null;
}

/** After a successful commit the server session and the state agree. */
export function markCommitted(s: CanvasState): CanvasState {
  return { ...s, committed: s.draft.slice(), error: null };
}
