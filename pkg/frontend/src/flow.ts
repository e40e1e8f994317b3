/** The annotation flow as testable functions.
 *
 * main.ts wires these to DOM events; the scripted test drives them
 * against a live service. Commit validation runs before any request so
 * an undersized polygon never reaches the network.
 */

import {
  ApiClient,
  type PupilPayload,
  type RepairParams,
  type TmhResult,
  type Vertex,
} from "./api.js";
import {
  type CanvasState,
  type Layer,
  markCommitted,
  setError,
  validateDraft,
} from "./state.js";

export interface CommitOutcome {
  state: CanvasState;
  committed: boolean;
}

/** Push the draft polygon to the session; invalid drafts never hit the API. */
export async function commitPolygon(
  client: ApiClient,
  sessionId: string,
  state: CanvasState,
): Promise<CommitOutcome> {
  const problem = validateDraft(state.draft);
  if (problem !== null) {
    return { state: setError(state, problem), committed: false };
  }
  await client.putRoi(sessionId, state.draft);
  return { state: markCommitted(state), committed: true };
}

/** Fetch whatever bitmap a layer needs; switching layers is read-only. */
export async function layerAsset(
  client: ApiClient,
  sessionId: string,
  layer: Layer,
): Promise<Blob | null> {
  if (layer === "edge-map") return await client.edgeMap(sessionId);
  if (layer === "mask-overlay") return await client.mask(sessionId);
  return null; // original image is already client-side
}

export interface FlowInput {
  image: Blob;
  vertices: Vertex[];
  pupil?: PupilPayload;
  repair?: RepairParams;
  method?: number;
  sectionMm?: number;
}

export interface FlowOutput {
  sessionId: string;
  result: TmhResult;
  mask: Blob;
}

/** Upload -> edge view -> polygon -> repair -> measure, as the UI runs it. */
export async function runAnnotateFlow(
  client: ApiClient,
  input: FlowInput,
): Promise<FlowOutput> {
  const session = await client.createSession(input.image);
  await client.edgeMap(session.id); // the edge view the operator draws on
  await client.putRoi(session.id, input.vertices);
  if (input.pupil) {
    await client.putPupil(session.id, input.pupil);
  }
  await client.repair(session.id, input.repair ?? {});
  const result = await client.measure(
    session.id,
    input.method ?? 1,
    input.sectionMm ?? 0.5,
  );
  const mask = await client.mask(session.id);
  return { sessionId: session.id, result, mask };
}
