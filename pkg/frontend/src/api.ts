/** Typed client for the local annotation service.
 *
 * Every request goes through one choke point so tests can inject a fetch
 * and inspect exactly which methods were used (layer toggles must stay
 * GET-only). Non-2xx responses become ApiError with the server's detail.
 */

export type Vertex = [number, number];

export interface QualityReport {
  verdict: "good" | "poor";
  reasons: string[];
  scores: Record<string, number>;
}

export interface SessionInfo {
  id: string;
  width: number;
  height: number;
  quality: QualityReport;
  version: string;
}

export interface SectionInfo {
  length_mm: number;
  length_px: number;
  center_x: number;
}

export interface TmhResult {
  method: number;
  tmh_px: number;
  tmh_mm: number;
  section: SectionInfo;
  diagnostics: Record<string, unknown>;
  version: string;
}

export interface EdgeParams {
  k1?: number;
  k2?: number;
  center_offset?: number;
  padding?: "reflect" | "zero";
}

export interface RepairParams {
  k_neighbors?: number;
  max_link_distance?: number;
  stroke_width?: number;
  to_fixpoint?: boolean;
}

export interface MaskStats {
  foreground: number;
  band_px: number;
  added: number;
  version: string;
}

export type PupilPayload =
  | { point: Vertex; radius?: number }
  | { vertices: Vertex[] };

export interface RequestRecord {
  method: string;
  path: string;
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return res.statusText || `HTTP ${res.status}`;
  }
}

export class ApiClient {
  /** Every request issued, in order; tests assert on the methods. */
  readonly log: RequestRecord[] = [];

  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(
    method: string,
    path: string,
    init: RequestInit = {},
  ): Promise<Response> {
    this.log.push({ method, path });
    const res = await this.fetchImpl(this.baseUrl + path, { ...init, method });
    if (!res.ok) {
      throw new ApiError(res.status, await errorDetail(res));
    }
    return res;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit =
      body === undefined
        ? {}
        : {
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
          };
    const res = await this.request(method, path, init);
    return (await res.json()) as T;
  }

  async createSession(image: Blob): Promise<SessionInfo> {
    const form = new FormData();
    form.append("image", image, "image.png");
    const res = await this.request("POST", "/sessions", { body: form });
    return (await res.json()) as SessionInfo;
  }

  async edgeMap(sessionId: string, params: EdgeParams = {}): Promise<Blob> {
    const q = new URLSearchParams();
    for (const [key, value] of Object.entries(params)) {
      if (value !== undefined) q.set(key, String(value));
    }
    const suffix = q.size > 0 ? `?${q.toString()}` : "";
    const res = await this.request(
      "GET",
      `/sessions/${sessionId}/edge-map${suffix}`,
    );
    return await res.blob();
  }

  async putRoi(sessionId: string, vertices: Vertex[]): Promise<{ band_px: number }> {
    return await this.json("PUT", `/sessions/${sessionId}/roi`, { vertices });
  }

  async putPupil(sessionId: string, pupil: PupilPayload): Promise<void> {
    await this.json("PUT", `/sessions/${sessionId}/pupil`, pupil);
  }

  async repair(
    sessionId: string,
    params: RepairParams = {},
  ): Promise<{ mask: Blob; stats: MaskStats }> {
    const res = await this.request("POST", `/sessions/${sessionId}/repair`, {
      headers: { "content-type": "application/json" },
      body: JSON.stringify(params),
    });
    const statsHeader = res.headers.get("X-Mask-Stats");
    const stats = statsHeader
      ? (JSON.parse(statsHeader) as MaskStats)
      : { foreground: 0, band_px: 0, added: 0, version: "" };
    return { mask: await res.blob(), stats };
  }

  async measure(
    sessionId: string,
    method: number,
    sectionMm: number,
  ): Promise<TmhResult> {
    return await this.json("POST", `/sessions/${sessionId}/measure`, {
      method,
      section_mm: sectionMm,
    });
  }

  async mask(sessionId: string): Promise<Blob> {
    const res = await this.request("GET", `/sessions/${sessionId}/mask`);
    return await res.blob();
  }
}
