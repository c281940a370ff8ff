/**
 * Typed client for the relight HTTP service. The UI talks to the backend
 * exclusively through this module.
 */
import { Lighting, parseLighting } from "./lighting";

export interface SessionBundle {
  pointmap: Uint8Array; // PFM bytes
  albedo: Uint8Array; // PFM or PNG bytes
  camera: { fx: number; fy: number; cx: number; cy: number; width?: number; height?: number };
  shading?: Uint8Array; // PFM bytes
  image?: Uint8Array;
}

export interface SessionStatus {
  id: string;
  width: number;
  height: number;
  num_vertices: number;
  num_triangles: number;
  has_shading: boolean;
  build_millis: number;
  lighting_revision: number;
  lighting: Lighting;
  normalization: { scale: number; translation: [number, number, number] } | null;
  camera_origin: [number, number, number];
}

export interface RenderRequest {
  width?: number;
  height?: number;
  spp?: number;
  seed?: number;
  max_depth?: number;
  format?: "png" | "pfm";
}

export interface RenderResponse {
  bytes: ArrayBuffer;
  millis: number;
  lightingRevision: number;
  contentType: string;
}

export interface FitRequest {
  k_lights?: number;
  env_rows?: number;
  max_iters?: number;
  spp?: number;
  max_depth?: number;
  seed?: number;
}

export interface FitResponse {
  final_error: number;
  iterations: number;
  wall_time_s: number;
  trace: number[];
  psi: Lighting;
  lighting_revision: number;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let code = "http_error";
  let message = `${resp.status}`;
  try {
    const body = await resp.json();
    code = body.code ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new ServiceError(resp.status, code, message);
}

export class RelightClient {
  constructor(readonly baseUrl: string) {}

  async createSession(bundle: SessionBundle): Promise<{ id: string; buildMillis: number }> {
    const form = new FormData();
    form.append("pointmap", new Blob([bundle.pointmap.slice().buffer]), "pointmap.pfm");
    form.append("albedo", new Blob([bundle.albedo.slice().buffer]), "albedo");
    form.append("camera", JSON.stringify(bundle.camera));
    if (bundle.shading) form.append("shading", new Blob([bundle.shading.slice().buffer]), "shading.pfm");
    if (bundle.image) form.append("image", new Blob([bundle.image.slice().buffer]), "image.pfm");
    const resp = await fetch(`${this.baseUrl}/sessions`, { method: "POST", body: form });
    await raiseForStatus(resp);
    const body = await resp.json();
    return { id: body.id, buildMillis: body.build_millis };
  }

  async getSession(id: string): Promise<SessionStatus> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}`);
    await raiseForStatus(resp);
    const body = await resp.json();
    return { ...body, lighting: parseLighting(body.lighting) } as SessionStatus;
  }

  /** Replace the light list (and optionally the environment) atomically. */
  async putLighting(id: string, lighting: Lighting): Promise<{ revision: number; lighting: Lighting }> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/lighting`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(lighting),
    });
    await raiseForStatus(resp);
    const body = await resp.json();
    return { revision: body.lighting_revision, lighting: parseLighting(body.lighting) };
  }

  async render(id: string, req: RenderRequest = {}): Promise<RenderResponse> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ format: "png", spp: 16, seed: 0, ...req }),
    });
    await raiseForStatus(resp);
    return {
      bytes: await resp.arrayBuffer(),
      millis: parseFloat(resp.headers.get("X-Render-Millis") ?? "0"),
      lightingRevision: parseInt(resp.headers.get("X-Lighting-Revision") ?? "-1", 10),
      contentType: resp.headers.get("content-type") ?? "",
    };
  }

  async fit(id: string, req: FitRequest = {}): Promise<FitResponse> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/fit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    await raiseForStatus(resp);
    const body = await resp.json();
    return { ...body, psi: parseLighting(body.psi) } as FitResponse;
  }

  async deleteSession(id: string): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}`, { method: "DELETE" });
    await raiseForStatus(resp);
  }
}
