// Typed client for the explorer service. Images travel as base64-encoded
// little-endian float32 rasters (row-major) with explicit dimensions.

export interface ApiImage {
  width: number;
  height: number;
  channels: number;
  encoding: string;
}

export interface ManifoldPoint {
  id: number;
  u: number;
  v: number;
  cluster: number | null;
}

export interface LabelEntry {
  id: string;
  preview: ApiImage;
}

export interface SynthesizeResponse {
  image: ApiImage;
  style: number[];
}

export interface SegmentResponse {
  label: ApiImage;
  confidence: ApiImage;
}

export interface InterpolateStep {
  t: number;
  image: ApiImage;
}

function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const bytes = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
    return bytes;
  }
  // node (vitest) path, without pulling in node type definitions
  const buf = (globalThis as { Buffer?: { from(s: string, e: string): Uint8Array } })
    .Buffer;
  if (!buf) throw new Error("no base64 decoder available");
  return new Uint8Array(buf.from(b64, "base64"));
}

export function decodeImage(img: ApiImage): Float32Array {
  const bytes = base64ToBytes(img.encoding);
  const expected = img.width * img.height * img.channels * 4;
  if (bytes.byteLength !== expected) {
    throw new Error(`raster is ${bytes.byteLength} bytes, expected ${expected}`);
  }
  // wire format is little-endian; read through a DataView to stay exact on
  // any host byte order
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(expected / 4);
  for (let i = 0; i < out.length; i++) out[i] = view.getFloat32(i * 4, true);
  return out;
}

export function lerpStyle(a: number[], b: number[], t: number): number[] {
  if (a.length !== b.length) throw new Error("style lengths differ");
  return a.map((av, i) => (1 - t) * av + t * b[i]);
}

export class ServiceClient {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      const body = await resp.text();
      throw new Error(`${path} -> ${resp.status}: ${body.slice(0, 200)}`);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<{ status: string; checkpoint: string; style_dim: number }> {
    return this.request("/health");
  }

  manifold(): Promise<ManifoldPoint[]> {
    return this.request("/manifold");
  }

  labels(): Promise<LabelEntry[]> {
    return this.request("/labels");
  }

  synthesize(req: {
    label_id?: string;
    style_id?: number;
    z_seed?: number;
    style?: number[];
  }): Promise<SynthesizeResponse> {
    return this.post("/synthesize", req);
  }

  segment(image: ApiImage): Promise<SegmentResponse> {
    return this.post("/segment", { image });
  }

  interpolate(
    styleA: number[],
    styleB: number[],
    steps: number,
    labelId?: string
  ): Promise<{ steps: InterpolateStep[] }> {
    return this.post("/interpolate", {
      style_a: styleA,
      style_b: styleB,
      steps,
      label_id: labelId,
    });
  }
}
