// Typed client for the synthesis service JSON API.

export interface SchemaResponse {
  names: string[];
  groups: Record<string, "texture" | "color">;
  defaults: Record<string, number>;
  texture: string[];
  color: string[];
  sweep_weights: number[];
}

export interface StageImages {
  stage1: string; // base64 PNG
  stage2: string;
  stage3: string;
}

export interface SynthesizeResponse {
  seed: number;
  images: StageImages;
  meta: Record<string, unknown>;
}

export interface SweepResponse {
  seed: number;
  attribute: string;
  weights: number[];
  images: string[];
}

export interface AblationFlags {
  skip_stage2?: boolean;
  no_attr_stage2?: boolean;
  no_attr_stage3?: boolean;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function requestJson<T>(fetchFn: FetchLike, url: string, init?: RequestInit): Promise<T> {
  const resp = await fetchFn(url, init);
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = await resp.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body);
    } catch {
      /* body not JSON */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class SynthesisClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  getSchema(): Promise<SchemaResponse> {
    return requestJson<SchemaResponse>(this.fetchFn, `${this.baseUrl}/schema`);
  }

  synthesize(
    attributes: Record<string, number>,
    seed?: number,
    ablation?: AblationFlags,
  ): Promise<SynthesizeResponse> {
    return requestJson<SynthesizeResponse>(this.fetchFn, `${this.baseUrl}/synthesize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ attributes, seed: seed ?? null, ablation: ablation ?? null }),
    });
  }

  sweep(
    attribute: string,
    base: Record<string, number>,
    seed: number,
    weights?: number[],
  ): Promise<SweepResponse> {
    return requestJson<SweepResponse>(this.fetchFn, `${this.baseUrl}/sweep`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ attribute, base, seed, weights: weights ?? null }),
    });
  }
}
