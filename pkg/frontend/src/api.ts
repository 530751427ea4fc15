// Typed client for the lesion classification service. The UI talks to the
// backend exclusively through this module.

export interface PredictionEntry {
  label: string;
  confidence: number;
}

export interface QualityInfo {
  passed: boolean;
  reasons: string[];
  sharpness_score: number;
  contrast_score: number;
}

export interface ExplanationBundle {
  lime?: string; // base64 PNG overlay
  gradcam?: string; // base64 PNG overlay
  metadata: Record<string, unknown>;
}

export interface PredictResponse {
  predictions: PredictionEntry[];
  quality: QualityInfo;
  model_id: string;
  latency_ms: number;
  explanations?: ExplanationBundle;
  warnings: string[];
}

export interface HealthResponse {
  status: string;
  model_id?: string;
  uptime_s: number;
  class_count?: number;
}

export type ExplainChoice = "none" | "lime" | "gradcam" | "both";

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function throwEnvelope(resp: Response): Promise<never> {
  let code = "error";
  let message = `request failed with status ${resp.status}`;
  try {
    const body = await resp.json();
    if (body?.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ApiError(code, message, resp.status);
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  async health(): Promise<HealthResponse> {
    const resp = await fetch(`${this.baseUrl}/health`);
    if (!resp.ok) await throwEnvelope(resp);
    return resp.json();
  }

  async classes(): Promise<string[]> {
    const resp = await fetch(`${this.baseUrl}/classes`);
    if (!resp.ok) await throwEnvelope(resp);
    const body = await resp.json();
    return body.classes;
  }

  async predict(
    file: Blob,
    opts: { topK?: number; explain?: ExplainChoice } = {},
  ): Promise<PredictResponse> {
    const query = new URLSearchParams();
    if (opts.topK !== undefined) query.set("top_k", String(opts.topK));
    if (opts.explain !== undefined) query.set("explain", opts.explain);
    const suffix = query.toString() ? `?${query}` : "";

    const form = new FormData();
    form.append("image", file, file instanceof File ? file.name : "upload.png");

    const resp = await fetch(`${this.baseUrl}/predict${suffix}`, {
      method: "POST",
      body: form,
    });
    if (!resp.ok) await throwEnvelope(resp);
    return resp.json();
  }
}
