/** Wire types for the inpainting service (POST /v1/inpaint, GET /v1/health). */

export type CompositeMode = "none" | "hard";

export interface InpaintRequest {
  /** base64 PNG, RGB */
  image: string;
  /** base64 PNG, grayscale: 255 = keep pixel, 0 = fill pixel */
  mask?: string;
  /** [x, y, w, h] region to fill, in source-image pixels */
  box?: [number, number, number, number];
  /** synthesized mask protocol; the service supports "center" */
  mask_mode?: "center";
  text: string;
  samples?: number;
  seed?: number | null;
  composite?: CompositeMode;
}

export interface InpaintResponse {
  /** base64 PNGs, one per sample */
  results: string[];
  timing_ms: number;
  model_version: string;
  /** base64 PNG of the binary mask the service actually used */
  mask: string;
  /** processed square resolution */
  size: number;
}

export interface HealthResponse {
  status: "ready" | "loading";
  model_version?: string;
  checkpoint_sha256?: string;
  uptime_s: number;
}

export interface ServiceErrorBody {
  error: { code: string; message: string };
}
