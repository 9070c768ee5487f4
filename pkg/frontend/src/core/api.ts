/** Typed client for the inpainting service. */

import type { HealthResponse, InpaintRequest, InpaintResponse, ServiceErrorBody } from "./types.js";

export class ServiceError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ status: number; json(): Promise<unknown> }>;

export class InpaintClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? (fetch as unknown as FetchLike);
  }

  async inpaint(req: InpaintRequest): Promise<InpaintResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/inpaint`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    const body = await resp.json();
    if (resp.status !== 200) {
      const err = (body as ServiceErrorBody).error ?? { code: "unknown", message: "request failed" };
      throw new ServiceError(err.code, err.message, resp.status);
    }
    return body as InpaintResponse;
  }

  async health(): Promise<HealthResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/health`);
    if (resp.status !== 200) throw new ServiceError("health_unavailable", `status ${resp.status}`, resp.status);
    return (await resp.json()) as HealthResponse;
  }
}
