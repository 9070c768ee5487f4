/**
 * Editor session state: one source image, one editable mask, an append-only
 * prompt history. Each history entry stores the exact request that produced
 * it so a replay with the pinned seed reproduces the result byte for byte.
 */

import { InpaintClient } from "./api.js";
import { MaskModel } from "./mask.js";
import type { CompositeMode, InpaintRequest, InpaintResponse } from "./types.js";

export type MaskEncoder = (grid: Uint8Array, width: number, height: number) => string;

export interface HistoryEntry {
  index: number;
  text: string;
  seed: number | null;
  samples: number;
  composite: CompositeMode;
  request: InpaintRequest;
  response: InpaintResponse;
}

export interface SessionOptions {
  width: number;
  height: number;
  /** base64 PNG of the source image */
  imageBase64: string;
  client: InpaintClient;
  /** rasterized mask grid -> base64 PNG (canvas in the browser, codec in tests) */
  encodeMask: MaskEncoder;
}

export class EditorSession {
  readonly mask: MaskModel;
  readonly width: number;
  readonly height: number;
  composite: CompositeMode = "none";

  private readonly imageBase64: string;
  private readonly client: InpaintClient;
  private readonly encodeMask: MaskEncoder;
  private readonly entries: HistoryEntry[] = [];
  private inflight: Promise<unknown> = Promise.resolve();

  constructor(opts: SessionOptions) {
    this.width = opts.width;
    this.height = opts.height;
    this.imageBase64 = opts.imageBase64;
    this.client = opts.client;
    this.encodeMask = opts.encodeMask;
    this.mask = new MaskModel(opts.width, opts.height);
  }

  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  buildRequest(text: string, samples: number, seed: number | null): InpaintRequest {
    const problem = this.mask.validate();
    if (problem) throw new Error(problem);
    if (!text.trim()) throw new Error("describe the region before submitting");
    return {
      image: this.imageBase64,
      mask: this.encodeMask(this.mask.rasterize(), this.width, this.height),
      text,
      samples,
      seed,
      composite: this.composite,
    };
  }

  /** Submit a prompt; requests queue so only one is in flight per session. */
  submit(text: string, samples = 1, seed: number | null = null): Promise<HistoryEntry> {
    let request: InpaintRequest;
    try {
      // capture the mask raster now, before any further editing
      request = this.buildRequest(text, samples, seed);
    } catch (err) {
      return Promise.reject(err);
    }
    const run = this.inflight.then(
      () => this.send(request, text, samples, seed),
      () => this.send(request, text, samples, seed),
    );
    this.inflight = run;
    return run;
  }

  /** Re-issue a past entry's stored request verbatim. */
  replay(index: number): Promise<HistoryEntry> {
    const entry = this.entries[index];
    if (!entry) throw new Error(`no history entry ${index}`);
    const run = this.inflight.then(
      () => this.send(entry.request, entry.text, entry.samples, entry.seed),
      () => this.send(entry.request, entry.text, entry.samples, entry.seed),
    );
    this.inflight = run;
    return run;
  }

  private async send(
    request: InpaintRequest,
    text: string,
    samples: number,
    seed: number | null,
  ): Promise<HistoryEntry> {
    // service errors propagate to the caller; history only ever grows on success
    const response = await this.client.inpaint(request);
    const entry: HistoryEntry = {
      index: this.entries.length,
      text,
      seed,
      samples,
      composite: (request.composite ?? "none") as CompositeMode,
      request,
      response,
    };
    this.entries.push(entry);
    return entry;
  }

  /** Stored result bytes pass through unchanged; only the name is derived. */
  exportEntry(entry: HistoryEntry, sample = 0): { filename: string; base64: string } {
    const slug = entry.text
      .toLowerCase()
      .replace(/[^a-z0-9]+/g, "-")
      .replace(/^-+|-+$/g, "")
      .slice(0, 40) || "result";
    const seedPart = entry.seed === null ? "det" : `seed${entry.seed}`;
    return {
      filename: `${slug}_${seedPart}_${entry.composite}_${sample}.png`,
      base64: entry.response.results[sample],
    };
  }
}
