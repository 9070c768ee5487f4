/**
 * Editor session state: one source image, one editable mask, an append-only
 * prompt history. Each history entry stores the exact request that produced
 * it so a replay with the pinned seed reproduces the result byte for byte.
 */
import { MaskModel } from "./mask.js";
export class EditorSession {
    mask;
    width;
    height;
    composite = "none";
    imageBase64;
    client;
    encodeMask;
    entries = [];
    inflight = Promise.resolve();
    constructor(opts) {
        this.width = opts.width;
        this.height = opts.height;
        this.imageBase64 = opts.imageBase64;
        this.client = opts.client;
        this.encodeMask = opts.encodeMask;
        this.mask = new MaskModel(opts.width, opts.height);
    }
    get history() {
        return this.entries;
    }
    buildRequest(text, samples, seed) {
        const problem = this.mask.validate();
        if (problem)
            throw new Error(problem);
        if (!text.trim())
            throw new Error("describe the region before submitting");
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
    submit(text, samples = 1, seed = null) {
        let request;
        try {
            // capture the mask raster now, before any further editing
            request = this.buildRequest(text, samples, seed);
        }
        catch (err) {
            return Promise.reject(err);
        }
        const run = this.inflight.then(() => this.send(request, text, samples, seed), () => this.send(request, text, samples, seed));
        this.inflight = run;
        return run;
    }
    /** Re-issue a past entry's stored request verbatim. */
    replay(index) {
        const entry = this.entries[index];
        if (!entry)
            throw new Error(`no history entry ${index}`);
        const run = this.inflight.then(() => this.send(entry.request, entry.text, entry.samples, entry.seed), () => this.send(entry.request, entry.text, entry.samples, entry.seed));
        this.inflight = run;
        return run;
    }
    async send(request, text, samples, seed) {
        // service errors propagate to the caller; history only ever grows on success
        const response = await this.client.inpaint(request);
        const entry = {
            index: this.entries.length,
            text,
            seed,
            samples,
            composite: (request.composite ?? "none"),
            request,
            response,
        };
        this.entries.push(entry);
        return entry;
    }
    /** Stored result bytes pass through unchanged; only the name is derived. */
    exportEntry(entry, sample = 0) {
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
