/** Typed client for the inpainting service. */
export class ServiceError extends Error {
    code;
    status;
    constructor(code, message, status) {
        super(message);
        this.code = code;
        this.status = status;
    }
}
export class InpaintClient {
    baseUrl;
    fetchImpl;
    constructor(baseUrl, fetchImpl) {
        this.baseUrl = baseUrl.replace(/\/$/, "");
        this.fetchImpl = fetchImpl ?? fetch;
    }
    async inpaint(req) {
        const resp = await this.fetchImpl(`${this.baseUrl}/v1/inpaint`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(req),
        });
        const body = await resp.json();
        if (resp.status !== 200) {
            const err = body.error ?? { code: "unknown", message: "request failed" };
            throw new ServiceError(err.code, err.message, resp.status);
        }
        return body;
    }
    async health() {
        const resp = await this.fetchImpl(`${this.baseUrl}/v1/health`);
        if (resp.status !== 200)
            throw new ServiceError("health_unavailable", `status ${resp.status}`, resp.status);
        return (await resp.json());
    }
}
