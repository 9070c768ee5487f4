/** Wire types for the inpainting service (POST /v1/inpaint, GET /v1/health). */
export {};
