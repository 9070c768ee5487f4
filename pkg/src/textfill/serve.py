"""HTTP/JSON inference service and the shared inference engine.

Endpoints: POST /v1/inpaint and GET /v1/health. Rasters travel as
base64-encoded PNG. The engine is loaded once from a checkpoint and shared
read-only across request handlers; a lock serializes forwards so identical
seeded requests always produce identical bodies.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .attention import AttentionError
from .data import (
    MaskError,
    NoBoxesError,
    TokenizeError,
    Vocabulary,
    center_mask,
    object_mask,
    preprocess_geometry,
    tokenize,
)
from .model import TextGuidedInpainter
from .trainer import load_checkpoint

MAX_SIDE = 4096
MAX_SAMPLES = 8
MAX_BODY_BYTES = 64 * 1024 * 1024


class ServeError(Exception):
    def __init__(self, code: str, message: str, status: int = 400):
        self.code = code
        self.status = status
        super().__init__(message)

    def body(self) -> dict:
        return {"error": {"code": self.code, "message": str(self)}}


def _png_b64(arr: np.ndarray, mode: str = "RGB") -> str:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_png(b64: str, what: str) -> Image.Image:
    try:
        raw = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
        return img
    except Exception as e:
        raise ServeError(f"invalid_{what}", f"cannot decode {what} raster: {e}") from e


def tensor_to_u8(img: torch.Tensor) -> np.ndarray:
    arr = ((img.clamp(-1, 1) + 1.0) * 127.5).round().clamp(0, 255)
    return arr.permute(1, 2, 0).cpu().numpy().astype(np.uint8)


@dataclass
class InferenceEngine:
    model: TextGuidedInpainter
    vocab: Vocabulary
    model_version: str
    checkpoint_sha256: str

    _lock: threading.Lock = None  # type: ignore[assignment]

    def __post_init__(self):
        self._lock = threading.Lock()
        self.model.eval()

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "InferenceEngine":
        from .trainer import read_checkpoint

        header, _ = read_checkpoint(path)
        model, vocab, payload = load_checkpoint(path)
        return cls(
            model=model,
            vocab=vocab,
            model_version=payload["config_hash"],
            checkpoint_sha256=header["sha256"],
        )

    # -- request processing ------------------------------------------------

    def _build_mask(self, req: dict, orig_size: tuple[int, int], target: int) -> torch.Tensor:
        specs = [k for k in ("mask", "box", "mask_mode") if req.get(k) is not None]
        if not specs:
            raise ServeError("mask_spec_missing", "provide one of mask, box or mask_mode")
        if len(specs) > 1:
            raise ServeError("mask_spec_conflict", f"multiple mask specs given: {specs}")
        if req.get("mask") is not None:
            m_img = _decode_png(req["mask"], "mask").convert("L")
            if m_img.size != orig_size:
                raise ServeError(
                    "mask_shape_mismatch",
                    f"mask raster {m_img.size} does not match image {orig_size}",
                )
            m_img = preprocess_geometry(m_img, target, resample=Image.NEAREST)
            grid = (np.asarray(m_img) >= 128).astype(np.float32)
            return torch.from_numpy(grid)
        if req.get("box") is not None:
            box = req["box"]
            if (
                not isinstance(box, (list, tuple))
                or len(box) != 4
                or not all(isinstance(v, (int, float)) for v in box)
                or box[2] <= 0
                or box[3] <= 0
            ):
                raise ServeError("invalid_box", f"box must be [x, y, w, h] with w, h > 0: {box!r}")
            from .data import rescale_boxes

            boxes = rescale_boxes([tuple(float(v) for v in box)], orig_size[0], orig_size[1], target)
            try:
                return object_mask(boxes, target, target)
            except (NoBoxesError, MaskError) as e:
                raise ServeError("invalid_box", str(e)) from e
        mode = req["mask_mode"]
        if mode != "center":
            raise ServeError("invalid_mask_mode", f"unsupported mask_mode {mode!r}")
        return center_mask(target, target, 0.5)

    def run(self, req: dict, dump_attention: str | None = None) -> dict:
        t0 = time.monotonic()
        text = req.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ServeError("empty_text", "text must be a non-empty string")
        samples = req.get("samples", 1)
        if not isinstance(samples, int) or not 1 <= samples <= MAX_SAMPLES:
            raise ServeError("invalid_samples", f"samples must be an int in 1..{MAX_SAMPLES}")
        seed = req.get("seed")
        if seed is not None and not isinstance(seed, int):
            raise ServeError("invalid_seed", "seed must be an integer")
        composite = req.get("composite", "none")
        if composite not in ("none", "hard"):
            raise ServeError("invalid_composite", f"composite must be none|hard, got {composite!r}")
        if "image" not in req:
            raise ServeError("missing_image", "request needs an image raster")

        img = _decode_png(req["image"], "image").convert("RGB")
        if max(img.size) > MAX_SIDE:
            raise ServeError(
                "image_too_large", f"image {img.size} exceeds {MAX_SIDE}px limit", status=413
            )
        target = self.model.config.image_size
        geo = preprocess_geometry(img, target)
        input_u8 = np.asarray(geo, dtype=np.uint8)
        image_t = torch.from_numpy(input_u8.astype(np.float32) / 127.5 - 1.0).permute(2, 0, 1)

        mask = self._build_mask(req, img.size, target)
        try:
            tc = tokenize(text, self.vocab)
        except TokenizeError as e:
            raise ServeError("empty_text", str(e)) from e

        i_m = (image_t * mask).unsqueeze(0)
        tokens = tc.ids[: tc.length].unsqueeze(0)
        lengths = torch.tensor([tc.length])
        deterministic = samples == 1 and seed is None
        base_seed = seed if seed is not None else 0

        results = []
        mask_u8 = (mask.numpy() * 255).astype(np.uint8)
        with self._lock:
            for k in range(samples):
                gen = None
                if not deterministic:
                    gen = torch.Generator().manual_seed(base_seed + k)
                try:
                    i_g = self.model.infer(
                        i_m, mask.unsqueeze(0), tokens, lengths,
                        deterministic=deterministic, generator=gen,
                    )[0]
                except AttentionError as e:
                    raise ServeError("degenerate_mask", str(e)) from e
                out_u8 = tensor_to_u8(i_g)
                if composite == "hard":
                    keep = mask_u8[..., None] > 0
                    out_u8 = np.where(keep, input_u8, out_u8)
                results.append(_png_b64(out_u8))
            if dump_attention and not self.model.config.no_dual_attention:
                betas = self.model.attention_maps(i_m, mask.unsqueeze(0), tokens, lengths)
                fs = self.model.config.feat_size
                self.model.attn.save_beta_maps(betas, fs, fs, dump_attention)
        return {
            "results": results,
            "timing_ms": (time.monotonic() - t0) * 1000.0,
            "model_version": self.model_version,
            "mask": _png_b64(mask_u8, mode="L"),
            "size": target,
        }


class _State:
    def __init__(self):
        self.engine: InferenceEngine | None = None
        self.started = time.monotonic()


class Handler(BaseHTTPRequestHandler):
    # the server object carries .state (set by create_server)
    protocol_version = "HTTP/1.1"

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def do_GET(self):
        state: _State = self.server.state
        if self.path != "/v1/health":
            self._send(404, {"error": {"code": "not_found", "message": self.path}})
            return
        if state.engine is None:
            self._send(200, {"status": "loading", "uptime_s": time.monotonic() - state.started})
            return
        self._send(
            200,
            {
                "status": "ready",
                "model_version": state.engine.model_version,
                "checkpoint_sha256": state.engine.checkpoint_sha256,
                "uptime_s": time.monotonic() - state.started,
            },
        )

    def do_POST(self):
        state: _State = self.server.state
        if self.path != "/v1/inpaint":
            self._send(404, {"error": {"code": "not_found", "message": self.path}})
            return
        if state.engine is None:
            self._send(503, {"error": {"code": "model_not_loaded", "message": "still loading"}})
            return
        length = int(self.headers.get("Content-Length", 0))
        if length > MAX_BODY_BYTES:
            self._send(413, {"error": {"code": "body_too_large", "message": f"{length} bytes"}})
            return
        try:
            req = json.loads(self.rfile.read(length))
        except json.JSONDecodeError as e:
            self._send(400, {"error": {"code": "invalid_json", "message": str(e)}})
            return
        try:
            self._send(200, state.engine.run(req))
        except ServeError as e:
            self._send(e.status, e.body())
        except Exception as e:  # unexpected: surface as 500, keep serving
            self._send(500, {"error": {"code": "internal", "message": str(e)}})


def create_server(
    checkpoint: str | Path,
    host: str = "127.0.0.1",
    port: int = 8765,
    defer_load: bool = False,
):
    """Bind the server; defer_load answers health checks while the
    checkpoint loads in the background (inpaint requests get 503)."""
    server = ThreadingHTTPServer((host, port), Handler)
    server.state = _State()
    if defer_load:
        def _load():
            server.state.engine = InferenceEngine.from_checkpoint(checkpoint)

        threading.Thread(target=_load, daemon=True).start()
    else:
        server.state.engine = InferenceEngine.from_checkpoint(checkpoint)
    return server


def serve_forever(checkpoint: str | Path, host: str = "127.0.0.1", port: int = 8765) -> None:
    server = create_server(checkpoint, host, port)
    print(
        f"serving on http://{host}:{server.server_address[1]}  (checkpoint {checkpoint})",
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
