"""Dataset manifests, caption tokenization, image preprocessing and mask protocols.

Manifest format: one record per line, tab-separated,
``<relative image path> TAB <JSON list of captions> TAB <JSON list of [x,y,w,h] boxes>``.

Vocabulary file format: one token per line, line number = token id.
Line 0 is the pad token, line 1 the unknown token.

Masks are float tensors of shape [H, W] holding exactly {0, 1}:
1 marks a visible (kept) pixel, 0 a masked (missing) pixel.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

MAX_TEXT_LEN = 128

_PUNCT_RE = re.compile(r"[^a-z0-9\s]+")


class ManifestError(Exception):
    """Raised when a manifest file is missing or a record is malformed."""


class TokenizeError(Exception):
    """Raised for captions that are empty after normalization."""


class MaskError(Exception):
    """Raised for invalid mask parameters or degenerate masks."""


class NoBoxesError(MaskError):
    """Raised by object_mask when no boxes are available.

    The caller decides how to fall back (typically to a center mask); this
    is an explicit signal, never a silent substitution.
    """


@dataclass
class Sample:
    image_path: str
    captions: list[str]
    boxes: list[tuple[float, float, float, float]] = field(default_factory=list)


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: dict[int, str]

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @classmethod
    def build(cls, captions: list[str]) -> "Vocabulary":
        """Build a vocabulary from caption text, most frequent tokens first."""
        counts: dict[str, int] = {}
        for cap in captions:
            for tok in normalize_caption(cap):
                counts[tok] = counts.get(tok, 0) + 1
        ordered = sorted(counts, key=lambda t: (-counts[t], t))
        tokens = [PAD_TOKEN, UNK_TOKEN] + ordered
        t2i = {t: i for i, t in enumerate(tokens)}
        return cls(token_to_id=t2i, id_to_token={i: t for t, i in t2i.items()})

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if len(lines) < 2 or lines[0] != PAD_TOKEN or lines[1] != UNK_TOKEN:
            raise ManifestError(f"{path}: vocabulary must start with {PAD_TOKEN!r}, {UNK_TOKEN!r}")
        t2i = {t: i for i, t in enumerate(lines)}
        if len(t2i) != len(lines):
            raise ManifestError(f"{path}: duplicate token in vocabulary")
        return cls(token_to_id=t2i, id_to_token={i: t for t, i in t2i.items()})

    def save(self, path: str | Path) -> None:
        ordered = [self.id_to_token[i] for i in range(self.size)]
        Path(path).write_text("\n".join(ordered) + "\n", encoding="utf-8")


@dataclass
class TokenizedCaption:
    ids: torch.Tensor  # [max_len] int64, zero padded
    length: int


@dataclass
class DatasetManifest:
    samples: list[Sample]
    vocab: Vocabulary
    split: str
    root: Path

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class MaskedPair:
    """Masked image, its complement, and the mask relating them.

    i_m is zero wherever mask == 0, i_c is zero wherever mask == 1, and
    i_m + i_c reconstructs the source image exactly.
    """

    i_m: torch.Tensor
    i_c: torch.Tensor
    mask: torch.Tensor


def normalize_caption(caption: str) -> list[str]:
    """Lowercase, strip punctuation and split a caption into tokens."""
    text = _PUNCT_RE.sub(" ", caption.lower())
    return text.split()


def tokenize(caption: str, vocab: Vocabulary, max_len: int = MAX_TEXT_LEN) -> TokenizedCaption:
    """Map a caption to padded token ids of length max_len.

    Out-of-vocabulary tokens map to the unknown id; sequences longer than
    max_len are truncated.
    """
    tokens = normalize_caption(caption)
    if not tokens:
        raise TokenizeError(f"caption is empty after normalization: {caption!r}")
    tokens = tokens[:max_len]
    ids = torch.full((max_len,), PAD_ID, dtype=torch.int64)
    for i, tok in enumerate(tokens):
        ids[i] = vocab.lookup(tok)
    return TokenizedCaption(ids=ids, length=len(tokens))


def load_manifest(
    path: str | Path,
    split: str,
    vocab: Vocabulary | None = None,
) -> DatasetManifest:
    """Load a tab-separated manifest and resolve its image paths.

    The vocabulary is taken from (in order): the explicit argument, a
    ``<path>.vocab`` sidecar file, or is built from the manifest's own
    captions. Building from a non-train split emits a warning since ids
    would then differ from the training vocabulary.
    """
    if split not in ("train", "val", "test"):
        raise ValueError(f"unknown split {split!r}")
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent
    samples: list[Sample] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ManifestError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        rel, captions_json, boxes_json = parts
        try:
            captions = json.loads(captions_json)
            boxes = json.loads(boxes_json)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{lineno}: invalid JSON field: {e}") from e
        if not isinstance(captions, list) or not captions:
            raise ManifestError(f"{path}:{lineno}: record has no captions")
        if not all(isinstance(c, str) and c.strip() for c in captions):
            raise ManifestError(f"{path}:{lineno}: captions must be non-empty strings")
        img = root / rel
        if not img.is_file():
            raise ManifestError(f"{path}:{lineno}: image path does not resolve: {img}")
        parsed_boxes = []
        for b in boxes:
            if len(b) != 4 or b[2] <= 0 or b[3] <= 0:
                raise ManifestError(f"{path}:{lineno}: invalid box {b}: need [x, y, w, h] with w, h > 0")
            parsed_boxes.append(tuple(float(v) for v in b))
        samples.append(Sample(image_path=str(img), captions=captions, boxes=parsed_boxes))

    if not samples:
        warnings.warn(f"manifest {path} is empty", stacklevel=2)

    if vocab is None:
        sidecar = path.with_suffix(path.suffix + ".vocab")
        if sidecar.is_file():
            vocab = Vocabulary.load(sidecar)
        else:
            if split != "train":
                warnings.warn(
                    f"building vocabulary from {split} captions; provide the training "
                    "vocabulary for consistent token ids",
                    stacklevel=2,
                )
            vocab = Vocabulary.build([c for s in samples for c in s.captions])
    return DatasetManifest(samples=samples, vocab=vocab, split=split, root=root)


def validate_disjoint_splits(manifests: list[DatasetManifest]) -> None:
    """Check that no image appears in more than one split."""
    seen: dict[str, str] = {}
    for m in manifests:
        for s in m.samples:
            if s.image_path in seen and seen[s.image_path] != m.split:
                raise ManifestError(
                    f"{s.image_path} appears in both {seen[s.image_path]!r} and {m.split!r} splits"
                )
            seen[s.image_path] = m.split


def preprocess_geometry(
    raw: Image.Image, target: int = 256, resample=Image.BILINEAR
) -> Image.Image:
    """Resize so the minimum side equals target, then center-crop to square.

    Kept separate from the value scaling so callers needing the uint8
    pixels at processed resolution (e.g. hard compositing) avoid a float
    round trip. Masks reuse this with nearest-neighbor resampling.
    """
    img = raw if raw.mode in ("RGB", "L") else raw.convert("RGB")
    w0, h0 = img.size
    if min(w0, h0) < 1:
        raise ValueError("degenerate image size")
    scale = target / min(w0, h0)
    w1 = max(target, round(w0 * scale))
    h1 = max(target, round(h0 * scale))
    if (w1, h1) != (w0, h0):
        img = img.resize((w1, h1), resample)
    left = (w1 - target) // 2
    top = (h1 - target) // 2
    return img.crop((left, top, left + target, top + target))


def preprocess_image(raw: Image.Image, target: int = 256) -> torch.Tensor:
    """Resize so the minimum side equals target, center-crop, scale to [-1, 1].

    Returns a float32 tensor of shape [3, target, target].
    """
    img = preprocess_geometry(raw.convert("RGB"), target)
    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def load_image(path: str | Path, target: int = 256) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            return preprocess_image(img, target=target)
    except (OSError, SyntaxError) as e:
        raise ManifestError(f"cannot decode image {path}: {e}") from e


def rescale_boxes(
    boxes: list[tuple[float, float, float, float]],
    orig_w: int,
    orig_h: int,
    target: int,
) -> list[tuple[float, float, float, float]]:
    """Map pixel boxes through the resize+center-crop of preprocess_image.

    Boxes are rescaled with the image first, then clipped to the crop;
    boxes left without area are dropped.
    """
    scale = target / min(orig_w, orig_h)
    w1 = max(target, round(orig_w * scale))
    h1 = max(target, round(orig_h * scale))
    left = (w1 - target) // 2
    top = (h1 - target) // 2
    out = []
    for x, y, w, h in boxes:
        x0 = x * scale - left
        y0 = y * scale - top
        x1 = x0 + w * scale
        y1 = y0 + h * scale
        x0, x1 = max(0.0, x0), min(float(target), x1)
        y0, y1 = max(0.0, y0), min(float(target), y1)
        if x1 - x0 > 0 and y1 - y0 > 0:
            out.append((x0, y0, x1 - x0, y1 - y0))
    return out


def center_mask(
    H: int,
    W: int,
    area_fraction: float = 0.5,
    side_fraction: float | None = None,
) -> torch.Tensor:
    """Square mask of zeros centered in the image, covering area_fraction of it.

    The side is floor(H * sqrt(area_fraction)); for the square protocol
    (H == W) the zero area is within 1% of the requested fraction.
    side_fraction switches to the side-based convention instead (side =
    floor(H * side_fraction), so 0.5 occludes 25% of the area).
    """
    if side_fraction is not None:
        if not 0.0 < side_fraction < 1.0:
            raise MaskError(f"side_fraction must be in (0, 1), got {side_fraction}")
        side = math.floor(H * side_fraction)
    else:
        if not 0.0 < area_fraction < 1.0:
            raise MaskError(f"area_fraction must be in (0, 1), got {area_fraction}")
        side = math.floor(H * math.sqrt(area_fraction))
    if side < 1:
        raise MaskError(f"mask side is 0 for H={H}, fraction={area_fraction}: all-visible mask")
    if side >= H or side >= W:
        raise MaskError(f"mask side {side} does not fit inside {H}x{W}")
    mask = torch.ones(H, W)
    top = (H - side) // 2
    left = (W - side) // 2
    mask[top : top + side, left : left + side] = 0.0
    return mask


def object_mask(
    boxes: list[tuple[float, float, float, float]],
    H: int,
    W: int,
) -> torch.Tensor:
    """Mask out the largest-area box (ties broken by first occurrence).

    Boxes are clipped to the image bounds before comparing areas.
    """
    if not boxes:
        raise NoBoxesError("no boxes available; fall back to center_mask explicitly")
    best = None
    best_area = -1.0
    for x, y, w, h in boxes:
        x0 = min(max(x, 0.0), float(W))
        y0 = min(max(y, 0.0), float(H))
        x1 = min(max(x + w, 0.0), float(W))
        y1 = min(max(y + h, 0.0), float(H))
        area = max(0.0, x1 - x0) * max(0.0, y1 - y0)
        if area > best_area:
            best_area = area
            best = (x0, y0, x1, y1)
    if best is None or best_area <= 0:
        raise NoBoxesError("all boxes clip to zero area")
    x0, y0, x1, y1 = best
    r0, r1 = int(math.floor(y0)), int(math.ceil(y1))
    c0, c1 = int(math.floor(x0)), int(math.ceil(x1))
    r1 = max(r1, r0 + 1)
    c1 = max(c1, c0 + 1)
    mask = torch.ones(H, W)
    mask[r0:r1, c0:c1] = 0.0
    if mask.min() >= 1.0 or mask.max() <= 0.0:
        raise MaskError("object mask is degenerate (all-visible or all-masked)")
    return mask


def validate_mask(mask: torch.Tensor, training: bool = False) -> None:
    """Check the {0,1}-valued contract; training masks need both values present."""
    vals = torch.unique(mask)
    if not all(v in (0.0, 1.0) for v in vals.tolist()):
        raise MaskError(f"mask holds values outside {{0,1}}: {vals.tolist()[:8]}")
    if training and (0.0 not in vals.tolist() or 1.0 not in vals.tolist()):
        raise MaskError("training mask must contain masked and visible pixels")


def apply_mask(image: torch.Tensor, mask: torch.Tensor) -> MaskedPair:
    """Split an image into its visible part and masked complement.

    i_m keeps visible pixels, i_c keeps masked pixels; their sum is the
    original image exactly.
    """
    if image.shape[-2:] != mask.shape:
        raise MaskError(f"mask shape {tuple(mask.shape)} does not match image {tuple(image.shape)}")
    validate_mask(mask)
    if mask.max() <= 0.0:
        raise MaskError("all-zeros mask leaves no visible context")
    m = mask.to(image.dtype)
    return MaskedPair(i_m=image * m, i_c=image * (1.0 - m), mask=mask)


def build_mask(
    mode: str,
    size: int,
    boxes: list[tuple[float, float, float, float]] | None = None,
    area_fraction: float = 0.5,
) -> torch.Tensor:
    """Construct the evaluation-protocol mask for one image.

    mode 'center' ignores boxes; mode 'object' requires at least one box
    (raises NoBoxesError otherwise, the caller chooses the fallback).
    """
    if mode == "center":
        return center_mask(size, size, area_fraction)
    if mode == "object":
        return object_mask(boxes or [], size, size)
    raise ValueError(f"unknown mask mode {mode!r}")
