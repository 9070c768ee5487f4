"""Deterministic desk-scale dataset: colored blobs with color-naming captions.

Every image shares the same gray background and hides its blob entirely
inside the 50% center square, so a center-masked input carries no color
information and the text is the only source for it. That makes the toy set
a usable probe for text-conditioned training.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .data import Vocabulary

COLORS = {
    "red": (220, 40, 40),
    "blue": (40, 60, 220),
    "green": (40, 180, 60),
    "yellow": (230, 220, 50),
    "purple": (160, 60, 200),
    "orange": (240, 140, 30),
    "white": (245, 245, 245),
    "black": (20, 20, 20),
    "pink": (240, 130, 180),
    "brown": (140, 90, 40),
}
BACKGROUND = (150, 150, 150)


def toy_captions(color: str) -> list[str]:
    return [
        f"a {color} bird on a gray background",
        f"the bird is {color} with a {color} belly",
    ]


def make_toy_dataset(
    out_dir: str | Path,
    n: int = 8,
    size: int = 64,
    seed: int = 0,
    jitter: bool = True,
) -> Path:
    """Write n images plus a manifest and vocabulary sidecar; returns manifest path.

    Blob shape and position vary per image (but never the color-caption
    pairing), so the hidden content cannot be summarized by one mean blob:
    position must travel through the latent and color through the caption.
    jitter=False pins every blob to one centered shape for controlled
    experiments.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = list(COLORS)
    lines = []
    captions_all = []
    # the 50%-area center square on a size x size image spans
    # [(size - s)//2, (size - s)//2 + s) with s = floor(size / sqrt(2));
    # blobs must fit strictly inside it so the center mask hides them fully
    half_side = int(size / 2**0.5) // 2 - 2
    for i in range(n):
        color_name = names[i % len(names)]
        img = Image.new("RGB", (size, size), BACKGROUND)
        draw = ImageDraw.Draw(img)
        if jitter:
            rx = int(rng.integers(size // 5, half_side - size // 16 + 1))
            ry = int(rng.integers(size // 6, half_side - size // 12 + 1))
            max_dx = half_side - rx - 1
            max_dy = half_side - ry - 1
            dx = int(rng.integers(-max_dx, max_dx + 1)) if max_dx > 0 else 0
            dy = int(rng.integers(-max_dy, max_dy + 1)) if max_dy > 0 else 0
        else:
            rx, ry = half_side, half_side - size // 12
            dx = dy = 0
        cx, cy = size // 2 + dx, size // 2 + dy
        draw.ellipse((cx - rx, cy - ry, cx + rx, cy + ry), fill=COLORS[color_name])
        fname = f"img_{i:03d}.png"
        img.save(out_dir / fname)
        caps = toy_captions(color_name)
        captions_all.extend(caps)
        box = [cx - rx, cy - ry, 2 * rx, 2 * ry]
        lines.append(f"{fname}\t{json.dumps(caps)}\t{json.dumps([box])}")
    manifest = out_dir / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    Vocabulary.build(captions_all).save(out_dir / "manifest.tsv.vocab")
    return manifest
