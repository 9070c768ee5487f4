"""Reciprocal image-to-word attention over the two processing paths.

The inpainting path scores each feature position against each word with the
negated projected dot product plus an additive mask (-inf at masked
positions), so softmax over positions concentrates on words describing what
is missing. The auxiliary path multiplies the plain dot product by the
binary mask instead. Attended word mixtures on the inpainting path are
max-pooled over positions and replicated, since the masked region's
location carries no text features of its own.

Functional ops work on [N, C] position features and [L, D] word features
and preserve the input dtype, so they can run in float64 for verification.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

NEG_INF = -1e9


class AttentionError(Exception):
    pass


def downsample_mask(mask: torch.Tensor, target_hw: tuple[int, int]) -> torch.Tensor:
    """Block-reduce a pixel mask to a feature-grid mask.

    A feature cell counts as visible (1) iff at least 50% of its pixel
    block is visible.
    """
    H, W = mask.shape
    h, w = target_hw
    if H % h != 0 or W % w != 0:
        raise AttentionError(f"mask {H}x{W} not divisible by target {h}x{w}")
    blocks = mask.reshape(h, H // h, w, W // w)
    frac = blocks.mean(dim=(1, 3))
    return (frac >= 0.5).to(mask.dtype)


def aux_attention_logits(
    proj_feats: torch.Tensor,  # [N, D] projected auxiliary-path features
    t_wrd: torch.Tensor,  # [L, D]
    mask_mult: torch.Tensor,  # [N] in {0, 1}
) -> torch.Tensor:
    if proj_feats.shape[1] != t_wrd.shape[1]:
        raise AttentionError(
            f"feature width {proj_feats.shape[1]} != word width {t_wrd.shape[1]}"
        )
    return mask_mult[:, None] * (proj_feats @ t_wrd.T)


def inpaint_attention_logits(
    proj_feats: torch.Tensor,  # [N, D]
    t_wrd: torch.Tensor,  # [L, D]
    mask_add: torch.Tensor,  # [N], 0 at visible positions, NEG_INF at masked
) -> torch.Tensor:
    if proj_feats.shape[1] != t_wrd.shape[1]:
        raise AttentionError(
            f"feature width {proj_feats.shape[1]} != word width {t_wrd.shape[1]}"
        )
    return -(proj_feats @ t_wrd.T) + mask_add[:, None]


def attention_weights(logits: torch.Tensor, axis: str = "positions") -> torch.Tensor:
    """Softmax of the [N, L] score map.

    axis='positions' normalizes over positions per word (so each word
    column sums to 1); axis='words' is the conventional alternative kept
    for ablations. A word column with no finite logit (every position
    masked) is a normalization error; under the words axis a fully masked
    position's row softmaxes to a uniform mixture, which is well defined.
    """
    if axis == "positions":
        if (logits.max(dim=0).values <= NEG_INF / 2).any():
            raise AttentionError("a word column has no finite logit (all positions masked)")
        return torch.softmax(logits, dim=0)
    if axis == "words":
        return torch.softmax(logits, dim=1)
    raise ValueError(f"unknown attention axis {axis!r}")


def attend_words(beta: torch.Tensor, t_wrd: torch.Tensor) -> torch.Tensor:
    """Weighted word mixture per position: t_e[i] = sum_j beta[i, j] * t_wrd[j]."""
    if beta.shape[1] != t_wrd.shape[0]:
        raise AttentionError(f"beta has {beta.shape[1]} words, t_wrd has {t_wrd.shape[0]}")
    return beta @ t_wrd


def pool_and_replicate(t_e: torch.Tensor) -> torch.Tensor:
    """Coordinatewise max over positions, broadcast back to every position."""
    pooled = t_e.max(dim=0).values
    return pooled.expand_as(t_e).clone()


def mask_to_additive(mask_grid: torch.Tensor) -> torch.Tensor:
    """{0,1} grid -> additive mask: 0 where visible, NEG_INF where masked."""
    return (mask_grid - 1.0) * -NEG_INF


def inpaint_attend(
    proj_feats: torch.Tensor,
    t_wrd: torch.Tensor,
    mask_grid: torch.Tensor,  # [N] in {0, 1}
    axis: str = "positions",
    maxpool: bool = True,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Full inpainting-path pipeline: logits -> weights -> mixture -> pool."""
    s = inpaint_attention_logits(proj_feats, t_wrd, mask_to_additive(mask_grid))
    beta = attention_weights(s, axis=axis)
    t_e = attend_words(beta, t_wrd)
    if maxpool:
        t_e = pool_and_replicate(t_e)
    return t_e, beta


def aux_attend(
    proj_feats: torch.Tensor,
    t_wrd: torch.Tensor,
    mask_grid: torch.Tensor,
    axis: str = "positions",
) -> tuple[torch.Tensor, torch.Tensor]:
    """Full auxiliary-path pipeline (no pooling: features stay positional)."""
    s = aux_attention_logits(proj_feats, t_wrd, mask_grid)
    beta = attention_weights(s, axis=axis)
    t_e = attend_words(beta, t_wrd)
    return t_e, beta


class DualAttention(nn.Module):
    """Per-path 1x1 projections plus the reciprocal attention pipelines.

    The projections are not shared between paths. Padded word rows must be
    sliced off before the call; the module loops over the batch so each
    sample attends over exactly its own words.
    """

    def __init__(self, c_high: int, text_dim: int = 256, axis: str = "positions"):
        super().__init__()
        self.proj_inpaint = nn.Linear(c_high, text_dim, bias=False)
        self.proj_aux = nn.Linear(c_high, text_dim, bias=False)
        self.axis = axis

    @staticmethod
    def _flatten(v_h: torch.Tensor) -> torch.Tensor:
        # [C, h, w] -> [N, C] with N = h*w, row-major positions
        return v_h.flatten(1).T

    def forward_inpaint(
        self,
        v_h: torch.Tensor,  # [B, C, h, w]
        t_wrd: torch.Tensor,  # [B, L_max, D]
        lengths: torch.Tensor,  # [B]
        mask: torch.Tensor,  # [B, H, W] pixel mask
        maxpool: bool = True,
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        B, C, h, w = v_h.shape
        outs, betas = [], []
        for b in range(B):
            grid = downsample_mask(mask[b], (h, w)).flatten()
            feats = self.proj_inpaint(self._flatten(v_h[b]))
            words = t_wrd[b, : int(lengths[b])]
            t_e, beta = inpaint_attend(feats, words, grid, axis=self.axis, maxpool=maxpool)
            outs.append(t_e.T.reshape(-1, h, w))
            betas.append(beta)
        return torch.stack(outs), betas

    def forward_aux(
        self,
        v_h_aux: torch.Tensor,
        t_wrd: torch.Tensor,
        lengths: torch.Tensor,
        mask: torch.Tensor,
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        B, C, h, w = v_h_aux.shape
        outs, betas = [], []
        for b in range(B):
            grid = downsample_mask(mask[b], (h, w)).flatten()
            feats = self.proj_aux(self._flatten(v_h_aux[b]))
            words = t_wrd[b, : int(lengths[b])]
            t_e, beta = aux_attend(feats, words, grid, axis=self.axis)
            outs.append(t_e.T.reshape(-1, h, w))
            betas.append(beta)
        return torch.stack(outs), betas

    def save_beta_maps(self, betas: list[torch.Tensor], h: int, w: int, out_dir) -> list[str]:
        """Debug dump: per-word position weights as grayscale images."""
        from pathlib import Path

        import numpy as np
        from PIL import Image

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for b, beta in enumerate(betas):
            for j in range(beta.shape[1]):
                m = beta[:, j].reshape(h, w).detach().cpu().numpy()
                m = m / max(m.max(), 1e-12)
                img = Image.fromarray((m * 255).astype(np.uint8), mode="L")
                p = out_dir / f"beta_b{b}_w{j}.png"
                img.save(p)
                paths.append(str(p))
        return paths
