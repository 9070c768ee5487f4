"""Image and text encoders shared by both processing paths.

The image encoder is a 7-block residual CNN; the top block's output is the
high-level map v_h, the block before it the low-level map v_l at twice the
resolution. The text encoder is a bidirectional GRU (hidden size 256) whose
directions are summed, giving per-word features t_wrd and a sentence
feature t_sent of width 256.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

TEXT_DIM = 256


class EncodeError(Exception):
    pass


class ResBlock(nn.Module):
    """Pre-activation residual block with optional stride-2 downsampling."""

    def __init__(self, c_in: int, c_out: int, stride: int = 1, spectral: bool = False):
        super().__init__()
        wrap = nn.utils.spectral_norm if spectral else (lambda m: m)
        self.conv1 = wrap(nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1))
        self.conv2 = wrap(nn.Conv2d(c_out, c_out, 3, stride=1, padding=1))
        self.norm1 = nn.InstanceNorm2d(c_out, affine=False)
        self.norm2 = nn.InstanceNorm2d(c_out, affine=False)
        if stride != 1 or c_in != c_out:
            self.skip = wrap(nn.Conv2d(c_in, c_out, 1, stride=stride))
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        h = F.leaky_relu(self.norm1(self.conv1(x)), 0.2)
        h = self.norm2(self.conv2(h))
        return F.leaky_relu(h + self.skip(x), 0.2)


def encoder_strides(down_factor: int) -> list[int]:
    """Stride schedule for the 7 residual blocks.

    The last block always downsamples so v_l (block 6 output) sits at twice
    the resolution of v_h (block 7 output).
    """
    n_down = {32: 5, 16: 4, 8: 3}.get(down_factor)
    if n_down is None:
        raise ValueError(f"unsupported downsampling factor {down_factor}")
    strides = [1] * 7
    strides[6] = 2
    for i in range(n_down - 1):
        strides[i] = 2
    return strides


class ImageEncoder(nn.Module):
    """7-block residual encoder returning (v_h, v_l) feature maps."""

    def __init__(self, image_size: int = 256, feat_size: int = 8, base: int = 32):
        super().__init__()
        if image_size % feat_size != 0:
            raise ValueError("image_size must be divisible by feat_size")
        self.image_size = image_size
        self.feat_size = feat_size
        self.c_low = base * 4
        self.c_high = base * 8
        strides = encoder_strides(image_size // feat_size)
        chans = [3, base, base * 2, base * 2, base * 4, base * 4, self.c_low, self.c_high]
        self.blocks = nn.ModuleList(
            ResBlock(chans[i], chans[i + 1], stride=strides[i]) for i in range(7)
        )

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if image.dim() != 4 or image.shape[1] != 3 or image.shape[-2:] != (self.image_size, self.image_size):
            raise EncodeError(
                f"expected [B, 3, {self.image_size}, {self.image_size}] input, got {tuple(image.shape)}"
            )
        x = image
        v_l = None
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i == 5:
                v_l = x
        return x, v_l


class TextEncoder(nn.Module):
    """Bidirectional GRU over token embeddings, directions summed to width 256.

    The embedding table lives outside this module so it can be shared with
    the image-text matching networks and checkpointed on its own.
    """

    def __init__(self, embed_dim: int = TEXT_DIM, hidden: int = TEXT_DIM):
        super().__init__()
        self.gru = nn.GRU(embed_dim, hidden, batch_first=True, bidirectional=True)
        self.hidden = hidden

    def forward(
        self,
        embedded: torch.Tensor,  # [B, L_max, embed_dim]
        lengths: torch.Tensor,  # [B] int64
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if (lengths < 1).any():
            raise EncodeError("all-pad caption: every sequence needs at least one token")
        packed = pack_padded_sequence(
            embedded, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, h_n = self.gru(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=embedded.shape[1])
        # sum forward/backward halves; padded rows stay zero from packing
        t_wrd = out[..., : self.hidden] + out[..., self.hidden :]
        t_sent = h_n[0] + h_n[1]
        return t_wrd, t_sent
