"""Latent fusion, sampling, decoding and the adversarial critics.

Visual and text features are concatenated channelwise into a multimodal
hidden map h, a path-specific 5-block spectral-normalized fusion network
predicts a per-position Gaussian (mu, log_var), and the sampled latent is
projected and added back onto h before a shared 5-block upsampling decoder
renders the image. Low-level encoder features re-enter the decoder through
a short+long term attention fusion so visible regions can be reconstructed
rather than predicted.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoders import ResBlock


class DivergenceError(Exception):
    """Non-finite values appeared in a network output."""

    def __init__(self, component: str, step: int | None = None):
        self.component = component
        self.step = step
        ctx = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite values in {component}{ctx}")


def _check_finite(x: torch.Tensor, component: str, step: int | None = None) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise DivergenceError(component, step)
    return x


class FusionNet(nn.Module):
    """5 spectral-normalized residual blocks mapping h to (mu, log_var).

    Predicting log-variance keeps sigma positive by construction. The two
    paths each own one of these nets; weights are never shared across them.
    """

    def __init__(self, c_in: int, c_latent: int, width: int = 256):
        super().__init__()
        self.c_latent = c_latent
        chans = [c_in, width, width, width, width, 2 * c_latent]
        self.blocks = nn.Sequential(
            *[ResBlock(chans[i], chans[i + 1], stride=1, spectral=True) for i in range(5)]
        )

    def forward(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.blocks(h)
        mu, log_var = out.chunk(2, dim=1)
        # keep sigma in a sane band so KL terms and sampling stay finite
        log_var = torch.clamp(log_var, -10.0, 10.0)
        _check_finite(mu, "fusion mu")
        _check_finite(log_var, "fusion log_var")
        return mu, log_var


def sample_latent(
    mu: torch.Tensor,
    log_var: torch.Tensor,
    deterministic: bool = False,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Reparameterized draw z = mu + sigma * eps; z = mu when deterministic."""
    if deterministic:
        return mu
    sigma = torch.exp(0.5 * log_var)
    eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
    return mu + sigma * eps


class ShortLongAttention(nn.Module):
    """Self-attention fusing decoder (short term) and encoder (long term) maps.

    A positionwise weight map is computed between projected decoder queries
    and encoder keys, applied to both feature sets, and the weighted maps
    are concatenated for the decoder to consume.
    """

    def __init__(self, c_dec: int, c_enc: int, c_key: int = 64):
        super().__init__()
        self.q = nn.Conv2d(c_dec, c_key, 1, bias=False)
        self.k = nn.Conv2d(c_enc, c_key, 1, bias=False)
        self.c_out = c_dec + c_enc

    def weight_map(self, dec: torch.Tensor, enc: torch.Tensor) -> torch.Tensor:
        B, _, h, w = dec.shape
        q = self.q(dec).flatten(2).transpose(1, 2)  # [B, N, c_key]
        k = self.k(enc).flatten(2)  # [B, c_key, N]
        return torch.softmax(q @ k, dim=2)  # rows over key positions sum to 1

    def forward(self, dec: torch.Tensor, enc: torch.Tensor) -> torch.Tensor:
        if dec.shape[-2:] != enc.shape[-2:]:
            raise ValueError(
                f"decoder {tuple(dec.shape[-2:])} and encoder {tuple(enc.shape[-2:])} grids differ"
            )
        B, _, h, w = dec.shape
        attn = self.weight_map(dec, enc)  # [B, N, N]
        dec_flat = dec.flatten(2).transpose(1, 2)
        enc_flat = enc.flatten(2).transpose(1, 2)
        w_dec = (attn @ dec_flat).transpose(1, 2).reshape(B, -1, h, w)
        w_enc = (attn @ enc_flat).transpose(1, 2).reshape(B, -1, h, w)
        return torch.cat([w_dec, w_enc], dim=1)


class UpBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, upsample: bool):
        super().__init__()
        self.upsample = upsample
        self.block = ResBlock(c_in, c_out, stride=1)

    def forward(self, x):
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        return self.block(x)


class Decoder(nn.Module):
    """Shared 5-block upsampling generator with the low-level highway.

    The latent projection (1x1 conv) is part of the decoder so both paths
    combine their sampled latent with the hidden map identically.
    """

    def __init__(self, c_hidden: int, c_latent: int, c_low: int, base: int, n_upsample: int):
        super().__init__()
        if not 1 <= n_upsample <= 5:
            raise ValueError("n_upsample must be in 1..5")
        self.z_proj = nn.Conv2d(c_latent, c_hidden, 1)
        self.fuse_in = nn.Conv2d(c_hidden, base * 8, 3, padding=1)
        ups = [i < n_upsample for i in range(5)]
        chans = [base * 8, base * 4, base * 2, base, base, base]
        self.up_blocks = nn.ModuleList(
            UpBlock(chans[i], chans[i + 1], upsample=ups[i]) for i in range(5)
        )
        self.skip_attn = ShortLongAttention(c_dec=base * 4, c_enc=c_low)
        self.skip_fuse = nn.Conv2d(base * 4 + c_low, base * 4, 3, padding=1)
        self.out_conv = nn.Conv2d(base, 3, 3, padding=1)

    def combine(self, h: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Residual combination r = h + project(z)."""
        return h + self.z_proj(z)

    def forward(self, r: torch.Tensor, v_l: torch.Tensor) -> torch.Tensor:
        x = F.leaky_relu(self.fuse_in(r), 0.2)
        for i, block in enumerate(self.up_blocks):
            x = block(x)
            if i == 0:
                # highway: inject low-level features at their native resolution
                x = F.leaky_relu(self.skip_fuse(self.skip_attn(x, v_l)), 0.2)
        img = torch.tanh(self.out_conv(x))
        return _check_finite(img, "decoder output")


class Critic(nn.Module):
    """5-block residual critic; trunk features for matching, scalar for realism."""

    def __init__(self, base: int = 32):
        super().__init__()
        chans = [3, base, base * 2, base * 4, base * 4, base * 8]
        self.blocks = nn.Sequential(
            *[ResBlock(chans[i], chans[i + 1], stride=2, spectral=True) for i in range(5)]
        )
        self.head = nn.Linear(base * 8, 1)

    def features(self, image: torch.Tensor) -> torch.Tensor:
        x = self.blocks(image)
        return x.mean(dim=(2, 3))

    def score(self, image: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(image)).squeeze(1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.score(image)


def discriminate(critic_d1: Critic, critic_d2: Critic, image: torch.Tensor, which: str):
    """Route to the feature critic (D1) or the realism scorer (D2)."""
    if which == "D1_features":
        return critic_d1.features(image)
    if which == "D2_score":
        return critic_d2.score(image)
    raise ValueError(f"unknown critic query {which!r}")


def composite_output(
    i_g: torch.Tensor,
    i_m: torch.Tensor,
    mask: torch.Tensor,
    mode: str = "none",
) -> torch.Tensor:
    """Optionally paste the visible input pixels over the generated image.

    'none' returns the raw generated image; 'hard' keeps input pixels
    wherever the mask is 1.
    """
    if mode == "none":
        return i_g
    if mode == "hard":
        if i_g.shape != i_m.shape or i_g.shape[-2:] != mask.shape[-2:]:
            raise ValueError("image/mask shapes do not match")
        m = mask.to(i_g.dtype)  # [H, W] or [B, H, W]; broadcasts over channels
        if m.dim() == 3:
            m = m.unsqueeze(1)
        return m * i_m + (1.0 - m) * i_g
    raise ValueError(f"unknown composite mode {mode!r}")
