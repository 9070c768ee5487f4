"""Full dual-path inpainting model.

One image encoder, one text encoder and one decoder are shared by both
paths; only the fusion networks and the two attention projections are
path-specific. The auxiliary path exists for training only: it encodes the
complement image, and its posterior combines with the inpainting path's
hidden map (and low-level features) so the two latent representations stay
homogeneous.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from .attention import DualAttention
from .encoders import ImageEncoder, TextEncoder
from .generator import Critic, Decoder, FusionNet, sample_latent
from .losses import RegionEncoder


@dataclass
class ModelConfig:
    image_size: int = 256
    base_channels: int = 32
    text_dim: int = 256
    latent_dim: int = 256
    max_text_len: int = 128
    attn_axis: str = "positions"
    no_maxpool: bool = False
    no_dual_attention: bool = False

    @property
    def feat_size(self) -> int:
        # keep the top grid at least 4x4 so a 50%-area center mask cannot
        # swallow every attention position
        return max(4, self.image_size // 32)

    @property
    def n_upsample(self) -> int:
        factor = self.image_size // self.feat_size
        return {32: 5, 16: 4, 8: 3}[factor]

    def to_dict(self) -> dict:
        return asdict(self)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


class TextGuidedInpainter(nn.Module):
    def __init__(self, config: ModelConfig, vocab_size: int):
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        base = config.base_channels
        self.c_high = base * 8
        self.c_hidden = self.c_high + 2 * config.text_dim

        self.token_embeddings = nn.Embedding(vocab_size, config.text_dim, padding_idx=0)
        self.text_encoder = TextEncoder(config.text_dim, config.text_dim)
        self.image_encoder = ImageEncoder(config.image_size, config.feat_size, base)
        self.attn = DualAttention(self.c_high, config.text_dim, axis=config.attn_axis)
        self.fusion_inpaint = FusionNet(self.c_hidden, config.latent_dim, width=self.c_high)
        self.fusion_aux = FusionNet(self.c_hidden, config.latent_dim, width=self.c_high)
        self.decoder = Decoder(
            self.c_hidden,
            config.latent_dim,
            c_low=base * 4,
            base=base,
            n_upsample=config.n_upsample,
        )
        self.d1 = Critic(base)
        self.d2 = Critic(base)
        self.matcher = RegionEncoder(base, config.text_dim)

    # -- text ---------------------------------------------------------------

    def encode_text(self, tokens: torch.Tensor, lengths: torch.Tensor):
        return self.text_encoder(self.token_embeddings(tokens), lengths)

    # -- hidden construction --------------------------------------------------

    def _hidden(self, v_h: torch.Tensor, t_e: torch.Tensor, t_sent: torch.Tensor) -> torch.Tensor:
        # channel order: [visual ; attended words ; sentence broadcast]
        B, _, h, w = v_h.shape
        sent = t_sent[:, :, None, None].expand(B, t_sent.shape[1], h, w)
        return torch.cat([v_h, t_e, sent], dim=1)

    def _sent_broadcast(self, t_sent: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        B, _, h, w = like.shape
        return t_sent[:, :, None, None].expand(B, t_sent.shape[1], h, w)

    # -- paths ----------------------------------------------------------------

    def inpaint_path(
        self,
        i_m: torch.Tensor,
        mask: torch.Tensor,
        t_wrd: torch.Tensor,
        t_sent: torch.Tensor,
        lengths: torch.Tensor,
    ) -> dict:
        v_h, v_l = self.image_encoder(i_m)
        if self.config.no_dual_attention:
            t_e = self._sent_broadcast(t_sent, v_h)
            betas = []
        else:
            t_e, betas = self.attn.forward_inpaint(
                v_h, t_wrd, lengths, mask, maxpool=not self.config.no_maxpool
            )
        h = self._hidden(v_h, t_e, t_sent)
        mu, log_var = self.fusion_inpaint(h)
        return {"v_h": v_h, "v_l": v_l, "h": h, "mu": mu, "log_var": log_var, "betas": betas}

    def aux_path(
        self,
        i_c: torch.Tensor,
        mask: torch.Tensor,
        t_wrd: torch.Tensor,
        t_sent: torch.Tensor,
        lengths: torch.Tensor,
    ) -> dict:
        v_h_aux, v_l_aux = self.image_encoder(i_c)
        if self.config.no_dual_attention:
            t_e = self._sent_broadcast(t_sent, v_h_aux)
            betas = []
        else:
            t_e, betas = self.attn.forward_aux(v_h_aux, t_wrd, lengths, mask)
        h_aux = self._hidden(v_h_aux, t_e, t_sent)
        mu, log_var = self.fusion_aux(h_aux)
        return {
            "v_h": v_h_aux,
            "v_l": v_l_aux,
            "h": h_aux,
            "mu": mu,
            "log_var": log_var,
            "betas": betas,
        }

    def forward_train(
        self,
        image: torch.Tensor,  # [B, 3, S, S] in [-1, 1]
        mask: torch.Tensor,  # [B, S, S] in {0, 1}
        tokens: torch.Tensor,  # [B, L_max]
        lengths: torch.Tensor,  # [B]
        generator: torch.Generator | None = None,
        deterministic: bool = False,
    ) -> dict:
        """Run both paths and decode both images (training only)."""
        if not self.training:
            raise RuntimeError("dual-path forward is a training-mode operation; use infer()")
        m = mask.unsqueeze(1).to(image.dtype)
        i_m = image * m
        i_c = image * (1.0 - m)
        t_wrd, t_sent = self.encode_text(tokens, lengths)

        inp = self.inpaint_path(i_m, mask, t_wrd, t_sent, lengths)
        aux = self.aux_path(i_c, mask, t_wrd, t_sent, lengths)

        z = sample_latent(inp["mu"], inp["log_var"], deterministic, generator)
        z_aux = sample_latent(aux["mu"], aux["log_var"], deterministic, generator)
        r = self.decoder.combine(inp["h"], z)
        # the auxiliary latent rides on the inpainting path's hidden map and
        # low-level features, keeping the two representations homogeneous
        r_aux = self.decoder.combine(inp["h"], z_aux)
        i_g = self.decoder(r, inp["v_l"])
        i_g_aux = self.decoder(r_aux, inp["v_l"])

        return {
            "i_m": i_m,
            "i_c": i_c,
            "i_g": i_g,
            "i_g_aux": i_g_aux,
            "mu": inp["mu"],
            "log_var": inp["log_var"],
            "mu_aux": aux["mu"],
            "log_var_aux": aux["log_var"],
            "t_wrd": t_wrd,
            "t_sent": t_sent,
            "betas": inp["betas"],
        }

    @torch.no_grad()
    def infer(
        self,
        i_m: torch.Tensor,
        mask: torch.Tensor,
        tokens: torch.Tensor,
        lengths: torch.Tensor,
        deterministic: bool = True,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Inpainting-path-only forward; the auxiliary path is never touched."""
        t_wrd, t_sent = self.encode_text(tokens, lengths)
        inp = self.inpaint_path(i_m, mask, t_wrd, t_sent, lengths)
        z = sample_latent(inp["mu"], inp["log_var"], deterministic, generator)
        r = self.decoder.combine(inp["h"], z)
        return self.decoder(r, inp["v_l"])

    @torch.no_grad()
    def attention_maps(
        self,
        i_m: torch.Tensor,
        mask: torch.Tensor,
        tokens: torch.Tensor,
        lengths: torch.Tensor,
    ) -> list[torch.Tensor]:
        """Inpainting-path position weights per word, for inspection."""
        t_wrd, t_sent = self.encode_text(tokens, lengths)
        return self.inpaint_path(i_m, mask, t_wrd, t_sent, lengths)["betas"]

    # -- parameter bookkeeping --------------------------------------------------

    def generator_parameters(self):
        mods = [
            self.token_embeddings,
            self.text_encoder,
            self.image_encoder,
            self.attn,
            self.fusion_inpaint,
            self.fusion_aux,
            self.decoder,
        ]
        for m in mods:
            yield from m.parameters()

    def critic_parameters(self):
        yield from self.d1.parameters()
        yield from self.d2.parameters()

    def matcher_parameters(self):
        yield from self.matcher.parameters()


def build_model(config: ModelConfig, vocab_size: int) -> TextGuidedInpainter:
    return TextGuidedInpainter(config, vocab_size)
